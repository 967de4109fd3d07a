"""End-to-end acceptance gate.

One test per shipped guarantee.  Each test pins the stated numeric
tolerance and its wall-clock budget, so `pytest -v tests/test_acceptance.py`
reads as a pass/fail checklist of everything the package promises.
"""
import time

import numpy as np
import pytest
from scipy.stats import spearmanr

from swarmpref.configs import (FeatureConfig, FormationConfig, GpConfig,
                               MissionConfig, RegionConfig)
from swarmpref.evaluation import adaptation_experiment, transfer_experiment
from swarmpref.flocking import FlockingTerms, FlockingWeights, compose_velocity
from swarmpref.formation import fit_formation, fit_with_fallback
from swarmpref.mission import run_mission
from swarmpref.preference_gp import (denormalize_targets, elbo, elbo_grads,
                                     exact_gp_predict, fit_variational_exact,
                                     init_state, predict, train)
from swarmpref.prototypes import default_prototypes
from swarmpref.safe_region import (Polytope, inflate_region,
                                   max_volume_ellipsoid)
from tests.test_flocking import FLOCKING_ORACLE
from tests.test_formation import (box_region, brute_pair_fit, pair_prototype,
                                  slots_inside, unconstrained_optimum)
from tests.test_gp import RANGES, generic_state, small_exact_setup


# ---------------------------------------------------- 1. flocking controller

def test_01_flocking_terms_match_hand_values_and_speed_cap():
    t0 = time.monotonic()
    from swarmpref.flocking import (v_ali, v_att, v_flock, v_fmt, v_hei,
                                    v_rep, v_saf)
    Z = np.zeros(3)

    def check(name, got):
        assert np.allclose(got, FLOCKING_ORACLE[name], atol=1e-9, rtol=0.0), name

    check("flock_far", v_flock(np.array([1.0, 0, 0]), Z, 2.0))
    check("flock_coincident", v_flock(np.full(3, 0.5), np.full(3, 0.5), 2.0))
    check("rep_unit", v_rep(Z, np.array([1.0, 0, 0]), 2.0))
    check("rep_boundary", v_rep(Z, np.array([2.0, 0, 0]), 2.0))
    check("rep_outside", v_rep(Z, np.array([2.5, 0, 0]), 2.0))
    check("att_basic", v_att(Z, np.array([3.0, 0, 0]), 2.0))
    check("att_deadzone", v_att(Z, np.array([2.05, 0, 0]), 2.0))
    away = np.array([0.0, 1.0, 0.0])
    check("saf_active", v_saf(0.5, away, 1.0, 2.0))
    check("saf_cutoff", v_saf(1.5, away, 1.0, 2.0))
    check("saf_boundary", v_saf(1.0, away, 1.0, 2.0))
    check("hei_far_up", v_hei(0.0, 1.0, 2.0))
    check("hei_equal", v_hei(1.0, 1.0, 2.0))
    check("hei_near_down", v_hei(1.1, 1.0, 1.0))
    check("fmt_far", v_fmt(np.array([0.0, 1.0, 0]), Z, 3.0))
    check("fmt_same", v_fmt(np.ones(3), np.ones(3), 3.0))
    check("ali_basic", v_ali(np.array([1.0, 0, 1.0]), Z, 1.0))

    # one irrational-input configuration exercising every term at once
    r_i = np.array([0.3, -0.2, 1.7])
    r_j = np.array([1.1, 0.5, 1.9])
    r_k = np.array([-2.0, 1.4, 2.2])
    goal = np.array([5.0, 1.0, 2.0])
    target = np.array([0.8, -0.1, 2.1])
    h_inner, h_height, h_speed, h_safety = 1.5, 2.0, 1.3, 0.9
    rij = float(np.linalg.norm(r_i - r_j))
    rik = float(np.linalg.norm(r_i - r_k))
    terms = FlockingTerms(
        flock=v_flock(goal, r_i, h_speed),
        fmt=v_fmt(target, r_i, h_speed),
        rep=v_rep(r_i, r_j, h_inner) + v_rep(r_i, r_k, h_inner),
        att=v_att(r_i, r_j, h_inner) + v_att(r_i, r_k, h_inner),
        saf=v_saf(0.4, np.array([0.0, -1.0, 0.0]), h_safety, h_speed),
        hei=v_hei(r_i[2], h_height, h_speed),
        ali=v_ali(np.array([0.4, -0.3, 0.1]), np.array([0.1, 0.2, 0.0]), rij)
        + v_ali(np.array([0.4, -0.3, 0.1]), np.array([-0.2, 0.0, 0.3]), rik),
    )
    for name, got in [("scene_flock", terms.flock), ("scene_fmt", terms.fmt),
                      ("scene_rep", terms.rep), ("scene_att", terms.att),
                      ("scene_saf", terms.saf), ("scene_hei", terms.hei),
                      ("scene_ali", terms.ali),
                      ("scene_compose",
                       compose_velocity(terms, FlockingWeights(), h_speed))]:
        check(name, got)

    # speed cap over 1e5 randomized states
    rng = np.random.default_rng(0)
    raw = rng.normal(scale=10.0, size=(100_000, 7, 3))
    caps = rng.uniform(0.1, 5.0, size=100_000)
    worst = -np.inf
    for i in range(100_000):
        v = compose_velocity(FlockingTerms(*raw[i]), FlockingWeights(),
                             float(caps[i]))
        worst = max(worst, float(np.linalg.norm(v)) - caps[i])
    assert worst <= 1e-9, f"speed cap exceeded by {worst}"

    elapsed = time.monotonic() - t0
    assert elapsed < 10.0, f"flocking suite took {elapsed:.1f}s"
    print(f"\n[1] flocking terms 1e-9, cap margin {worst:.2e}, {elapsed:.1f}s")


# ------------------------------------------------------- 2. preference model

def test_02_gradients_posterior_and_noise_recovery():
    t0 = time.monotonic()
    from dataclasses import replace as dc_replace

    # finite-difference gradient agreement, rel err < 1e-4
    state = generic_state(seed=4)
    rng = np.random.default_rng(9)
    X = rng.uniform(-1.5, 1.5, size=(7, 3))
    T = 0.3 * np.sin(X[:, :1] + np.arange(5)[None, :]) \
        + 0.05 * rng.standard_normal((7, 5))
    Y = denormalize_targets(T, RANGES.lo(), RANGES.hi())
    _, grads, _ = elbo_grads(state, X, Y)
    checked = 0
    for name, g in grads.items():
        flat = np.abs(g).ravel()
        for j in np.argsort(flat)[::-1][:3]:
            if flat[j] < 1e-3:
                continue
            idx = np.unravel_index(j, g.shape)
            theta = getattr(state, name).copy()
            h = 1e-5 * max(1.0, abs(theta[idx]))
            up, dn = theta.copy(), theta.copy()
            up[idx] += h
            dn[idx] -= h
            fd = (elbo(dc_replace(state, **{name: up}), X, Y)
                  - elbo(dc_replace(state, **{name: dn}), X, Y)) / (2.0 * h)
            rel = abs(fd - g[idx]) / max(abs(g[idx]), 1e-8)
            assert rel < 1e-4, f"{name}{idx}: rel {rel}"
            checked += 1
    assert checked >= 12

    # sparse posterior vs a dense reference on a 12-point fixture
    state, Xf, Yf, X_test = small_exact_setup()
    fitted = fit_variational_exact(state, Xf, Yf)
    pred = predict(fitted, X_test)
    mean_ref, var_ref = exact_gp_predict(state, Xf, Yf, X_test)
    mean_gap = float(np.max(np.abs(pred.mean_norm - mean_ref)))
    diag = pred.cov[:, np.arange(5), np.arange(5)]
    var_gap = float(np.max(np.abs(diag - var_ref)))
    assert mean_gap < 1e-2 and var_gap < 1e-2

    # input-dependent noise slope recovered, Spearman > 0.6
    rng = np.random.default_rng(21)
    n = 240
    Xn = rng.uniform(-2.0, 2.0, size=(n, 2))
    sigma = np.exp(0.5 * (-4.0 + 1.0 * Xn[:, 0]))
    Tn = 0.3 * np.sin(1.1 * Xn[:, :1]) * np.cos(0.5 * Xn[:, 1:2]) \
        * np.ones((1, 5)) + sigma[:, None] * rng.standard_normal((n, 5))
    Yn = denormalize_targets(Tn, RANGES.lo(), RANGES.hi())
    cfg = GpConfig(n_latents=2, n_inducing=16, n_steps=600, batch_size=64,
                   lr_noise=5e-3, seed=2)
    st = init_state(RANGES, np.ones(2), cfg, X=Xn, rng=rng)
    st, _, _ = train(st, Xn, Yn, cfg, rng)
    grid = np.stack([np.linspace(-2, 2, 30), np.zeros(30)], axis=1)
    learned = st.alpha[None, :] + (grid / st.x_scale) @ st.beta.T
    rho = spearmanr(-4.0 + grid[:, 0], learned.mean(axis=1)).statistic
    assert rho > 0.6

    elapsed = time.monotonic() - t0
    assert elapsed < 300.0, f"model suite took {elapsed:.1f}s"
    print(f"\n[2] grads {checked} checked, sparse gap {mean_gap:.1e}/"
          f"{var_gap:.1e}, noise rho {rho:.3f}, {elapsed:.1f}s")


# ------------------------------------------------------------ 3. safe region

def test_03_region_geometry(pillar_scenario, eight_env):
    t0 = time.monotonic()

    # the unit cube's largest inscribed ellipsoid is the unit ball
    A = np.vstack([np.eye(3), -np.eye(3)])
    cube = Polytope(A=A, b=np.ones(6))
    ell, clean = max_volume_ellipsoid(cube)
    assert clean
    assert np.max(np.abs(ell.C - np.eye(3))) < 1e-4
    assert np.max(np.abs(ell.d)) < 1e-6

    # containment margin >= -1e-7 on random bounded polytopes
    rng = np.random.default_rng(0)
    worst_margin = np.inf
    for _ in range(10):
        Ar = np.vstack([np.eye(3), -np.eye(3), rng.normal(size=(4, 3))])
        br = np.concatenate([np.full(6, 2.0), rng.uniform(0.5, 2.0, size=4)])
        P = Polytope(A=Ar, b=br)
        e, _ = max_volume_ellipsoid(P)
        margins = P.b - P.A @ e.d - np.linalg.norm(e.C @ P.A.T, axis=0)
        worst_margin = min(worst_margin, float(margins.min()))
    assert worst_margin >= -1e-7

    # inflated regions exclude every obstacle (1e4 samples each) and the
    # inscribed volume never shrinks across iterations
    cases = [(pillar_scenario, np.array([5.0, 9.0, 3.0])),
             (eight_env, np.array([5.0, 5.0, 1.5])),
             (eight_env, np.array([30.0, 10.0, 2.5]))]
    for scen, seed in cases:
        res = inflate_region(scen, seed, RegionConfig())
        hist = res.logdet_history
        assert len(hist) >= 1
        assert all(b >= a - 1e-9 for a, b in zip(hist, hist[1:]))
        for ob in scen.obstacles:
            pts = rng.uniform(ob.min_corner, ob.max_corner, size=(10_000, 3))
            assert not res.polytope.contains(pts, tol=0.0).any()

    elapsed = time.monotonic() - t0
    assert elapsed < 60.0, f"region suite took {elapsed:.1f}s"
    print(f"\n[3] cube ball 1e-4, containment {worst_margin:.1e}, "
          f"exclusion 0 hits, {elapsed:.1f}s")


# -------------------------------------------------------------- 4. formation

def test_04_formation_fitting():
    t0 = time.monotonic()
    cfg = FormationConfig()

    # unconstrained closed form, every prototype, loss within 1e-6
    region = box_region([-100, -100, -100], [100, 100, 100])
    r_goal = np.array([1.0, 2.0, 4.0])
    t_ref, s_ref, cost_ref = unconstrained_optimum(r_goal, 2.0, 3.0, cfg)
    for proto in default_prototypes(5):
        res = fit_formation(proto, region, r_goal, 2.0, 3.0, cfg)
        assert res is not None, proto.name
        assert abs(res.cost - cost_ref) < 1e-6, proto.name
        assert abs(res.params.scale - s_ref) < 1e-6, proto.name

    # constrained two-robot fit within 1% of an exhaustive grid
    tight = box_region([-0.7, -0.7, 0.5], [0.7, 0.7, 4.0])
    goal2 = np.array([0.9, 0.3, 2.0])
    res = fit_formation(pair_prototype(), tight, goal2, 2.0, 3.0, cfg)
    assert res is not None
    ref = brute_pair_fit((0.7, 0.7), 0.5, 4.0, goal2, 2.0, 3.0, cfg)
    assert res.cost <= ref + 1e-9
    assert abs(res.cost - ref) <= 0.01 * ref
    # feasible slots re-verified directly against the halfspace data
    assert slots_inside(tight, res.positions, cfg.slot_tol)

    # corridor too narrow for the circle: fallback reaches the line
    corridor = box_region([-0.12, -3.0, 0.5], [0.12, 3.0, 4.0])
    fit, tried = fit_with_fallback(list(default_prototypes(5)), 4, corridor,
                                   np.array([0.0, 0.0, 2.0]), 1.0, 2.0,
                                   cfg=cfg)
    assert fit is not None
    assert tried == ["circle", "line"]
    assert fit.prototype == "line"
    assert slots_inside(corridor, fit.positions, cfg.slot_tol)

    elapsed = time.monotonic() - t0
    assert elapsed < 60.0, f"formation suite took {elapsed:.1f}s"
    print(f"\n[4] closed form 1e-6, grid gap {abs(res.cost - ref) / ref:.4f}, "
          f"fallback ok, {elapsed:.1f}s")


# ------------------------------------------- 5 + 6. adaptation and transfer

@pytest.fixture(scope="module")
def eval_reports(eight_env, eight_oracle):
    t0 = time.monotonic()
    adapt = adaptation_experiment(eight_env, eight_oracle)
    trans = transfer_experiment(eight_env, eight_oracle)
    return adapt, trans, time.monotonic() - t0


def test_05_adaptation_beats_baselines(eval_reports):
    adapt, _, elapsed = eval_reports
    gp = adapt["gp_mean_final_error"]
    ridge = adapt["ridge_mean_final_error"]
    mlp = adapt["mlp_mean_final_error"]
    assert adapt["updates_per_env"] == 5
    assert len(adapt["envs"]) == 8
    assert gp < 0.05, f"gp error {gp:.4f}"
    assert ridge > gp, f"ridge {ridge:.4f} vs gp {gp:.4f}"
    assert mlp > gp, f"mlp {mlp:.4f} vs gp {gp:.4f}"
    assert elapsed < 900.0, f"evaluation harness took {elapsed:.1f}s"
    print(f"\n[5] gp {gp:.4f} < mlp {mlp:.4f}, ridge {ridge:.4f}, "
          f"{elapsed:.1f}s (both experiments)")


def test_06_transfer_error_tracks_similarity(eval_reports):
    _, trans, _ = eval_reports
    rho = trans["spearman_rho"]
    assert len(trans["pairs"]) == 8 * 7
    assert rho < -0.3, f"spearman {rho:.4f}"
    print(f"\n[6] transfer rho {rho:.4f} over {len(trans['pairs'])} pairs")


# ------------------------------------------------------ 7. seeded missions

def test_07_seeded_missions_safe_and_reproducible(eight_env, eight_oracle,
                                                  proto_library):
    t0 = time.monotonic()
    scale = FeatureConfig().scale_vector()

    def fly(seed):
        cfg = MissionConfig(seed=seed)
        gp_cfg = GpConfig(seed=seed)
        model = init_state(cfg.ranges, scale, gp_cfg)
        return run_mission(eight_env, model, cfg, oracle=eight_oracle,
                           prototypes=list(proto_library), gp_cfg=gp_cfg)

    digests = {}
    for seed in range(20):
        res = fly(seed)
        assert res.success, f"seed {seed} did not reach the goal"
        assert res.violations == 0, f"seed {seed}: {res.violations} violations"
        digests[seed] = res.digest
    first_pass = time.monotonic() - t0
    assert first_pass < 600.0, f"20 missions took {first_pass:.1f}s"

    for seed in range(20):
        res = fly(seed)
        assert res.digest == digests[seed], f"seed {seed} digest drifted"

    print(f"\n[7] 20 missions safe, digests stable, first pass "
          f"{first_pass:.1f}s")
