"""Adaptation and transfer experiments against the synthetic oracle.

The adaptation experiment tours the environments in a fixed order and
tracks the normalized prediction error as feedback accumulates, with a
ridge regression and a small feedforward network trained on the identical
cumulative data for comparison.  The transfer experiment measures how fast
the model adapts to a new environment as a function of environment
similarity, one ordered pair at a time.

All errors are plain L2 norms in [0, 1]-normalized preference units.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, replace

import numpy as np
import torch
from scipy.stats import spearmanr

from .configs import FeatureConfig, GpConfig, PreferenceRanges
from .mission import OracleSpec
from .preference_gp import (GpModelState, _torch_setup, init_state, predict,
                            train)
from .world import ENV_TYPES, Scenario, SwarmSummary, extract_features


@dataclass(frozen=True)
class EvalConfig:
    updates_per_env: int = 5
    update_steps: int = 200
    update_batch: int = 64
    pretrain_samples: int = 6
    pretrain_steps: int = 600
    transfer_update_steps: int = 200
    ridge_lambda: float = 1.0
    mlp_hidden: int = 32
    mlp_steps: int = 500
    mlp_lr: float = 1e-2
    eval_speed: float = 1.0   # swarm summary held fixed across envs
    eval_height: float = 2.0
    seed: int = 0


def env_features(scenario: Scenario, label: str, fcfg: FeatureConfig,
                 height: float = 2.0, speed: float = 1.0) -> np.ndarray:
    """Canonical feature vector for an environment: probe at the region
    center at a fixed height with a fixed swarm summary."""
    region = next((r for r in scenario.regions if r.label == label), None)
    if region is None:
        raise ValueError(f"scenario has no region labeled {label!r}")
    center = region.box.center.copy()
    center[2] = height
    summary = SwarmSummary(mean_speed=speed, mean_height=height)
    return extract_features(scenario, center, summary, fcfg)


def _norm_error(ranges: PreferenceRanges, pred_phys: np.ndarray,
                true_phys: np.ndarray) -> float:
    return float(np.linalg.norm(ranges.normalize(pred_phys)
                                - ranges.normalize(true_phys)))


def ridge_fit_predict(Xs: np.ndarray, T: np.ndarray, X_eval: np.ndarray,
                      lam: float) -> np.ndarray:
    """Ridge regression with bias, targets in [0, 1]; predictions clipped."""
    Xb = np.hstack([Xs, np.ones((len(Xs), 1))])
    Eb = np.hstack([np.atleast_2d(X_eval), np.ones((len(np.atleast_2d(X_eval)), 1))])
    W = np.linalg.solve(Xb.T @ Xb + lam * np.eye(Xb.shape[1]), Xb.T @ T)
    return np.clip(Eb @ W, 0.0, 1.0)


def mlp_fit_predict(Xs: np.ndarray, T: np.ndarray, X_eval: np.ndarray,
                    hidden: int, steps: int, lr: float, seed: int) -> np.ndarray:
    """Two-hidden-layer tanh network, full-batch Adam; predictions clipped."""
    _torch_setup()
    torch.manual_seed(seed)
    D, P = Xs.shape[1], T.shape[1]
    net = torch.nn.Sequential(
        torch.nn.Linear(D, hidden), torch.nn.Tanh(),
        torch.nn.Linear(hidden, hidden), torch.nn.Tanh(),
        torch.nn.Linear(hidden, P),
    )
    opt = torch.optim.Adam(net.parameters(), lr=lr)
    Xt = torch.tensor(Xs)
    Tt = torch.tensor(T)
    for _ in range(steps):
        opt.zero_grad()
        loss = torch.mean((net(Xt) - Tt) ** 2)
        loss.backward()
        opt.step()
    with torch.no_grad():
        out = net(torch.tensor(np.atleast_2d(X_eval))).numpy()
    return np.clip(out, 0.0, 1.0)


def adaptation_experiment(scenario: Scenario, oracle: OracleSpec,
                          ranges: PreferenceRanges = PreferenceRanges(),
                          fcfg: FeatureConfig = FeatureConfig(),
                          gp_cfg: GpConfig = GpConfig(),
                          cfg: EvalConfig = EvalConfig()) -> dict:
    """Sequential tour; per-env error curve over update count, with both
    baselines retrained on the cumulative data at each measurement point."""
    t0 = time.time()
    envs = [e for e in ENV_TYPES if e in oracle.means]
    scale = fcfg.scale_vector()
    model: GpModelState = init_state(ranges, scale,
                                     replace(gp_cfg, seed=cfg.seed))
    oracle_rng = np.random.default_rng(cfg.seed + 7919)
    step_cfg = replace(gp_cfg, n_steps=cfg.update_steps,
                       batch_size=cfg.update_batch)
    X_rows: list[np.ndarray] = []
    Y_rows: list[np.ndarray] = []
    per_env: dict[str, list[float]] = {}
    ridge_err: dict[str, float] = {}
    mlp_err: dict[str, float] = {}
    for ei, env in enumerate(envs):
        feats = env_features(scenario, env, fcfg, cfg.eval_height, cfg.eval_speed)
        true = oracle.means[env]
        curve: list[float] = []
        for k in range(cfg.updates_per_env + 1):
            pred = predict(model, feats)
            curve.append(_norm_error(ranges, pred.mean[0], true))
            if k < cfg.updates_per_env:
                y, _ = oracle.sample(env, ranges, oracle_rng)
                X_rows.append(feats)
                Y_rows.append(y)
                train_rng = np.random.default_rng([cfg.seed, 29, ei, k])
                model, _, _ = train(model, np.stack(X_rows), np.stack(Y_rows),
                                    step_cfg, train_rng)
        per_env[env] = curve
        Xc = np.stack(X_rows) / scale
        Tc = ranges.normalize(np.stack(Y_rows))
        true_n = ranges.normalize(true)
        rp = ridge_fit_predict(Xc, Tc, feats / scale, cfg.ridge_lambda)[0]
        mp = mlp_fit_predict(Xc, Tc, feats / scale, cfg.mlp_hidden,
                             cfg.mlp_steps, cfg.mlp_lr, cfg.seed + ei)[0]
        ridge_err[env] = float(np.linalg.norm(rp - true_n))
        mlp_err[env] = float(np.linalg.norm(mp - true_n))
    gp_final = float(np.mean([per_env[e][-1] for e in envs]))
    return {
        "kind": "adaptation",
        "envs": envs,
        "updates_per_env": cfg.updates_per_env,
        "per_env_curves": per_env,
        "gp_mean_final_error": gp_final,
        "ridge_mean_final_error": float(np.mean(list(ridge_err.values()))),
        "mlp_mean_final_error": float(np.mean(list(mlp_err.values()))),
        "ridge_per_env": ridge_err,
        "mlp_per_env": mlp_err,
        "elapsed_s": time.time() - t0,
    }


def transfer_experiment(scenario: Scenario, oracle: OracleSpec,
                        ranges: PreferenceRanges = PreferenceRanges(),
                        fcfg: FeatureConfig = FeatureConfig(),
                        gp_cfg: GpConfig = GpConfig(),
                        cfg: EvalConfig = EvalConfig()) -> dict:
    """One-update adaptation error for every ordered environment pair,
    correlated against feature-space similarity."""
    from .world import env_similarity

    t0 = time.time()
    envs = [e for e in ENV_TYPES if e in oracle.means]
    scale = fcfg.scale_vector()
    feats = {e: env_features(scenario, e, fcfg, cfg.eval_height, cfg.eval_speed)
             for e in envs}
    pre_cfg = replace(gp_cfg, n_steps=cfg.pretrain_steps,
                      batch_size=cfg.update_batch)
    upd_cfg = replace(gp_cfg, n_steps=cfg.transfer_update_steps,
                      batch_size=cfg.update_batch)
    pretrained: dict[str, tuple[GpModelState, np.ndarray, np.ndarray]] = {}
    for si, src in enumerate(envs):
        rng = np.random.default_rng([cfg.seed, 31, si])
        model = init_state(ranges, scale, replace(gp_cfg, seed=cfg.seed + si))
        Xp = np.stack([feats[src]] * cfg.pretrain_samples)
        Yp = np.stack([oracle.sample(src, ranges, rng)[0]
                       for _ in range(cfg.pretrain_samples)])
        model, _, _ = train(model, Xp, Yp, pre_cfg, rng)
        pretrained[src] = (model, Xp, Yp)
    pairs: list[dict] = []
    for si, src in enumerate(envs):
        base, Xp, Yp = pretrained[src]
        for di, dst in enumerate(envs):
            if dst == src:
                continue
            rng = np.random.default_rng([cfg.seed, 37, si, di])
            y, _ = oracle.sample(dst, ranges, rng)
            X = np.vstack([Xp, feats[dst][None, :]])
            Y = np.vstack([Yp, y[None, :]])
            model, _, _ = train(base, X, Y, upd_cfg, rng)
            pred = predict(model, feats[dst])
            err = _norm_error(ranges, pred.mean[0], oracle.means[dst])
            sim = env_similarity(feats[src], feats[dst], fcfg.similarity_sigma)
            pairs.append({"src": src, "dst": dst,
                          "similarity": float(sim), "error": err})
    sims = [p["similarity"] for p in pairs]
    errs = [p["error"] for p in pairs]
    if len(set(sims)) > 1 and len(set(errs)) > 1:
        rho, pval = spearmanr(sims, errs)
    else:  # rank correlation needs variation on both axes
        rho, pval = float("nan"), float("nan")
    return {
        "kind": "transfer",
        "pairs": pairs,
        "spearman_rho": float(rho),
        "p_value": float(pval),
        "elapsed_s": time.time() - t0,
    }


def save_report(path: str, report: dict) -> None:
    with open(path, "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")
