"""Command line entry points.

Subcommands: simulate (headless mission), train (fit a checkpoint from a
dataset), eval (adaptation / transfer experiments), serve (live websocket
service), region (safe-region debug dump), bench (rough timings).

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from .configs import (FeatureConfig, GpConfig, MissionConfig,
                      PreferenceRanges, RegionConfig)
from .evaluation import (EvalConfig, adaptation_experiment, save_report,
                         transfer_experiment)
from .mission import load_oracle, run_mission
from .persistence import append_sample, load_samples, samples_to_arrays
from .preference_gp import init_state, load_model, save_model, train
from .prototypes import default_prototypes, load_prototypes
from .world import load_scenario


def _out_dir() -> str:
    return os.environ.get("SWARMPREF_OUT_DIR", ".")


def _out_path(name: str | None, default_name: str) -> str:
    if name:
        return name
    return os.path.join(_out_dir(), default_name)


def _fresh_model(seed: int, steps: int | None = None) -> tuple:
    gp_cfg = GpConfig(seed=seed) if steps is None else GpConfig(seed=seed, n_steps=steps)
    ranges = PreferenceRanges()
    model = init_state(ranges, FeatureConfig().scale_vector(), gp_cfg)
    return model, gp_cfg, ranges


def _cmd_simulate(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    if args.model:
        model = load_model(args.model)
        gp_cfg = GpConfig(seed=args.seed)
    else:
        model, gp_cfg, _ = _fresh_model(args.seed)
    oracle = load_oracle(args.oracle) if args.oracle else None
    cfg = MissionConfig(seed=args.seed, query_budget=args.budget,
                        max_ticks=args.max_ticks,
                        model_update_steps=args.update_steps,
                        n_robots=args.robots)
    prototypes = load_prototypes(args.prototypes) if args.prototypes \
        else default_prototypes(args.robots)
    result = run_mission(scenario, model, cfg, oracle=oracle,
                         prototypes=list(prototypes), gp_cfg=gp_cfg)
    out = _out_path(args.out, "mission_log.json")
    with open(out, "w") as f:
        json.dump({"summary": result.summary(),
                   "log": result.log.to_dict()}, f, indent=2)
    if args.dataset:
        for sample in result.dataset:
            append_sample(args.dataset, sample)
    s = result.summary()
    print(f"success={s['success']} violations={s['violations']} "
          f"queries={s['queries_used']} samples={s['samples']}")
    print(f"digest={s['digest']}")
    print(f"log written to {out}")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    samples, skipped = load_samples(args.data)
    if skipped:
        print(f"warning: skipped {skipped} malformed lines", file=sys.stderr)
    if not samples:
        print("error: dataset is empty", file=sys.stderr)
        return 1
    X, Y = samples_to_arrays(samples)
    if args.init:
        model = load_model(args.init)
        gp_cfg = GpConfig(seed=args.seed, n_steps=args.steps, batch_size=args.batch)
    else:
        gp_cfg = GpConfig(seed=args.seed, n_steps=args.steps, batch_size=args.batch)
        model = init_state(PreferenceRanges(), FeatureConfig().scale_vector(),
                           gp_cfg, X=X)
    rng = np.random.default_rng(args.seed)
    model, _, history = train(model, X, Y, gp_cfg, rng)
    out = _out_path(args.out, "model.json")
    save_model(model, out)
    print(f"trained on {len(samples)} samples for {len(history)} steps")
    if history:
        print(f"final minibatch elbo {history[-1]:.3f}")
    print(f"checkpoint written to {out}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    oracle = load_oracle(args.oracle)
    if args.quick:
        cfg = EvalConfig(seed=args.seed, updates_per_env=2, update_steps=40,
                         pretrain_samples=3, pretrain_steps=60,
                         transfer_update_steps=40, mlp_steps=80)
    else:
        cfg = EvalConfig(seed=args.seed)
    report: dict = {"kind": args.mode}
    if args.mode in ("adaptation", "both"):
        report["adaptation"] = adaptation_experiment(scenario, oracle, cfg=cfg)
        a = report["adaptation"]
        print(f"adaptation: gp={a['gp_mean_final_error']:.4f} "
              f"ridge={a['ridge_mean_final_error']:.4f} "
              f"mlp={a['mlp_mean_final_error']:.4f}")
    if args.mode in ("transfer", "both"):
        report["transfer"] = transfer_experiment(scenario, oracle, cfg=cfg)
        t = report["transfer"]
        print(f"transfer: spearman rho={t['spearman_rho']:.3f} "
              f"over {len(t['pairs'])} pairs")
    out = _out_path(args.out, "eval_report.json")
    save_report(out, report)
    print(f"report written to {out}")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .server import build_app

    scenario = load_scenario(args.scenario)
    if args.model:
        model = load_model(args.model)
        gp_cfg = GpConfig(seed=args.seed)
    else:
        model, gp_cfg, _ = _fresh_model(args.seed)
    oracle = load_oracle(args.oracle) if args.oracle else None
    cfg = MissionConfig(seed=args.seed, query_budget=args.budget,
                        query_timeout_s=args.timeout)
    app = build_app(scenario, model, cfg, gp_cfg, oracle=oracle,
                    auto_answer=args.auto,
                    pacing_s=cfg.dt if args.realtime else 0.0)
    print(f"serving on ws://{args.host}:{args.port}/ws")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def _cmd_region(args: argparse.Namespace) -> int:
    from .safe_region import dilate, inflate_region

    scenario = load_scenario(args.scenario)
    seed_point = np.array([float(v) for v in args.seed_point.split(",")])
    if seed_point.shape != (3,):
        print("error: --seed-point needs x,y,z", file=sys.stderr)
        return 1
    result = inflate_region(scenario, seed_point, RegionConfig())
    dilated = dilate(result.polytope, scenario.robot_edge, args.safety)
    out = _out_path(args.out, "region.json")
    with open(out, "w") as f:
        json.dump({"region": result.to_dict(), "dilated": dilated.to_dict()},
                  f, indent=2)
    print(f"planes={result.polytope.n_rows} logdet={result.ellipsoid.logdet:.4f} "
          f"converged={result.converged} dilated_feasible={dilated.feasible}")
    print(f"dump written to {out}")
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    from .preference_gp import elbo_grads
    from .safe_region import inflate_region

    rng = np.random.default_rng(args.seed)
    model, gp_cfg, ranges = _fresh_model(args.seed)
    D = model.input_dim
    X = rng.uniform(0, 20, size=(256, D))
    Y = ranges.denormalize(rng.uniform(0.2, 0.8, size=(256, model.n_outputs)))
    elbo_grads(model, X[:64], Y[:64], 256)  # warm up
    t0 = time.time()
    for _ in range(args.repeat):
        elbo_grads(model, X[:64], Y[:64], 256)
    per = (time.time() - t0) / args.repeat
    print(f"elbo+grad (B=64, M={model.n_inducing}): {per * 1e3:.2f} ms")

    if args.scenario:
        scenario = load_scenario(args.scenario)
        seed_point = scenario.bounds.center
        t0 = time.time()
        for _ in range(args.repeat):
            inflate_region(scenario, seed_point)
        per = (time.time() - t0) / args.repeat
        print(f"region inflation: {per * 1e3:.1f} ms")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="swarmpref",
                                description="flocking preference learning toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a headless mission")
    sim.add_argument("--scenario", required=True)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--budget", type=int, default=20)
    sim.add_argument("--max-ticks", type=int, default=6000)
    sim.add_argument("--update-steps", type=int, default=200)
    sim.add_argument("--robots", type=int, default=5)
    sim.add_argument("--oracle", help="synthetic oracle json; omit to decline queries")
    sim.add_argument("--model", help="model checkpoint to start from")
    sim.add_argument("--prototypes", help="formation prototype json")
    sim.add_argument("--out", help="mission log path")
    sim.add_argument("--dataset", help="append collected feedback to this jsonl")
    sim.set_defaults(fn=_cmd_simulate)

    tr = sub.add_parser("train", help="fit a checkpoint from a feedback dataset")
    tr.add_argument("--data", required=True)
    tr.add_argument("--out")
    tr.add_argument("--init", help="warm-start checkpoint")
    tr.add_argument("--steps", type=int, default=2000)
    tr.add_argument("--batch", type=int, default=64)
    tr.add_argument("--seed", type=int, default=0)
    tr.set_defaults(fn=_cmd_train)

    ev = sub.add_parser("eval", help="adaptation / transfer experiments")
    ev.add_argument("--scenario", required=True)
    ev.add_argument("--oracle", required=True)
    ev.add_argument("--mode", choices=["adaptation", "transfer", "both"],
                    default="both")
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--quick", action="store_true",
                    help="reduced step counts for smoke runs")
    ev.add_argument("--out")
    ev.set_defaults(fn=_cmd_eval)

    sv = sub.add_parser("serve", help="run the live mission service")
    sv.add_argument("--scenario", required=True)
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8750)
    sv.add_argument("--seed", type=int, default=0)
    sv.add_argument("--budget", type=int, default=20)
    sv.add_argument("--timeout", type=float, default=10.0,
                    help="seconds to wait for operator feedback")
    sv.add_argument("--model")
    sv.add_argument("--oracle")
    sv.add_argument("--auto", action="store_true",
                    help="answer queries from the oracle instead of waiting")
    sv.add_argument("--realtime", action="store_true",
                    help="pace ticks at the simulation dt")
    sv.set_defaults(fn=_cmd_serve)

    rg = sub.add_parser("region", help="dump the safe region around a point")
    rg.add_argument("--scenario", required=True)
    rg.add_argument("--seed-point", required=True, help="x,y,z in meters")
    rg.add_argument("--safety", type=float, default=1.0)
    rg.add_argument("--out")
    rg.set_defaults(fn=_cmd_region)

    be = sub.add_parser("bench", help="rough component timings")
    be.add_argument("--seed", type=int, default=0)
    be.add_argument("--repeat", type=int, default=20)
    be.add_argument("--scenario")
    be.set_defaults(fn=_cmd_bench)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except KeyboardInterrupt:
        return 130
    except Exception as e:  # surface a single clean line, fail with 1
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
