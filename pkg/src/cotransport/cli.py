"""Command-line operator surface.

Subcommands: train, eval, ablate, saliency, sweep, serve.  Every batch
command echoes its effective configuration to the output directory so a
(config, seed) pair fully reproduces the run.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import distill, metrics, rl
from .config import ConfigError, RunConfig, load_config, save_config


def _load_cfg(path: str | None, seed: int | None) -> RunConfig:
    cfg = load_config(path) if path else RunConfig()
    if seed is not None:
        cfg.seed = seed
    cfg.validate()
    return cfg


def cmd_train(args) -> int:
    cfg = _load_cfg(args.config, args.seed)
    role = args.role.replace("-", "_")
    if role == "student" and not (args.teacher or cfg.distill.teacher_checkpoint):
        print("error: student role requires --teacher", file=sys.stderr)
        return 2
    if role == "pure_rl":
        distill.train_pure_rl(cfg, args.out, progress=not args.quiet)
    elif role == "student":
        distill.train_student(cfg, args.out, teacher_dir=args.teacher,
                              progress=not args.quiet)
    else:
        rl.train_teacher(cfg, args.out, progress=not args.quiet)
    print(f"finished; checkpoints under {args.out}")
    return 0


def cmd_eval(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    wrench_mode, knot = args.wrench, None
    if wrench_mode.startswith("file:"):
        from .wrench_gen import load_knot_profile
        knot = load_knot_profile(wrench_mode[5:])
        wrench_mode = "file"
    bundle = rl.load_bundle(args.policy)
    cfg = metrics.load_run_config(args.policy)
    batch = metrics.rollout_eval(bundle, cfg, episodes=args.episodes,
                                 fixed_mass=args.mass, followers=args.team,
                                 seed=args.seed, wrench_mode=wrench_mode,
                                 knot_profile=knot, ticks=args.ticks)
    summary = metrics.summarize(batch, cfg)
    with open(out / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        for k in sorted(summary):
            writer.writerow([k, summary[k]])
    metrics.EpisodeTrace.from_batch(batch, 0).to_jsonl(out / "trace.jsonl")
    save_config(cfg, out / "config.json")
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_ablate(args) -> int:
    cfg = _load_cfg(args.config, None)
    history = [int(h) for h in args.history.split(",")]
    seeds = list(range(args.seeds))
    distill.history_ablation(cfg, args.out, args.teacher,
                             history_lens=history, seeds=seeds,
                             progress=not args.quiet)
    print(f"ablation report: {Path(args.out) / 'ablation.csv'}")
    return 0


def cmd_saliency(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bundle = rl.load_bundle(args.policy)
    if bundle.estimator is None:
        print("error: checkpoint has no estimator", file=sys.stderr)
        return 2
    cfg = metrics.load_run_config(args.policy)
    from . import world as wd
    from .wrench_gen import KnotProfile
    # scripted scenario: +y force, then +x force, then yaw torque
    T = cfg.wrench.episode_duration
    knot = KnotProfile(
        np.array([0.0, 1.0, T / 3 - 0.5, T / 3 + 0.5, 2 * T / 3 - 0.5,
                  2 * T / 3 + 0.5, T]),
        np.array([[0.0, 0.0, 0.0], [0.0, 30.0, 0.0], [0.0, 30.0, 0.0],
                  [30.0, 0.0, 0.0], [30.0, 0.0, 0.0], [0.0, 0.0, 8.0],
                  [0.0, 0.0, 8.0]]))
    # payload yaw pinned to 0 so the follower base is world-axis aligned and
    # +y / +x forces map to lateral / radial arm deflection
    batch = metrics.rollout_eval(bundle, cfg, episodes=1, fixed_mass=args.mass,
                                 seed=args.seed, wrench_mode="file",
                                 knot_profile=knot, reset_yaw=0.0)
    metrics.EpisodeTrace.from_batch(batch, 0).to_jsonl(out / "trace.jsonl")
    series = metrics.saliency_series(bundle.estimator, batch.o_trans[:, 0, 0])
    labels = ["{}:{}:t-{}".format(q, j, cfg.world.history_len - 1 - s)
              for q, j, s in wd.obs_channel_labels(cfg.world.history_len)]
    with open(out / "saliency.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tick"] + labels)
        for t in range(series.shape[0]):
            writer.writerow([t] + [f"{v:.8e}" for v in series[t]])
    print(f"saliency written to {out / 'saliency.csv'}")
    return 0


def cmd_sweep(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    masses = [float(m) for m in args.masses.split(",")]
    teams = [int(t) for t in args.teams.split(",")]
    rows = metrics.mass_sweep(args.policy, masses, followers=teams,
                              episodes=args.episodes, seed=args.seed,
                              out_path=out / "sweep.csv")
    for row in rows:
        print(f"team={row['followers']} mass={row['mass']:5.1f} "
              f"alignment={row['intent_alignment']:.3f} "
              f"lin_err={row['lin_tracking_error']:.3f}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app
    app = create_app(args.policy, team=args.team, mass=args.mass,
                     seed=args.seed, tick_hz=args.tick_hz)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cotransport",
                                description="leader-follower transport simulator")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a policy")
    t.add_argument("--role", choices=["teacher", "student", "pure-rl"],
                   required=True)
    t.add_argument("--config", default=None)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--out", required=True)
    t.add_argument("--teacher", default=None, help="teacher checkpoint dir")
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--policy", required=True)
    e.add_argument("--wrench", default="schedule",
                   help="schedule | ou | file:PATH")
    e.add_argument("--mass", type=float, default=2.0)
    e.add_argument("--team", type=int, default=1)
    e.add_argument("--episodes", type=int, default=32)
    e.add_argument("--ticks", type=int, default=None)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate", help="history-length ablation study")
    a.add_argument("--config", default=None)
    a.add_argument("--history", default="1,4,8")
    a.add_argument("--seeds", type=int, default=3)
    a.add_argument("--teacher", required=True)
    a.add_argument("--out", required=True)
    a.add_argument("--quiet", action="store_true")
    a.set_defaults(func=cmd_ablate)

    s = sub.add_parser("saliency", help="estimator saliency analysis")
    s.add_argument("--policy", required=True)
    s.add_argument("--mass", type=float, default=2.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_saliency)

    w = sub.add_parser("sweep", help="mass / team-size sweep")
    w.add_argument("--policy", required=True)
    w.add_argument("--masses", default="12,20,28")
    w.add_argument("--teams", default="1,2")
    w.add_argument("--episodes", type=int, default=16)
    w.add_argument("--seed", type=int, default=0)
    w.add_argument("--out", required=True)
    w.set_defaults(func=cmd_sweep)

    v = sub.add_parser("serve", help="real-time WebSocket serve mode")
    v.add_argument("--policy", required=True)
    v.add_argument("--team", type=int, default=1)
    v.add_argument("--mass", type=float, default=2.0)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--host", default="127.0.0.1")
    v.add_argument("--port", type=int, default=8000)
    v.add_argument("--tick-hz", type=float, default=50.0)
    v.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
