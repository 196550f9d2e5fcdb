"""Command-line entry point.

Verbs: validate, train, eval, sweep-tau, sweep-snr, heatmap. Every verb
exits nonzero on a fault; tables and figures land in the output
directory.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import harness, plots, tqc
from .config import ScenarioConfig, load_config, save_config, validate_config
from .env import UavRelayEnv


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uavsem",
        description="UAV-relayed semantic network simulator and trainer")
    sub = parser.add_subparsers(required=True)

    p = sub.add_parser("validate", help="check a scenario file against every invariant")
    p.add_argument("--config", required=True, type=Path)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("train", help="train the quantile-critic learner on a scenario")
    _common_args(p, config_required=False)
    p.add_argument("--episodes", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hidden", type=int, nargs="+", default=[256, 256])
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--start-steps", type=int, default=1000)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a policy and export metrics and traces")
    _common_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep-tau", help="sweep the slot duration with matched seeds")
    _common_args(p)
    p.add_argument("--grid", type=float, nargs="+", default=[2.0, 5.0, 10.0, 15.0])
    p.set_defaults(func=cmd_sweep_tau)

    p = sub.add_parser("sweep-snr", help="sweep a nominal SNR offset via noise scaling")
    _common_args(p)
    p.add_argument("--grid", type=float, nargs="+", default=[0.0, 5.0, 10.0, 15.0, 20.0])
    p.set_defaults(func=cmd_sweep_snr)

    p = sub.add_parser("heatmap", help="grid over feature length and modulation order")
    _common_args(p)
    p.add_argument("--feature-lens", type=int, nargs="+",
                   default=[4096, 16384, 65536, 262144])
    p.add_argument("--orders", type=int, nargs="+", default=[4, 16, 64, 256])
    p.set_defaults(func=cmd_heatmap)
    return parser


def _common_args(p: argparse.ArgumentParser, config_required: bool = False) -> None:
    p.add_argument("--config", type=Path, required=config_required,
                   help="scenario file; omitted -> built-in sweep scenario")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1])
    p.add_argument("--policy", default="heuristic",
                   help="'heuristic' or a trained actor checkpoint path")
    p.add_argument("--d-mode", choices=["adaptive", "fixed"], default="adaptive")
    p.add_argument("--fixed-d", type=int, default=2)
    p.add_argument("--calibration", type=Path, default=None,
                   help="measured fidelity table to use instead of the analytic surrogate")
    p.add_argument("--no-figures", action="store_true")


def _load_scenario(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else harness.sweep_scenario()
    violations = validate_config(cfg)
    if violations:
        for v in violations:
            print(f"invalid scenario: {v}", file=sys.stderr)
        raise SystemExit(2)
    return cfg


def _spec(args, cfg: ScenarioConfig, **overrides) -> harness.ExperimentSpec:
    return harness.ExperimentSpec(
        cfg=cfg, out_dir=args.out, seeds=tuple(args.seeds), policy=args.policy,
        policy_d_mode=args.d_mode, policy_fixed_d=args.fixed_d,
        calibration_path=args.calibration, render_figures=not args.no_figures,
        **overrides)


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    violations = validate_config(cfg)
    if violations:
        for v in violations:
            print(v)
        return 1
    print("ok")
    return 0


def cmd_train(args) -> int:
    cfg = _load_scenario(args)
    args.out.mkdir(parents=True, exist_ok=True)
    learner_cfg = tqc.TqcConfig(
        hidden=tuple(args.hidden), episodes=args.episodes,
        batch_size=args.batch_size, start_steps=args.start_steps)
    actor, logs = tqc.train(
        lambda: UavRelayEnv(cfg), learner_cfg, seed=args.seed,
        log_path=args.out / "training_log.csv", checkpoint_dir=args.out)
    actor.net.save(args.out / "actor.npz")
    save_config(cfg, args.out / "scenario.json")
    if not args.no_figures:
        plots.training_figure(logs, args.out / "training_curve.png")
    print(f"trained {args.episodes} episodes; final return {logs[-1].ret:.3f}")
    return 0


def cmd_eval(args) -> int:
    spec = _spec(args, _load_scenario(args))
    rows = harness.run_eval(spec)
    print(f"wrote eval_metrics.csv with {len(rows)} rows to {spec.out_dir}")
    return 0


def cmd_sweep_tau(args) -> int:
    spec = _spec(args, _load_scenario(args), tau_grid=tuple(args.grid))
    rows = harness.run_tau_sweep(spec)
    print(f"wrote tau_sweep.csv with {len(rows)} rows to {spec.out_dir}")
    return 0


def cmd_sweep_snr(args) -> int:
    spec = _spec(args, _load_scenario(args), snr_offsets_db=tuple(args.grid))
    rows = harness.run_snr_sweep(spec)
    print(f"wrote snr_sweep.csv with {len(rows)} rows to {spec.out_dir}")
    return 0


def cmd_heatmap(args) -> int:
    spec = _spec(args, _load_scenario(args),
                 feature_len_grid=tuple(args.feature_lens),
                 mod_order_grid=tuple(args.orders))
    rows = harness.run_heatmap(spec)
    print(f"wrote heatmap.csv with {len(rows)} rows to {spec.out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
