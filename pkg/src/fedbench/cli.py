"""Command-line interface: run, one-round, and monitor subcommands."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .config import ExperimentConfig, parse_config
from .errors import FedbenchError
from .orchestrator import monitor_bayesian_ensemble, run_experiment, run_one_round_study
from .plots import render_run_report


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", required=True, help="experiment config file")
    sub.add_argument("--seed", type=int, default=None, help="override the master seed")
    sub.add_argument("--out", default=None, help="override the output directory")
    sub.add_argument("--no-figures", action="store_true", help="skip figure rendering")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedbench",
        description="Deterministic federated-learning simulation bench",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    run = subs.add_parser("run", help="full multi-round simulation")
    _add_common(run)
    run.add_argument("--dump-teacher", action="store_true",
                     help="write each round's pseudo-labeled set to CSV")
    run.add_argument("--timings", action="store_true",
                     help="record wall_ms in metrics.csv (breaks byte-level "
                          "reproducibility between runs)")

    one = subs.add_parser("one-round", help="single-round aggregation comparison")
    _add_common(one)
    one.add_argument("--epochs", type=int, default=200,
                     help="local epochs for the one-round clients")

    mon = subs.add_parser("monitor", help="FedAvg run with ensemble observation")
    _add_common(mon)
    mon.add_argument("--samples", type=int, default=10,
                     help="posterior samples for the monitored ensemble")
    return parser


def _load_config(args) -> ExperimentConfig:
    cfg = parse_config(args.config, seed_override=args.seed)
    if args.out is not None:
        cfg = replace(cfg, output_dir=Path(args.out))
    if cfg.output_dir is None:
        cfg = replace(cfg, output_dir=Path("fedbench-out"))
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = _load_config(args)
            cfg = replace(cfg, dump_teacher=args.dump_teacher, record_timings=args.timings)
            records = run_experiment(cfg)
            for rec in records:
                marker = f" ensemble={rec.ensemble_test_acc:.4f}" if rec.ensemble_test_acc else ""
                print(f"round {rec.round}: global={rec.global_test_acc:.4f}{marker}")
            print(f"outputs written to {cfg.output_dir}")
        elif args.command == "monitor":
            cfg = _load_config(args)
            records = monitor_bayesian_ensemble(cfg, samples=args.samples)
            for rec in records:
                print(
                    f"round {rec.round}: global={rec.global_test_acc:.4f} "
                    f"ensemble={rec.ensemble_test_acc:.4f}"
                )
            print(f"outputs written to {cfg.output_dir}")
        else:
            cfg = _load_config(args)
            result = run_one_round_study(cfg, local_epochs_long=args.epochs)
            print(f"{'method':<18}{'distill':<8}accuracy")
            for method, distill, acc in result.rows():
                print(f"{method:<18}{distill:<8}{acc:.4f}")
            print(f"outputs written to {cfg.output_dir}")
        if not args.no_figures and cfg.output_dir is not None:
            for fig in render_run_report(cfg.output_dir):
                print(f"figure: {fig}")
    except FedbenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
