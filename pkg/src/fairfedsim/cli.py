"""Command-line entry point.

Subcommands: run, train-agent, gen-data, report.  Exit codes are stable:
0 success, 2 configuration error, 3 training divergence, 4 checkpoint write
failure.
"""

from __future__ import annotations

import argparse
import sys

from .errors import (
    CheckpointWriteError,
    ConfigError,
    DivergedClientError,
    DivergedPolicyError,
)
from .experiments import derive_report, gen_data, load_experiment_config, run_experiment, train_agent

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_CHECKPOINT = 4


def _parse_seeds(text: str) -> list[int]:
    try:
        seeds = [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"bad --seed-override {text!r}: {exc}") from exc
    if not seeds or any(s < 0 for s in seeds):
        raise ConfigError("--seed-override needs comma-separated integers >= 0")
    return seeds


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairfedsim",
        description="Deterministic fairness-aware federated learning simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the configured experiment (all arms, all seeds)")
    p_run.add_argument("--config", required=True, help="JSON experiment config")
    p_run.add_argument("--out", default="out", help="output directory (default: out)")
    p_run.add_argument("--seed-override", default=None, help="comma-separated seeds replacing the config list")
    p_run.add_argument("--parallel", action="store_true", help="run selected clients in parallel")

    p_train = sub.add_parser("train-agent", help="train the q-selection policy across episodes")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--out", default="out")
    p_train.add_argument("--seed-override", default=None)
    p_train.add_argument("--bandit-mode", action="store_true",
                         help="replace the federation with the 2-action bandit environment")
    p_train.add_argument("--resume", default=None, help="checkpoint file to continue from")

    p_gen = sub.add_parser("gen-data", help="generate and export a synthetic federation")
    p_gen.add_argument("--config", required=True)
    p_gen.add_argument("--out", default="dataset")
    p_gen.add_argument("--seed-override", default=None, help="single seed replacing data.seed")

    p_report = sub.add_parser("report", help="re-derive tables and figures from stored run artifacts")
    p_report.add_argument("--out", required=True, help="experiment directory written by `run`")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = load_experiment_config(args.config)
            seeds = _parse_seeds(args.seed_override) if args.seed_override else None
            paths = run_experiment(cfg, args.out, parallel=True if args.parallel else None,
                                   seed_override=seeds)
            print(f"comparison table: {paths['comparison']}")
            print(f"figures: {paths['figures']}")
        elif args.command == "train-agent":
            cfg = load_experiment_config(args.config)
            seeds = _parse_seeds(args.seed_override) if args.seed_override else None
            result = train_agent(cfg, args.out, bandit=args.bandit_mode,
                                 resume=args.resume, seed_override=seeds)
            print(f"episodes completed: {result['episodes_completed']}")
            print(f"checkpoint: {result['checkpoint']}")
        elif args.command == "gen-data":
            cfg = load_experiment_config(args.config)
            seeds = _parse_seeds(args.seed_override) if args.seed_override else None
            manifest, stats = gen_data(cfg, args.out, seed_override=seeds)
            print(f"manifest: {manifest}")
            print(f"clients: {stats.num_clients}  samples: {stats.total_samples}  "
                  f"sizes min/median/max: {stats.min_samples}/{stats.median_samples:g}/{stats.max_samples}")
        elif args.command == "report":
            paths = derive_report(args.out)
            print(f"comparison table: {paths['comparison']}")
            print(f"figures: {paths['figures']}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergedClientError, DivergedPolicyError) as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except CheckpointWriteError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
