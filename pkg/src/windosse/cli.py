"""Command-line interface.

Subcommands: generate, train, evaluate, sweep, report.  The output root
comes from --out, or the WINDOSSE_OUT environment variable, or ./out.

Exit codes: 0 success, 2 configuration error, 3 missing input artifact,
4 numerical divergence during training or solving.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import torch

from .assim import DivergenceError
from .campaigns import (MissingInputError, evaluate_campaign, generate_campaign,
                        report_campaign, sweep_campaign, train_campaign)
from .config import PROFILES, ConfigError, resolve_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_DIVERGED = 4


def _pin_threads() -> None:
    # Numerics must not depend on worker count; parallelism stays at the
    # process level.
    torch.set_num_threads(1)
    try:
        torch.set_num_interop_threads(1)
    except RuntimeError:
        pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="windosse",
                                     description="observing-system simulation toolkit for "
                                                 "coastal wind-speed reconstruction")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, needs_config: bool = True) -> None:
        if needs_config:
            p.add_argument("--config", required=True, help="experiment config file (INI)")
            p.add_argument("--profile", choices=PROFILES, default=None,
                           help="profile defaults; the config file may pin one")
            p.add_argument("--seed", type=int, default=None, help="override the training base seed")
            p.add_argument("--runs", type=int, default=None, help="override the runs per cell")
        p.add_argument("--out", default=None,
                       help="output directory (default: $WINDOSSE_OUT or ./out)")

    p_generate = sub.add_parser("generate", help="synthesize the truth series and data inventory")
    add_common(p_generate)

    p_train = sub.add_parser("train", help="train every trainable cell of the campaign")
    add_common(p_train)
    p_train.add_argument("--jobs", type=int, default=1, help="parallel training processes")

    p_evaluate = sub.add_parser("evaluate", help="score all cells on the test split")
    add_common(p_evaluate)

    p_sweep = sub.add_parser("sweep", help="campaign-specific sensitivity sweep")
    add_common(p_sweep)

    p_report = sub.add_parser("report", help="write and print the consolidated summary")
    add_common(p_report, needs_config=False)

    return parser


def resolve_out(arg_out: str | None) -> Path:
    if arg_out:
        return Path(arg_out)
    env = os.environ.get("WINDOSSE_OUT")
    return Path(env) if env else Path("out")


def _config_from_args(args) -> "ExperimentConfig":
    overrides = {}
    if args.seed is not None:
        overrides[("train", "base_seed")] = str(args.seed)
    if args.runs is not None:
        overrides[("train", "runs")] = str(args.runs)
    return resolve_config(args.config, profile=args.profile, overrides=overrides)


def main(argv: list[str] | None = None) -> int:
    _pin_threads()
    args = build_parser().parse_args(argv)
    out = resolve_out(args.out)
    try:
        if args.command == "generate":
            cfg = _config_from_args(args)
            manifest = generate_campaign(cfg, out)
            print(f"generated {manifest['split_days']} days under {out} "
                  f"(config hash {cfg.config_hash[:12]})")
        elif args.command == "train":
            cfg = _config_from_args(args)
            done = train_campaign(cfg, out, jobs=max(1, args.jobs))
            print(f"trained {len(done)} runs under {out}")
        elif args.command == "evaluate":
            cfg = _config_from_args(args)
            rows = evaluate_campaign(cfg, out)
            print(f"wrote metrics.csv with {len(rows)} rows under {out}")
        elif args.command == "sweep":
            cfg = _config_from_args(args)
            written = sweep_campaign(cfg, out)
            print(f"wrote {', '.join(p.name for p in written)} under {out}")
        elif args.command == "report":
            print(report_campaign(out), end="")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingInputError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
