"""Command-line entry point: ``microims run`` and ``microims sweep``."""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .config import SCENARIOS, ConfigInvalid, load_config, preset
from .harness import emit, run_scenario
from .sweep import mean_busy_rates, run_sweep, write_sweep


def _scenario(args: argparse.Namespace):
    sc = preset(args.scenario)
    if args.config:
        sc = load_config(args.config, base=sc)
    return sc


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="microims")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario and write calls.csv / summary.json")
    run.add_argument("--scenario", choices=SCENARIOS, default="baseline")
    run.add_argument("--config", help="TOML file with per-module overrides")
    run.add_argument("--seed", type=_seed, default=0)
    run.add_argument("--out", required=True)
    run.add_argument("--trace", action="store_true", help="also write trace.tsv")

    sweep = sub.add_parser("sweep", help="busy-drop rate for n_extra in 0..3 over many seeds")
    sweep.add_argument("--scenario", choices=SCENARIOS, default="tradeoff")
    sweep.add_argument("--config")
    sweep.add_argument("--seeds", type=int, default=20)
    sweep.add_argument("--workers", type=int, default=1)
    sweep.add_argument("--out", required=True)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        sc = _scenario(args)
        if args.command == "run":
            report = run_scenario(sc, args.seed, trace=args.trace)
            emit(report, args.out)
            c = report.counters
            print(f"{sc.name} seed={args.seed}: {c['established']} established, "
                  f"{c['busy_capacity'] + c['busy_media']} busy, {c['throttled']} throttled, "
                  f"p50={report.percentiles()['p50']} ms -> {args.out}")
        else:
            if args.seeds < 1:
                raise ConfigInvalid("--seeds must be >= 1")
            rows = run_sweep(sc, args.seeds, workers=max(1, args.workers))
            write_sweep(rows, args.out, sc)
            rates = ", ".join(f"n_extra={n}: {v:.4f}" for n, v in mean_busy_rates(rows).items())
            print(f"{sc.name} x {args.seeds} seeds: mean busy rate {rates} -> {args.out}")
    except ConfigInvalid as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc.filename or args.out}: {exc.strerror}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
