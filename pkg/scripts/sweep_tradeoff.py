"""Headroom trade-off: busy-drop rate against n_extra over many seeds."""

import argparse

from microims import preset
from microims.sweep import mean_busy_rates, run_sweep, write_sweep


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="out/tradeoff")
    args = ap.parse_args()

    sc = preset("tradeoff")
    rows = run_sweep(sc, args.seeds, workers=args.workers)
    write_sweep(rows, args.out, sc)
    for n, rate in mean_busy_rates(rows).items():
        print(f"n_extra={n}: mean busy rate {rate:.4f}")


if __name__ == "__main__":
    main()
