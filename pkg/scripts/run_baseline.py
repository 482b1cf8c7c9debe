"""Baseline experiment: 8 fixed pouches, 30 calls/min, cap 80, 300 s hold.

Writes calls.csv / summary.json per seed and prints how latency moves with
the load on the serving pouch.
"""

import argparse
from pathlib import Path

import numpy as np

from microims import emit, preset, run_scenario


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--out", default="out/baseline")
    args = ap.parse_args()

    for seed in range(args.seeds):
        report = run_scenario(preset("baseline"), seed)
        emit(report, Path(args.out) / f"seed{seed}")
        est = [r for r in report.records if r.outcome == "established"]
        loads = np.array([r.pouch_load for r in est])
        lats = np.array([r.latency_ms for r in est])
        print(f"seed {seed}: {len(est)} established, p50 {np.median(lats):.0f} ms, "
              f"p95 {np.percentile(lats, 95):.0f} ms")
        for lo, hi in ((0, 5), (5, 10), (10, 15), (15, 31)):
            sel = lats[(loads >= lo) & (loads < hi)]
            if sel.size:
                print(f"  pouch load {lo:>2}-{hi - 1:<2} sessions: n={sel.size:<4} "
                      f"median {np.median(sel):.0f} ms")


if __name__ == "__main__":
    main()
