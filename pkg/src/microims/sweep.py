"""Headroom sweep: busy-drop rate for each n_extra over many seeds."""

from __future__ import annotations

import csv
import dataclasses
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .config import Scenario
from .harness import run_scenario

N_EXTRA_VALUES = (0, 1, 2, 3)
SWEEP_FIELDS = ("n_extra", "seed", "arrivals", "established", "busy_drops", "busy_rate",
                "provisioning_events", "p50_ms", "p95_ms")


@dataclass(frozen=True)
class SweepRow:
    n_extra: int
    seed: int
    arrivals: int
    established: int
    busy_drops: int
    busy_rate: float
    provisioning_events: int
    p50_ms: float
    p95_ms: float


def _one(args: tuple) -> SweepRow:
    scenario, n_extra, seed = args
    sc = dataclasses.replace(
        scenario, autoscaler=dataclasses.replace(scenario.autoscaler, n_extra=n_extra))
    report = run_scenario(sc, seed)
    c = report.counters
    busy = c["busy_capacity"] + c["busy_media"]
    pct = report.percentiles()
    return SweepRow(n_extra, seed, c["arrivals"], c["established"], busy,
                    busy / c["arrivals"] if c["arrivals"] else 0.0,
                    c["provisioning_events"],
                    pct["p50"] if pct["p50"] is not None else float("nan"),
                    pct["p95"] if pct["p95"] is not None else float("nan"))


def run_sweep(scenario: Scenario, seeds: int, n_extra_values: Sequence[int] = N_EXTRA_VALUES,
              workers: int = 1) -> list[SweepRow]:
    """Every (n_extra, seed) pair runs on an isolated engine; rows come back
    in (n_extra, seed) order whatever the worker count."""
    scenario.validate()
    jobs = [(scenario, n, s) for n in n_extra_values for s in range(seeds)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_one, jobs))
    return [_one(j) for j in jobs]


def mean_busy_rates(rows: Sequence[SweepRow]) -> dict[int, float]:
    by_n: dict[int, list[float]] = {}
    for r in rows:
        by_n.setdefault(r.n_extra, []).append(r.busy_rate)
    return {n: sum(v) / len(v) for n, v in sorted(by_n.items())}


def write_sweep(rows: Sequence[SweepRow], out_dir, scenario: Scenario) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = out / "sweep.csv", out / "sweep.json"
    with csv_path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_FIELDS)
        for r in rows:
            w.writerow([getattr(r, f) for f in SWEEP_FIELDS])
    summary = {
        "scenario": scenario.name,
        "seeds": len({r.seed for r in rows}),
        "mean_busy_rate": {str(n): v for n, v in mean_busy_rates(rows).items()},
        "config": scenario.to_dict(),
    }
    json_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return [csv_path, json_path]
