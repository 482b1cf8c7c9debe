"""Load generation, scenario runs, metrics and CSV/JSON output."""

from __future__ import annotations

import csv
import io
import json
import math
import string
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .config import Scenario
from .engine import stream_rng
from .hss import SubscriberProfile, load_subscribers
from .sessions import CallSession, SessionState
from .sip import SipUri
from .system import ImsSystem

OUTCOMES = ("established", "busy-capacity", "busy-media", "policy-rejected", "dropped-failure")
CSV_HEADER = ("index", "subscriber", "t_invite_ms", "outcome", "latency_ms", "pouch")


@dataclass
class CallRecord:
    index: int
    subscriber: str
    callee: str
    t_invite_ms: int
    outcome: str
    latency_ms: Optional[int]
    pouch: str
    concurrency: int = 0
    pouch_load: int = 0
    redial: bool = False


@dataclass
class MetricsReport:
    scenario: str
    seed: int
    records: list = field(default_factory=list)
    counters: dict = field(default_factory=dict)
    windows: list = field(default_factory=list)
    mttr_samples: list = field(default_factory=list)
    concurrency_samples: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    trace_digest: str = ""
    trace: Optional[list] = None

    def latencies(self) -> list[int]:
        return [r.latency_ms for r in self.records if r.outcome == "established"]

    def percentiles(self) -> dict:
        lats = self.latencies()
        if not lats:
            return {"p50": None, "p95": None}
        return {"p50": float(np.percentile(lats, 50)), "p95": float(np.percentile(lats, 95))}

    def summary(self) -> dict:
        mttr = self.mttr_samples
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "counters": self.counters,
            "latency_ms": self.percentiles(),
            "windows": self.windows,
            "mttr_ms": {"samples": mttr, "mean": (sum(mttr) / len(mttr)) if mttr else None},
            "trace_digest": self.trace_digest,
            "config": self.config,
        }


def make_subscribers(scenario: Scenario, seed: int) -> list[SubscriberProfile]:
    if scenario.hss.subscribers_file:
        return load_subscribers(scenario.hss.subscribers_file)
    rng = stream_rng(seed, "subscribers")
    alphabet = string.ascii_lowercase + string.digits
    users: list[str] = []
    while len(users) < scenario.subscriber_count:
        user = "".join(rng.choice(alphabet) for _ in range(8))
        if user not in users:
            users.append(user)
    return [SubscriberProfile(SipUri(user, "ims.test"), f"User {i}",
                              scenario.hss.max_concurrent_calls)
            for i, user in enumerate(users)]


class LoadGenerator:
    """Constant-rate arrivals; an arrival is throttled when the number of
    established plus establishing calls has reached ``max_concurrent``.
    Caller/callee pairs are taken round-robin."""

    def __init__(self, system: ImsSystem, subscribers: list[SubscriberProfile]) -> None:
        self.sys = system
        self.sc = system.scenario
        uris = [p.uri for p in subscribers]
        self.pairs = [(uris[2 * i], uris[2 * i + 1]) for i in range(len(uris) // 2)]
        if not self.pairs:
            raise ValueError("need at least two subscribers")
        self.next_pair = 0
        self.arrivals = 0
        self.throttled = 0
        self.records: list[CallRecord] = []
        self._by_call: dict[str, CallRecord] = {}
        self.redialed: set[str] = set()
        self.stopped = False
        system.dropped_hooks.append(self._maybe_redial)

    def start(self) -> None:
        self._schedule_arrival(0)

    def _schedule_arrival(self, k: int) -> None:
        at = int(round(k * self.sc.interarrival_ms))
        if at >= self.sc.duration_ms:
            return
        self.sys.engine.schedule(at, lambda: self._arrive(k), kind="timer", src="ue",
                                 detail=f"arrival {k}")

    def _arrive(self, k: int) -> None:
        self.arrivals += 1
        cap = self.sc.max_concurrent
        if cap is not None and self.sys.calls.live_count() >= cap:
            self.throttled += 1
        else:
            caller, callee = self.pairs[self.next_pair % len(self.pairs)]
            self.next_pair += 1
            self.place(caller, callee)
        self._schedule_arrival(k + 1)

    def place(self, caller: SipUri, callee: SipUri, redial: bool = False) -> CallSession:
        index = len(self.records) + 1
        session = CallSession(f"c{index}", caller, callee, index=index)
        rec = CallRecord(index, str(caller), str(callee), self.sys.engine.now, "", None, "",
                         concurrency=self.sys.calls.live_count(), redial=redial)
        self.records.append(rec)
        self._by_call[session.call_id] = rec
        self.sys.calls.place_call(session)
        return session

    def _maybe_redial(self, session: CallSession) -> None:
        delay = self.sc.redial_delay_ms
        if (delay is None or self.stopped or session.drop_reason != "dropped-failure"
                or self._by_call[session.call_id].redial):
            return
        self.arrivals += 1
        self.sys.engine.schedule(self.sys.engine.now + delay,
                                 lambda: self.place(session.originator, session.callee, True),
                                 kind="timer", src="ue", detail=f"redial {session.call_id}")

    def finalize(self) -> list[CallRecord]:
        for rec in self.records:
            s = self.sys.calls.sessions[f"c{rec.index}"]
            rec.pouch = s.target or ""
            rec.pouch_load = s.pouch_load
            if s.t_established is not None:
                rec.outcome = "established"
                rec.latency_ms = s.latency_ms
            else:
                rec.outcome = s.drop_reason or "unfinished"
        return self.records


def _window_stats(records: list[CallRecord], width: int) -> list[dict]:
    buckets: dict[int, list[int]] = {}
    for r in records:
        if r.latency_ms is not None:
            buckets.setdefault(r.t_invite_ms // width, []).append(r.latency_ms)
    return [{"start_ms": b * width, "n": len(v),
             "p50": float(np.percentile(v, 50)), "p95": float(np.percentile(v, 95))}
            for b, v in sorted(buckets.items())]


@dataclass
class Run:
    system: ImsSystem
    generator: LoadGenerator
    report: MetricsReport


def simulate(scenario: Scenario, seed: int = 0, trace: bool = False) -> Run:
    """Run ``scenario`` to its horizon, drain in-flight calls, build the report."""
    scenario.validate()
    subscribers = make_subscribers(scenario, seed)
    system = ImsSystem(scenario, seed, subscribers, trace=trace)
    gen = LoadGenerator(system, subscribers)
    engine = system.engine

    samples: list[tuple[int, int]] = []

    def sample() -> None:
        samples.append((engine.now, system.calls.live_count()))
        nxt = engine.now + scenario.sample_period_ms
        if nxt < scenario.duration_ms:
            engine.schedule(nxt, sample, kind="timer", detail="sample")

    engine.schedule(0, sample, kind="timer", detail="sample")

    failures: list[int] = []
    pending: dict[str, int] = {}
    mttr: list[int] = []

    def on_drop(s: CallSession) -> None:
        if s.drop_reason == "dropped-failure" and failures:
            pending.setdefault(str(s.originator), failures[-1])

    def on_established(s: CallSession) -> None:
        t_fail = pending.get(str(s.originator))
        if t_fail is not None and s.t_invite_sent >= t_fail:
            mttr.append(s.t_established - t_fail)
            del pending[str(s.originator)]

    system.dropped_hooks.append(on_drop)
    system.established_hooks.append(on_established)

    if scenario.fail_at_ms is not None:
        def fail() -> None:
            failures.append(engine.now)
            system.fail_pouch(scenario.fail_pouch)

        engine.schedule(scenario.fail_at_ms, fail, kind="fault", dst=scenario.fail_pouch or "")

    gen.start()
    engine.run_until(scenario.duration_ms)
    gen.stopped = True
    system.mu.stop()
    engine.run()

    records = gen.finalize()
    report = MetricsReport(scenario.name, seed, records=records,
                           concurrency_samples=samples, mttr_samples=mttr,
                           config=scenario.to_dict(), trace_digest=engine.trace_digest(),
                           trace=list(engine.trace) if trace else None)
    report.counters = build_counters(system, gen)
    report.windows = _window_stats(records, scenario.latency_window_ms)
    return Run(system, gen, report)


def build_counters(system: ImsSystem, gen: LoadGenerator) -> dict:
    outcomes = Counter(r.outcome for r in gen.records)
    busy = Counter(s.kind for s in system.mu.busy_log)
    caches = list(system.hss.caches.values())
    hits = sum(c.hits for c in caches) + system.hss_dropped_hits
    misses = sum(c.misses for c in caches) + system.hss_dropped_misses
    actions = Counter(a.action for a in system.mu.actions)
    established_then_dropped = sum(
        1 for s in system.calls.sessions.values()
        if s.state is SessionState.DROPPED and s.t_established is not None)
    return {
        "arrivals": gen.arrivals,
        "placed": len(gen.records),
        "throttled": gen.throttled,
        **{o.replace("-", "_"): outcomes.get(o, 0) for o in OUTCOMES},
        "unfinished": outcomes.get("unfinished", 0),
        "established_then_dropped": established_then_dropped,
        "busy_signals": {k: busy.get(k, 0) for k in ("capacity", "media", "node-failure")},
        "central_hss_queries": system.hss.queries,
        "cache_hits": hits,
        "cache_misses": misses,
        "cache_hit_ratio": (hits / (hits + misses)) if hits + misses else 0.0,
        "invalidations": system.hss.invalidations_sent,
        "provisioning_events": actions.get("provision", 0) + actions.get("replace", 0),
        "drain_events": actions.get("drain", 0),
        "retire_events": actions.get("retire", 0),
        "qos_recommendations": system.mu.qos_recommendations,
        "node_set_version": system.mu.node_set.version,
        "lb_node_set_versions": system.lb_versions(),
        "messages_sent": system.engine.sent,
        "messages_delivered": system.engine.delivered,
        "messages_dropped": system.engine.dropped,
        "events_executed": system.engine.executed,
        "final_now_ms": system.engine.now,
    }


def run_scenario(scenario: Scenario, seed: int = 0, trace: bool = False) -> MetricsReport:
    return simulate(scenario, seed, trace).report


def calls_csv(report: MetricsReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in report.records:
        w.writerow([r.index, r.subscriber, r.t_invite_ms, r.outcome,
                    "" if r.latency_ms is None else r.latency_ms, r.pouch])
    return buf.getvalue()


def emit(report: MetricsReport, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "calls.csv", out / "summary.json"]
    paths[0].write_text(calls_csv(report), encoding="utf-8", newline="")
    paths[1].write_text(json.dumps(report.summary(), indent=2, sort_keys=True) + "\n",
                        encoding="utf-8")
    if report.trace is not None:
        trace_path = out / "trace.tsv"
        trace_path.write_text("".join(line + "\n" for line in report.trace), encoding="utf-8")
        paths.append(trace_path)
    return paths


def empty_report(scenario: Scenario, seed: int) -> MetricsReport:
    """Report of a run with no arrivals (zero counters)."""
    return MetricsReport(scenario.name, seed, config=scenario.to_dict(), counters={
        "arrivals": 0, "placed": 0, "throttled": 0,
        **{o.replace("-", "_"): 0 for o in OUTCOMES},
        "central_hss_queries": 0, "cache_hits": 0, "cache_misses": 0, "cache_hit_ratio": 0.0,
        "provisioning_events": 0,
    })


def mean_concurrency(report: MetricsReport, start_ms: int, end_ms: int) -> float:
    vals = [n for t, n in report.concurrency_samples if start_ms <= t < end_ms]
    return sum(vals) / len(vals) if vals else math.nan
