"""Management unit: reacts to busy signals, keeps a headroom of extra pouches,
retires idle ones, and owns the authoritative node set."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .hrw import NodeSet
from .pouch import Pouch, PouchPool

BUSY_KINDS = ("capacity", "media", "node-failure")


@dataclass
class AutoscalerConfig:
    enabled: bool = False
    n_extra: int = 0
    headroom_period_ms: int = 10_000
    low_util_threshold: float = 0.3
    dwell_ms: int = 60_000
    latency_slo_ms: int = 2_500
    utilization_limit: float = 0.9
    rtt_limit_ms: Optional[float] = None
    qos_trigger: bool = True
    replace_failed: bool = True


@dataclass(frozen=True)
class BusySignal:
    at: int
    pouch: str
    call_id: str
    kind: str

    def __post_init__(self) -> None:
        if self.kind not in BUSY_KINDS:
            raise ValueError(f"unknown busy kind {self.kind!r}")


@dataclass(frozen=True)
class ScaleAction:
    at: int
    action: str  # provision | drain | retire | replace
    host: str
    reason: str


@dataclass(frozen=True)
class BusyDecision:
    signal: BusySignal
    in_flight: bool
    provisioned: Optional[str]


def required_pouches(total_active_sessions: int, capacity_sessions: int) -> int:
    return math.ceil(total_active_sessions / capacity_sessions)


def headroom_target(required: int, n_extra: int) -> int:
    return max(required + n_extra, 1)


def qos_trigger(mean_rtt_ms: float, utilizations: Iterable[float],
                latencies_ms: Sequence[float], latency_slo_ms: float,
                utilization_limit: float = 0.9,
                rtt_limit_ms: Optional[float] = None) -> bool:
    """Scale-up recommendation from the three QoS inputs.

    p95 establishment latency above the SLO, or any pouch above the
    utilization limit, recommends one more pouch. The RTT input only
    counts when ``rtt_limit_ms`` is set.
    """
    utils = list(utilizations)
    if utils and max(utils) > utilization_limit:
        return True
    if len(latencies_ms) and float(np.percentile(latencies_ms, 95)) > latency_slo_ms:
        return True
    if rtt_limit_ms is not None and mean_rtt_ms > rtt_limit_ms:
        return True
    return False


class ManagementUnit:
    """Serialises every node-set change and pushes versioned snapshots to
    the rendezvous LBs through ``push``.

    ``qos_inputs`` returns ``(mean_rtt_ms, utilizations, recent_latencies)``
    for the trigger; ``active_sessions`` returns the fleet-wide count.
    """

    def __init__(self, engine, pool: PouchPool, config: AutoscalerConfig,
                 push: Callable[[NodeSet], None],
                 active_sessions: Callable[[], int],
                 qos_inputs: Optional[Callable[[], tuple]] = None) -> None:
        self.engine = engine
        self.pool = pool
        self.config = config
        self.push = push
        self.active_sessions = active_sessions
        self.qos_inputs = qos_inputs
        self.node_set = NodeSet()
        self.busy_log: list[BusySignal] = []
        self.busy_decisions: list[BusyDecision] = []
        self.actions: list[ScaleAction] = []
        self.busy_provisioning: Optional[str] = None
        self.qos_recommendations = 0
        self._low_since: dict[str, int] = {}
        self._stopped = False

    # -- node set -------------------------------------------------------

    def _publish(self, node_set: NodeSet) -> None:
        self.node_set = node_set
        self.engine.schedule(self.engine.now, kind="nodeset", src="mgmt",
                             detail=f"v{node_set.version} {','.join(node_set.members)}")
        self.push(node_set)

    def install_initial(self, hosts: Iterable[str]) -> NodeSet:
        self.node_set = NodeSet(tuple(hosts), 1)
        return self.node_set

    def on_pouch_active(self, pouch: Pouch) -> None:
        if self.busy_provisioning == pouch.host:
            self.busy_provisioning = None
        self._publish(self.node_set.with_added(pouch.host))

    def on_pouch_failed(self, pouch: Pouch) -> None:
        self._low_since.pop(pouch.host, None)
        if pouch.host in self.node_set:
            self._publish(self.node_set.with_removed(pouch.host))
        if self.busy_provisioning == pouch.host:
            self.busy_provisioning = None
        if self.config.enabled and self.config.replace_failed:
            self.busy_provisioning = self._provision("replace", f"failed {pouch.host}").host

    # -- scaling --------------------------------------------------------

    def _record(self, action: str, host: str, reason: str) -> None:
        self.actions.append(ScaleAction(self.engine.now, action, host, reason))
        self.engine.schedule(self.engine.now, kind="scale", src="mgmt", dst=host,
                             detail=f"{action} {reason}")

    def _provision(self, action: str, reason: str) -> Pouch:
        pouch = self.pool.provision()
        self._record(action, pouch.host, reason)
        return pouch

    def allocated(self) -> int:
        """Active (not draining) plus provisioning pouches."""
        return sum(1 for p in self.pool if p.accepting) + len(self.pool.provisioning())

    def required(self, record: bool = False) -> int:
        req = required_pouches(self.active_sessions(), self.pool.config.capacity_sessions)
        if self.config.qos_trigger and self.qos_inputs is not None:
            rtt, utils, lats = self.qos_inputs()
            if qos_trigger(rtt, utils, lats, self.config.latency_slo_ms,
                           self.config.utilization_limit, self.config.rtt_limit_ms):
                self.qos_recommendations += record
                req += 1
        return req

    def target(self, record: bool = False) -> int:
        return headroom_target(self.required(record), self.config.n_extra)

    def on_busy(self, signal: BusySignal) -> Optional[str]:
        self.busy_log.append(signal)
        in_flight = bool(self.pool.provisioning())
        host = None
        if self.config.enabled and not in_flight:
            host = self._provision("provision", f"busy {signal.kind} {signal.call_id}").host
            self.busy_provisioning = host
        self.busy_decisions.append(BusyDecision(signal, in_flight, host))
        return host

    def start(self) -> None:
        if self.config.enabled:
            self.engine.schedule(self.engine.now + self.config.headroom_period_ms,
                                 self._sweep, kind="timer", src="mgmt", detail="headroom")

    def stop(self) -> None:
        self._stopped = True

    def _sweep(self) -> None:
        if self._stopped:
            return
        self.enforce_headroom(self.engine.now)
        self.engine.schedule(self.engine.now + self.config.headroom_period_ms,
                             self._sweep, kind="timer", src="mgmt", detail="headroom")

    def enforce_headroom(self, now: int) -> list[ScaleAction]:
        before = len(self.actions)
        target = self.target(record=True)
        for _ in range(target - self.allocated()):
            self._provision("provision", f"headroom target={target}")

        accepting = sorted((p for p in self.pool if p.accepting), key=lambda p: p.host)
        for p in accepting:
            if p.utilization < self.config.low_util_threshold:
                self._low_since.setdefault(p.host, now)
            else:
                self._low_since.pop(p.host, None)
        surplus = len(accepting) - target
        if surplus > 0:
            idle = [p for p in accepting
                    if p.host in self._low_since
                    and now - self._low_since[p.host] >= self.config.dwell_ms]
            idle.sort(key=lambda p: (p.utilization, p.host))
            for p in idle[:surplus]:
                if len(self.node_set) <= 1:
                    break
                self._drain(p)
        self.retire_drained()
        return self.actions[before:]

    def _drain(self, pouch: Pouch) -> None:
        pouch.draining = True
        self._low_since.pop(pouch.host, None)
        self._record("drain", pouch.host, "low utilization")
        if pouch.host in self.node_set:
            self._publish(self.node_set.with_removed(pouch.host))

    def retire_drained(self) -> None:
        for p in list(self.pool):
            if p.is_active and p.draining and p.idle:
                self.pool.retire(p.host)
                self._record("retire", p.host, "drained")
