"""Wires engine, pouches, balancers, HSS, management unit and call control
into one simulated IMS deployment."""

from __future__ import annotations

from collections import deque
from typing import Callable, Iterable, Optional

from .autoscaler import ManagementUnit
from .config import Scenario
from .engine import SimEngine, TransportModel
from .hrw import EntryBalancer, NodeSet, RendezvousLb
from .hss import CentralHss, SubscriberProfile
from .pouch import Pouch, PouchPool, pouch_host
from .sessions import CallControl, CallSession, Internal

SERVICE_HOSTS = ("ue", "callee", "entry", "hss", "mgmt")


class ImsSystem:
    def __init__(self, scenario: Scenario, seed: int = 0,
                 profiles: Iterable[SubscriberProfile] = (), trace: bool = False) -> None:
        self.scenario = scenario
        self.seed = seed
        t = scenario.transport
        self.engine = SimEngine(seed, TransportModel(t.base_hop_latency_ms, t.jitter_ms, seed),
                                trace=trace)
        for host in SERVICE_HOSTS:
            self.engine.register_host(host)

        self.hss = CentralHss(profiles, invalidation_sender=self._send_invalidation)
        self.hss_dropped_hits = 0
        self.hss_dropped_misses = 0
        self.lbs = [RendezvousLb(f"rlb{i}", shard_mode=scenario.hss.shard_mode)
                    for i in range(scenario.session.rendezvous_lb_count)]
        for lb in self.lbs:
            self.engine.register_host(lb.id)
        self.entry = EntryBalancer(self.lbs)

        self.pool = PouchPool(self.engine, scenario.pouch)
        self.calls = CallControl(self)
        self.recent_latencies: deque = deque()
        self.mu = ManagementUnit(self.engine, self.pool, scenario.autoscaler,
                                 push=self._push_node_set,
                                 active_sessions=self.total_active_sessions,
                                 qos_inputs=self._qos_inputs)

        for i in range(scenario.pouch.initial_pouch_count):
            self.pool.add_active(pouch_host(i))
        initial = self.mu.install_initial(p.host for p in self.pool.active())
        for lb in self.lbs:
            lb.update(initial)
        self.pool.on_active = self.mu.on_pouch_active
        self.pool.on_failed = self._pouch_failed

        self.established_hooks: list[Callable[[CallSession], None]] = []
        self.dropped_hooks: list[Callable[[CallSession], None]] = []
        self.ended_hooks: list[Callable[[CallSession], None]] = []
        self.mu.start()

    # -- wiring callbacks -------------------------------------------------

    def _push_node_set(self, node_set: NodeSet) -> None:
        for lb in self.lbs:
            self.engine.send(Internal("nodeset", f"v{node_set.version}", node_set), "mgmt", lb.id,
                             lambda m, lb=lb: lb.update(m.data))

    def _send_invalidation(self, pouch: str, uri) -> None:
        def apply(msg: Internal) -> None:
            cache = self.hss.caches.get(pouch)
            if cache is not None:
                cache.invalidate(msg.data)

        self.engine.send(Internal("invalidate", str(uri.user), uri), "hss", pouch, apply)

    def _pouch_failed(self, pouch: Pouch) -> None:
        cache = self.hss.drop_cache(pouch.host)
        if cache is not None:
            self.hss_dropped_hits += cache.hits
            self.hss_dropped_misses += cache.misses
        self.mu.on_pouch_failed(pouch)
        self.calls.on_pouch_failed(pouch.host)

    def _qos_inputs(self) -> tuple:
        now = self.engine.now
        window = self.scenario.autoscaler.headroom_period_ms
        while self.recent_latencies and self.recent_latencies[0][0] < now - window:
            self.recent_latencies.popleft()
        return (self.engine.transport.mean_recent_rtt_ms(),
                [p.utilization for p in self.pool.active()],
                [lat for _, lat in self.recent_latencies])

    # -- hooks called by CallControl --------------------------------------

    def on_established(self, session: CallSession) -> None:
        self.recent_latencies.append((self.engine.now, session.latency_ms))
        for hook in self.established_hooks:
            hook(session)

    def on_dropped(self, session: CallSession) -> None:
        for hook in self.dropped_hooks:
            hook(session)

    def on_ended(self, session: CallSession) -> None:
        for hook in self.ended_hooks:
            hook(session)

    def after_release(self, session: CallSession) -> None:
        if any(p.draining for p in self.pool.active()):
            self.mu.retire_drained()

    # -- queries ------------------------------------------------------------

    def total_active_sessions(self) -> int:
        return sum(p.active_sessions for p in self.pool.active())

    def update_profile(self, uri, profile: SubscriberProfile) -> int:
        return self.hss.update_profile(uri, profile)

    def fail_pouch(self, host: Optional[str] = None) -> Pouch:
        if host is None or host not in self.pool.pouches or not self.pool[host].is_active:
            host = sorted(p.host for p in self.pool.active())[0]
        return self.pool.fail(host)

    def lb_versions(self) -> list[int]:
        return [lb.node_set.version for lb in self.lbs]
