"""Deterministic discrete-event core: virtual clock, event queue, seeded
streams and a reliable in-order transport with per-hop latency."""

from __future__ import annotations

import hashlib
import heapq
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Optional


class SchedulingInPast(ValueError):
    pass


class UnknownHost(KeyError):
    pass


def derive_seed(root_seed: int, stream: str) -> int:
    """64-bit seed for a named consumer; adding a stream never shifts another."""
    digest = hashlib.sha256(f"{root_seed & 0xFFFFFFFFFFFFFFFF}:{stream}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def stream_rng(root_seed: int, stream: str) -> random.Random:
    return random.Random(derive_seed(root_seed, stream))


@dataclass(order=True)
class Event:
    fire_at: int
    seq: int
    kind: str = field(compare=False, default="timer")
    src: str = field(compare=False, default="")
    dst: str = field(compare=False, default="")
    detail: str = field(compare=False, default="")
    action: Optional[Callable[[], None]] = field(compare=False, default=None, repr=False)

    @property
    def id(self) -> int:
        return self.seq


@dataclass
class TransportModel:
    base_hop_latency_ms: int = 20
    jitter_ms: int = 0
    seed: int = 0
    window: int = 256

    def __post_init__(self) -> None:
        if self.base_hop_latency_ms < 0 or self.jitter_ms < 0:
            raise ValueError("latency and jitter must be non-negative")
        self._rng = stream_rng(self.seed, "transport")
        self.recent: deque[int] = deque(maxlen=self.window)

    def sample(self) -> int:
        if self.jitter_ms == 0:
            lat = self.base_hop_latency_ms
        else:
            lat = self.base_hop_latency_ms + self._rng.randint(-self.jitter_ms, self.jitter_ms)
        lat = max(lat, 0)
        self.recent.append(lat)
        return lat

    def mean_recent_rtt_ms(self) -> float:
        if not self.recent:
            return 2.0 * self.base_hop_latency_ms
        return 2.0 * sum(self.recent) / len(self.recent)


def describe(msg: Any) -> str:
    describe_fn = getattr(msg, "describe", None)
    if describe_fn is not None:
        return describe_fn()
    return type(msg).__name__


class SimEngine:
    """Single-threaded event loop in integer milliseconds.

    Events are ordered by ``(fire_at, seq)``. Messages between registered
    hosts go through :meth:`send`; a host that is down at delivery time
    swallows the message and it is counted as dropped.
    """

    def __init__(self, seed: int = 0, transport: Optional[TransportModel] = None,
                 trace: bool = False) -> None:
        self.seed = seed
        self.now = 0
        self.transport = transport if transport is not None else TransportModel(seed=seed)
        self.tracing = trace
        self.trace: list[str] = []
        self._digest = hashlib.sha256()
        self._queue: list[Event] = []
        self._seq = 0
        self._hosts: dict[str, bool] = {}
        self._last_delivery: dict[tuple[str, str], int] = {}
        self.sent = 0
        self.delivered = 0
        self.dropped = 0
        self.executed = 0

    # -- hosts ------------------------------------------------------------

    def register_host(self, name: str) -> None:
        self._hosts[name] = True

    def set_host_up(self, name: str, up: bool) -> None:
        if name not in self._hosts:
            raise UnknownHost(name)
        self._hosts[name] = up

    def host_up(self, name: str) -> bool:
        return self._hosts.get(name, False)

    def has_host(self, name: str) -> bool:
        return name in self._hosts

    # -- scheduling -------------------------------------------------------

    def rng(self, stream: str) -> random.Random:
        return stream_rng(self.seed, stream)

    @property
    def pending(self) -> int:
        return len(self._queue)

    def schedule(self, at: int, action: Optional[Callable[[], None]] = None, *,
                 kind: str = "timer", src: str = "", dst: str = "", detail: str = "") -> int:
        if at < self.now:
            raise SchedulingInPast(f"at={at} < now={self.now}")
        self._seq += 1
        heapq.heappush(self._queue, Event(int(at), self._seq, kind, src, dst, detail, action))
        return self._seq

    def schedule_in(self, delay: int, action: Optional[Callable[[], None]] = None, **kw: str) -> int:
        return self.schedule(self.now + delay, action, **kw)

    def _execute(self, ev: Event) -> None:
        self.now = ev.fire_at
        self.executed += 1
        line = f"{ev.fire_at}\t{ev.kind}\t{ev.src}\t{ev.dst}\t{ev.detail}"
        self._digest.update(line.encode())
        self._digest.update(b"\n")
        if self.tracing:
            self.trace.append(line)
        if ev.action is not None:
            ev.action()

    def run_until(self, t_end: int) -> int:
        if t_end < self.now:
            raise SchedulingInPast(f"t_end={t_end} < now={self.now}")
        count = 0
        while self._queue and self._queue[0].fire_at <= t_end:
            self._execute(heapq.heappop(self._queue))
            count += 1
        self.now = t_end
        return count

    def run(self, limit: Optional[int] = None) -> int:
        """Drain the queue completely (optionally stopping after ``limit`` events)."""
        count = 0
        while self._queue and (limit is None or count < limit):
            self._execute(heapq.heappop(self._queue))
            count += 1
        return count

    # -- transport --------------------------------------------------------

    def send(self, msg: Any, src: str, dst: str, handler: Callable[[Any], None], *,
             delay: int = 0, on_drop: Optional[Callable[[Any], None]] = None) -> int:
        """Deliver ``msg`` to ``handler`` on ``dst`` after ``delay`` plus one hop.

        Same-host messages take no network time. Per (src, dst) pair the
        delivery order equals the send order.
        """
        for host in (src, dst):
            if host not in self._hosts:
                raise UnknownHost(host)
        latency = 0 if src == dst else self.transport.sample()
        at = self.now + delay + latency
        pair = (src, dst)
        at = max(at, self._last_delivery.get(pair, 0))
        self._last_delivery[pair] = at
        self.sent += 1

        def deliver() -> None:
            if not self._hosts.get(dst, False):
                self.dropped += 1
                if on_drop is not None:
                    on_drop(msg)
                return
            self.delivered += 1
            handler(msg)

        return self.schedule(at, deliver, kind="msg", src=src, dst=dst, detail=describe(msg))

    # -- trace ------------------------------------------------------------

    def trace_digest(self) -> str:
        return self._digest.hexdigest()

    def write_trace(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for line in self.trace:
                fh.write(line + "\n")
