"""Pouches: isolated compute nodes hosting per-session actors.

Load is tracked in actor units. A co-located session puts all six actors
(6 units) on one pouch; a spread session puts one unit on each pouch that
hosts one of its actors. Utilization is ``units / (6 * capacity)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

ACTORS_PER_SESSION = 6

POUCH_DOMAIN = "ims.test"


def pouch_host(index: int) -> str:
    # FNV-1a separates keys poorly when host names differ only in their last
    # byte, so the index is followed by a fixed domain suffix
    return f"p{index}.{POUCH_DOMAIN}"


class PouchState(str, enum.Enum):
    PROVISIONING = "Provisioning"
    ACTIVE = "Active"
    FAILED = "Failed"
    RETIRED = "Retired"


class PouchNotActive(RuntimeError):
    pass


class DuplicateHost(ValueError):
    pass


class CapacityViolation(AssertionError):
    pass


@dataclass
class PouchConfig:
    capacity_sessions: int = 30
    media_slots: int = 64
    base_service_ms: int = 313
    provisioning_delay_ms: int = 5000
    initial_pouch_count: int = 8
    load_cap: float = 10.0


def inflation(rho: float, cap: float = 10.0) -> float:
    """1/(1-rho), saturating at ``cap``."""
    if rho >= 1.0:
        return cap
    return min(1.0 / (1.0 - rho), cap)


@dataclass
class Pouch:
    host: str
    capacity_sessions: int
    media_slots: int
    base_service_ms: int
    load_cap: float = 10.0
    state: PouchState = PouchState.PROVISIONING
    active_sessions: int = 0
    actor_units: int = 0
    media_used: int = 0
    draining: bool = False
    created_at: int = 0
    active_at: Optional[int] = None
    ended_at: Optional[int] = None
    peak_sessions: int = 0

    def __post_init__(self) -> None:
        if self.capacity_sessions < 1 or self.media_slots < 1:
            raise ValueError("capacity_sessions and media_slots must be positive")

    @classmethod
    def from_config(cls, host: str, cfg: PouchConfig, **kw) -> "Pouch":
        return cls(host, cfg.capacity_sessions, cfg.media_slots, cfg.base_service_ms,
                   cfg.load_cap, **kw)

    @property
    def is_active(self) -> bool:
        return self.state is PouchState.ACTIVE

    @property
    def accepting(self) -> bool:
        return self.is_active and not self.draining

    @property
    def utilization(self) -> float:
        return self.actor_units / (ACTORS_PER_SESSION * self.capacity_sessions)

    @property
    def idle(self) -> bool:
        return self.actor_units == 0 and self.active_sessions == 0 and self.media_used == 0

    def admit(self) -> bool:
        """Take one session if below capacity; False means busy."""
        if not self.is_active:
            raise PouchNotActive(f"{self.host} is {self.state.value}")
        if self.draining or self.active_sessions >= self.capacity_sessions:
            return False
        self.active_sessions += 1
        if self.active_sessions > self.capacity_sessions:
            raise CapacityViolation(self.host)
        self.peak_sessions = max(self.peak_sessions, self.active_sessions)
        return True

    def release(self) -> None:
        if self.active_sessions <= 0:
            raise RuntimeError(f"{self.host}: release without admit")
        self.active_sessions -= 1

    def add_units(self, n: int) -> None:
        self.actor_units += n

    def remove_units(self, n: int) -> None:
        if n > self.actor_units:
            raise RuntimeError(f"{self.host}: actor units would go negative")
        self.actor_units -= n

    def reserve_media(self) -> bool:
        if self.media_used >= self.media_slots:
            return False
        self.media_used += 1
        return True

    def release_media(self) -> None:
        if self.media_used <= 0:
            raise RuntimeError(f"{self.host}: media release without reserve")
        self.media_used -= 1

    def service_time(self, exclude_units: int = 0) -> int:
        """Per-actor processing time in ms at the current load.

        ``exclude_units`` removes the caller's own session from the load so
        the utilization is the one seen before that session was admitted.
        """
        if not self.is_active:
            raise PouchNotActive(f"{self.host} is {self.state.value}")
        units = max(self.actor_units - exclude_units, 0)
        rho = units / (ACTORS_PER_SESSION * self.capacity_sessions)
        return int(round(self.base_service_ms * inflation(rho, self.load_cap)))


@dataclass
class PouchPool:
    """All pouches of a run, keyed by host name.

    ``engine`` only needs ``now``, ``schedule`` and ``register_host`` /
    ``set_host_up``; ``on_active`` and ``on_failed`` are notified with the
    pouch once its state changes.
    """

    engine: object
    config: PouchConfig
    on_active: Optional[Callable[[Pouch], None]] = None
    on_failed: Optional[Callable[[Pouch], None]] = None
    pouches: dict = field(default_factory=dict)
    _next_index: int = 0

    def __getitem__(self, host: str) -> Pouch:
        return self.pouches[host]

    def __iter__(self):
        return iter(self.pouches.values())

    def next_host(self) -> str:
        while pouch_host(self._next_index) in self.pouches:
            self._next_index += 1
        return pouch_host(self._next_index)

    def active(self) -> list[Pouch]:
        return [p for p in self.pouches.values() if p.is_active]

    def provisioning(self) -> list[Pouch]:
        return [p for p in self.pouches.values() if p.state is PouchState.PROVISIONING]

    def add_active(self, host: str) -> Pouch:
        """Bring up a pouch with no provisioning delay (initial fleet)."""
        pouch = self._create(host)
        self._activate(pouch)
        return pouch

    def provision(self, host: Optional[str] = None) -> Pouch:
        host = host or self.next_host()
        pouch = self._create(host)
        self.engine.schedule(self.engine.now + self.config.provisioning_delay_ms,
                             lambda: self._activate(pouch), kind="pouch", dst=host,
                             detail="active")
        return pouch

    def _create(self, host: str) -> Pouch:
        if host in self.pouches:
            raise DuplicateHost(host)
        pouch = Pouch.from_config(host, self.config, created_at=self.engine.now)
        self.pouches[host] = pouch
        self.engine.register_host(host)
        self.engine.set_host_up(host, False)
        return pouch

    def _activate(self, pouch: Pouch) -> None:
        if pouch.state is not PouchState.PROVISIONING:
            return
        pouch.state = PouchState.ACTIVE
        pouch.active_at = self.engine.now
        self.engine.set_host_up(pouch.host, True)
        if self.on_active is not None:
            self.on_active(pouch)

    def fail(self, host: str) -> Pouch:
        pouch = self.pouches[host]
        if not pouch.is_active:
            raise PouchNotActive(f"{host} is {pouch.state.value}")
        pouch.state = PouchState.FAILED
        pouch.ended_at = self.engine.now
        self.engine.set_host_up(host, False)
        if self.on_failed is not None:
            self.on_failed(pouch)
        return pouch

    def retire(self, host: str) -> Pouch:
        pouch = self.pouches[host]
        if not pouch.idle:
            raise RuntimeError(f"{host} still hosts sessions")
        pouch.state = PouchState.RETIRED
        pouch.ended_at = self.engine.now
        self.engine.set_host_up(host, False)
        return pouch
