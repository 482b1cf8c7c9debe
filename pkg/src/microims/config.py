"""Scenario configuration: nested dataclasses, presets and TOML loading."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .autoscaler import AutoscalerConfig
from .hrw import SHARD_MODES
from .pouch import PouchConfig
from .sessions import PLACEMENTS

SCENARIOS = ("baseline", "autoscale", "failure", "tradeoff", "custom")


class ConfigInvalid(ValueError):
    pass


@dataclass
class TransportConfig:
    base_hop_latency_ms: int = 20
    jitter_ms: int = 5


@dataclass
class HssConfig:
    hss_query_latency_ms: int = 40
    local_cache_latency_ms: int = 1
    shard_mode: str = "hrw-uri"
    subscribers_file: Optional[str] = None
    max_concurrent_calls: int = 10


@dataclass
class SessionConfig:
    placement: str = "co-located"
    rendezvous_lb_count: int = 2
    lb_service_ms: int = 0


@dataclass
class Scenario:
    name: str = "custom"
    arrival_per_min: float = 30.0
    max_concurrent: Optional[int] = 80
    hold_ms: int = 300_000
    duration_ms: int = 3_600_000
    subscriber_count: int = 80
    fail_at_ms: Optional[int] = None
    fail_pouch: Optional[str] = None
    redial_delay_ms: Optional[int] = None
    sample_period_ms: int = 1_000
    latency_window_ms: int = 60_000
    transport: TransportConfig = field(default_factory=TransportConfig)
    pouch: PouchConfig = field(default_factory=PouchConfig)
    hss: HssConfig = field(default_factory=HssConfig)
    session: SessionConfig = field(default_factory=SessionConfig)
    autoscaler: AutoscalerConfig = field(default_factory=AutoscalerConfig)

    @property
    def interarrival_ms(self) -> float:
        return 60_000 / self.arrival_per_min

    def validate(self) -> "Scenario":
        problems = []
        if self.name not in SCENARIOS:
            problems.append(f"unknown scenario name {self.name!r}")
        if not self.arrival_per_min > 0:
            problems.append("arrival_per_min must be > 0")
        if self.max_concurrent is not None and self.max_concurrent < 1:
            problems.append("max_concurrent must be >= 1")
        if self.hold_ms <= 0 or self.duration_ms < self.hold_ms:
            problems.append("duration_ms must cover at least one hold_ms period")
        if self.subscriber_count < 2 and self.hss.subscribers_file is None:
            problems.append("subscriber_count must be >= 2")
        p = self.pouch
        if p.capacity_sessions < 1 or p.media_slots < 1 or p.base_service_ms < 0:
            problems.append("pouch capacity/media/service must be positive")
        if p.initial_pouch_count < 1:
            problems.append("initial_pouch_count must be >= 1")
        if p.provisioning_delay_ms < 0 or p.load_cap < 1:
            problems.append("provisioning_delay_ms >= 0 and load_cap >= 1 required")
        t = self.transport
        if t.base_hop_latency_ms < 0 or t.jitter_ms < 0:
            problems.append("transport latencies must be non-negative")
        if self.hss.shard_mode not in SHARD_MODES:
            problems.append(f"shard_mode must be one of {SHARD_MODES}")
        if self.session.placement not in PLACEMENTS:
            problems.append(f"placement must be one of {PLACEMENTS}")
        if self.session.rendezvous_lb_count < 1:
            problems.append("rendezvous_lb_count must be >= 1")
        a = self.autoscaler
        if a.n_extra < 0 or a.headroom_period_ms <= 0 or a.dwell_ms < 0:
            problems.append("autoscaler n_extra/headroom_period_ms/dwell_ms out of range")
        if not 0 <= a.low_util_threshold <= 1:
            problems.append("low_util_threshold must be in [0, 1]")
        if problems:
            raise ConfigInvalid("; ".join(problems))
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_SECTIONS = {
    "transport": TransportConfig,
    "pouch": PouchConfig,
    "hss": HssConfig,
    "session": SessionConfig,
    "autoscaler": AutoscalerConfig,
}


def _apply(obj, values: dict, where: str):
    known = {f.name for f in dataclasses.fields(obj)}
    unknown = set(values) - known
    if unknown:
        raise ConfigInvalid(f"unknown key(s) in [{where}]: {', '.join(sorted(unknown))}")
    return dataclasses.replace(obj, **values)


def apply_overrides(scenario: Scenario, data: dict) -> Scenario:
    """Overlay a nested mapping ``{"scenario": {...}, "pouch": {...}, ...}``."""
    data = dict(data)
    unknown = set(data) - set(_SECTIONS) - {"scenario"}
    if unknown:
        raise ConfigInvalid(f"unknown section(s): {', '.join(sorted(unknown))}")
    top = dict(data.pop("scenario", {}))
    for key in ("max_concurrent", "fail_at_ms", "redial_delay_ms"):
        # TOML has no null; a negative value or "none" clears the field
        if key in top and (top[key] == "none" or (isinstance(top[key], int) and top[key] < 0)):
            top[key] = None
    try:
        out = _apply(scenario, top, "scenario")
        for section, values in data.items():
            out = dataclasses.replace(out, **{section: _apply(getattr(out, section), values, section)})
    except TypeError as exc:
        raise ConfigInvalid(str(exc)) from None
    return out


def load_config(path, base: Optional[Scenario] = None) -> Scenario:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigInvalid(f"cannot read {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigInvalid(f"{path}: {exc}") from None
    return apply_overrides(base or Scenario(), data).validate()


# -- calibration ---------------------------------------------------------

SERVICE_HOPS = 6  # C, O, H, A, T, M each process once during setup
NETWORK_HOPS = 6  # UE>entry>LB>C, C>callee>C, C>UE


def nominal_establishment_ms(scenario: Scenario, base_service_ms: Optional[int] = None,
                             cache_hit: bool = True) -> int:
    """Zero-load, zero-jitter, co-located setup latency."""
    s = scenario.pouch.base_service_ms if base_service_ms is None else base_service_ms
    h = scenario.transport.base_hop_latency_ms
    total = NETWORK_HOPS * h + 2 * scenario.session.lb_service_ms + SERVICE_HOPS * s
    total += 2 * scenario.hss.local_cache_latency_ms
    if not cache_hit:
        total += 2 * h + scenario.hss.hss_query_latency_ms
    return total


def calibrate_base_service_ms(scenario: Scenario, target_ms: int = 2000) -> int:
    """Per-actor service time that puts the zero-load cache-hit setup at
    ``target_ms`` given the scenario's hop latency and cache cost."""
    fixed = nominal_establishment_ms(scenario, base_service_ms=0)
    return max(0, math.floor((target_ms - fixed) / SERVICE_HOPS + 0.5))


def preset(name: str) -> Scenario:
    if name not in SCENARIOS:
        raise ConfigInvalid(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
    sc = Scenario(name=name)
    if name == "autoscale":
        sc.pouch.initial_pouch_count = 2
        sc.autoscaler = AutoscalerConfig(enabled=True, n_extra=1)
    elif name == "failure":
        sc.fail_at_ms = 20 * 60_000
        sc.fail_pouch = "p0.ims.test"
        sc.redial_delay_ms = 1_000
        sc.autoscaler = AutoscalerConfig(enabled=True, n_extra=0, low_util_threshold=0.0,
                                         qos_trigger=False, replace_failed=True)
    elif name == "tradeoff":
        sc.max_concurrent = None
        sc.hold_ms = 120_000
        sc.duration_ms = 600_000
        sc.subscriber_count = 200
        sc.pouch.initial_pouch_count = 1
        sc.pouch.capacity_sessions = 10
        sc.pouch.provisioning_delay_ms = 30_000
        sc.autoscaler = AutoscalerConfig(enabled=True, n_extra=0, qos_trigger=False)
    return sc.validate()
