"""Central subscriber store plus per-pouch local caches kept consistent by
write-through at the center and targeted invalidation."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Optional

from .sip import SipUri, as_uri


class UnknownSubscriber(KeyError):
    pass


class UriMismatch(ValueError):
    pass


@dataclass(frozen=True)
class SubscriberProfile:
    uri: SipUri
    display_name: str = ""
    max_concurrent_calls: int = 1
    services: frozenset = frozenset({"voice"})
    version: int = 1

    def __post_init__(self) -> None:
        if self.max_concurrent_calls < 1:
            raise ValueError("max_concurrent_calls must be positive")
        if self.version < 1:
            raise ValueError("version must be >= 1")


@dataclass
class LocalCache:
    pouch: str
    entries: dict = field(default_factory=dict)
    hits: int = 0
    misses: int = 0

    @property
    def lookups(self) -> int:
        return self.hits + self.misses

    def lookup(self, uri) -> Optional[SubscriberProfile]:
        """Counted local read; None is a miss."""
        entry = self.entries.get(str(uri))
        if entry is None:
            self.misses += 1
            return None
        self.hits += 1
        return entry[0]

    def insert(self, profile: SubscriberProfile) -> None:
        self.entries[str(profile.uri)] = (profile, profile.version)

    def invalidate(self, uri: SipUri) -> None:
        self.entries.pop(str(uri), None)

    def clear(self) -> None:
        self.entries.clear()


# An invalidation sender receives (pouch, uri); None means apply at once.
InvalidationSender = Callable[[str, SipUri], None]


class CentralHss:
    def __init__(self, profiles: Iterable[SubscriberProfile] = (),
                 invalidation_sender: Optional[InvalidationSender] = None) -> None:
        self._profiles: dict[str, SubscriberProfile] = {}
        for p in profiles:
            self.provision(p)
        self.caches: dict[str, LocalCache] = {}
        self.holders: dict[str, set[str]] = {}
        self.queries = 0
        self.queries_by_uri: dict[str, int] = {}
        self.invalidations_sent = 0
        self.invalidation_sender = invalidation_sender

    def provision(self, profile: SubscriberProfile) -> None:
        key = str(profile.uri)
        if key in self._profiles:
            raise ValueError(f"{key} already provisioned")
        self._profiles[key] = profile

    def __contains__(self, uri) -> bool:
        return str(uri) in self._profiles

    def __len__(self) -> int:
        return len(self._profiles)

    @property
    def profiles(self) -> list[SubscriberProfile]:
        return list(self._profiles.values())

    def central_lookup(self, uri, for_pouch: Optional[str] = None) -> SubscriberProfile:
        """Counted read. ``for_pouch`` registers that pouch as a holder so a
        later update reaches it even if the reply is still in flight."""
        key = str(uri)
        self.queries += 1
        self.queries_by_uri[key] = self.queries_by_uri.get(key, 0) + 1
        try:
            profile = self._profiles[key]
        except KeyError:
            raise UnknownSubscriber(key) from None
        if for_pouch is not None:
            self.holders.setdefault(key, set()).add(for_pouch)
        return profile

    def peek(self, uri) -> Optional[SubscriberProfile]:
        """Uncounted read for bookkeeping and tests."""
        return self._profiles.get(str(uri))

    # -- caches -----------------------------------------------------------

    def cache_for(self, pouch: str) -> LocalCache:
        cache = self.caches.get(pouch)
        if cache is None:
            cache = self.caches[pouch] = LocalCache(pouch)
        return cache

    def drop_cache(self, pouch: str) -> Optional[LocalCache]:
        for pouches in self.holders.values():
            pouches.discard(pouch)
        return self.caches.pop(pouch, None)

    def update_profile(self, uri, new: SubscriberProfile) -> int:
        key = str(uri)
        current = self._profiles.get(key)
        if current is None:
            raise UnknownSubscriber(key)
        if str(new.uri) != key:
            raise UriMismatch(f"{new.uri} != {key}")
        stored = replace(new, version=current.version + 1)
        self._profiles[key] = stored
        for pouch in sorted(self.holders.pop(key, ())):
            self.invalidations_sent += 1
            if self.invalidation_sender is None:
                if pouch in self.caches:
                    self.caches[pouch].invalidate(stored.uri)
            else:
                self.invalidation_sender(pouch, stored.uri)
        return stored.version


def cache_get_or_fetch(hss: CentralHss, cache: LocalCache, uri) -> tuple[SubscriberProfile, bool]:
    hss.caches.setdefault(cache.pouch, cache)
    profile = cache.lookup(uri)
    if profile is not None:
        return profile, True
    profile = hss.central_lookup(uri, for_pouch=cache.pouch)
    cache.insert(profile)
    return profile, False


def load_subscribers(path) -> list[SubscriberProfile]:
    """Read ``uri<TAB>display_name<TAB>max_concurrent_calls`` lines."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            row = line.split("\t")
            if len(row) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 tab-separated fields")
            out.append(SubscriberProfile(as_uri(row[0]), row[1], int(row[2])))
    return out


def write_subscribers(path, profiles: Iterable[SubscriberProfile]) -> None:
    lines = [f"{p.uri}\t{p.display_name}\t{p.max_concurrent_calls}\n" for p in profiles]
    Path(path).write_text("".join(lines), encoding="utf-8")
