"""Rendezvous (highest-random-weight) node selection and the two-tier
entry / rendezvous load balancers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

from .sip import SipMessage, SipUri

FNV_OFFSET = 14695981039346656037
FNV_PRIME = 1099511628211
_MASK = (1 << 64) - 1


class EmptyNodeSet(LookupError):
    pass


class NoRendezvousLbs(LookupError):
    pass


def _fnv_extend(h: int, data: bytes) -> int:
    for byte in data:
        h = ((h ^ byte) * FNV_PRIME) & _MASK
    return h


def hash64(data: Union[bytes, str]) -> int:
    """FNV-1a, 64 bit."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    return _fnv_extend(FNV_OFFSET, data)


@dataclass(frozen=True)
class NodeSet:
    members: tuple[str, ...] = ()
    version: int = 0

    def __post_init__(self) -> None:
        if len(set(self.members)) != len(self.members):
            raise ValueError(f"duplicate host in {self.members}")

    def __contains__(self, host: object) -> bool:
        return host in self.members

    def __len__(self) -> int:
        return len(self.members)

    def with_added(self, host: str) -> "NodeSet":
        if host in self.members:
            raise ValueError(f"{host} already a member")
        return NodeSet(self.members + (host,), self.version + 1)

    def with_removed(self, host: str) -> "NodeSet":
        if host not in self.members:
            raise ValueError(f"{host} not a member")
        return NodeSet(tuple(m for m in self.members if m != host), self.version + 1)


def select_node(key: Union[SipUri, str], nodes: Union[NodeSet, Iterable[str]]) -> str:
    """argmax over hosts of hash64(key + host); ties go to the smaller host name."""
    members = nodes.members if isinstance(nodes, NodeSet) else tuple(nodes)
    if not members:
        raise EmptyNodeSet("no active nodes")
    # FNV-1a is streaming: hash the key once, then extend with each host
    prefix = _fnv_extend(FNV_OFFSET, str(key).encode("utf-8"))
    best_host = None
    best = -1
    for host in members:
        h = _fnv_extend(prefix, host.encode("utf-8"))
        if h > best or (h == best and host < best_host):
            best, best_host = h, host
    return best_host


SHARD_MODES = ("hrw-uri", "session-hash", "first-letter")


def shard_key(mode: str, invite: SipMessage) -> str:
    if mode == "hrw-uri":
        return str(invite.from_uri)
    if mode == "session-hash":
        return str(hash64(invite.call_id))
    if mode == "first-letter":
        return invite.from_uri.user[0].lower()
    raise ValueError(f"unknown shard mode {mode!r}")


@dataclass(frozen=True)
class RoutingDecision:
    target: str
    cache_expected: bool
    version: int


@dataclass
class RendezvousLb:
    id: str
    node_set: NodeSet = field(default_factory=NodeSet)
    shard_mode: str = "hrw-uri"
    _seen: set = field(default_factory=set, repr=False)

    def update(self, node_set: NodeSet) -> bool:
        """Install a newer snapshot; stale snapshots are ignored."""
        if node_set.version <= self.node_set.version and self.node_set.members:
            return False
        self.node_set = node_set
        return True

    def route_invite(self, invite: SipMessage) -> RoutingDecision:
        return route_invite(invite, self)


def route_invite(invite: SipMessage, lb: RendezvousLb) -> RoutingDecision:
    key = shard_key(lb.shard_mode, invite)
    target = select_node(key, lb.node_set)
    seen_key = (str(invite.from_uri), lb.node_set.version)
    expected = seen_key in lb._seen
    lb._seen.add(seen_key)
    return RoutingDecision(target, expected, lb.node_set.version)


def pick_rendezvous(lbs: Sequence[RendezvousLb], counter: int) -> tuple[RendezvousLb, int]:
    """Round-robin pick; returns the LB and the advanced counter."""
    if not lbs:
        raise NoRendezvousLbs("no rendezvous load balancers")
    return lbs[counter % len(lbs)], counter + 1


class EntryBalancer:
    """Entry point that hands each new request to the next rendezvous LB."""

    def __init__(self, lbs: Sequence[RendezvousLb]) -> None:
        self.lbs = list(lbs)
        self.counter = 0

    def pick(self) -> RendezvousLb:
        lb, self.counter = pick_rendezvous(self.lbs, self.counter)
        return lb
