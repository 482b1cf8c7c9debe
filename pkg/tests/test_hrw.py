import random
import string
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_hrw, fnv1a64
from microims import sip
from microims.hrw import (EmptyNodeSet, EntryBalancer, NodeSet, NoRendezvousLbs, RendezvousLb,
                          hash64, pick_rendezvous, route_invite, select_node, shard_key)
from microims.pouch import pouch_host

HOSTS8 = [pouch_host(i) for i in range(8)]


def _users(n: int, seed: int) -> list[str]:
    rng = random.Random(seed)
    alphabet = string.ascii_lowercase + string.digits
    return [f"sip:{''.join(rng.choice(alphabet) for _ in range(8))}@ims.test" for _ in range(n)]


def test_hash_of_empty_is_offset_basis():
    assert hash64("") == 14695981039346656037


@pytest.mark.parametrize("text, expected", [
    ("a", 0xAF63DC4C8601EC8C),
    ("foobar", 0x85944171F73967E8),
    ("c1", 622199369613600857),
])
def test_hash_frozen_vectors(text, expected):
    assert hash64(text) == expected == fnv1a64(text.encode())


@given(st.binary(max_size=64))
def test_hash_matches_oracle(data):
    assert hash64(data) == fnv1a64(data)


def test_single_member():
    for uri in _users(50, 1):
        assert select_node(uri, ["p0"]) == "p0"


def test_empty_set():
    with pytest.raises(EmptyNodeSet):
        select_node("sip:a@b", NodeSet())


def test_oracle_on_eight_node_sets():
    rng = random.Random(4)
    for uri in _users(1000, 2):
        hosts = rng.sample([pouch_host(i) for i in range(32)], 8)
        assert select_node(uri, hosts) == brute_force_hrw(uri, hosts)


def test_tie_goes_to_smaller_host(monkeypatch):
    monkeypatch.setattr("microims.hrw._fnv_extend", lambda h, data: 7)
    assert select_node("k", ["p5", "p2", "p9"]) == "p2"


def test_balance_over_eight_pouches():
    counts = Counter(select_node(u, HOSTS8) for u in _users(10_000, 3))
    shares = [counts[h] / 10_000 * 8 for h in HOSTS8]
    assert 0.85 <= min(shares) and max(shares) <= 1.15


def test_lb_round_robin():
    lbs = [RendezvousLb(f"rlb{i}") for i in range(3)]
    entry = EntryBalancer(lbs)
    assert [lbs.index(entry.pick()) for _ in range(6)] == [0, 1, 2, 0, 1, 2]
    one = RendezvousLb("solo")
    assert pick_rendezvous([one], 41) == (one, 42)
    with pytest.raises(NoRendezvousLbs):
        pick_rendezvous([], 0)


def test_affinity_and_version_gate():
    lb = RendezvousLb("rlb0")
    assert lb.update(NodeSet(tuple(HOSTS8), 3))
    assert not lb.update(NodeSet(tuple(HOSTS8[:2]), 2))
    inv = sip.request("INVITE", "c1", "sip:alice@ims.test", "sip:bob@ims.test")
    again = sip.request("INVITE", "c2", "sip:alice@ims.test", "sip:carol@ims.test")
    first, second = route_invite(inv, lb), route_invite(again, lb)
    assert first.target == second.target
    assert (first.cache_expected, second.cache_expected) == (False, True)
    assert first.version == 3


def test_node_set_versions():
    ns = NodeSet(("a",), 1).with_added("b")
    assert ns.version == 2 and ns.with_removed("a").version == 3
    with pytest.raises(ValueError):
        ns.with_added("a")


def test_shard_keys():
    inv = sip.request("INVITE", "c1", "sip:Bob@ims.test", "sip:x@ims.test")
    assert shard_key("first-letter", inv) == "b"
    assert shard_key("hrw-uri", inv) == "sip:Bob@ims.test"
    assert shard_key("session-hash", inv) == str(fnv1a64(b"c1"))


host_sets = st.lists(st.integers(0, 63), min_size=1, max_size=16, unique=True).map(
    lambda ids: [pouch_host(i) for i in ids])
keys = st.text(min_size=1, max_size=30)


@settings(max_examples=300)
@given(keys, host_sets)
def test_select_matches_brute_force(key, hosts):
    assert select_node(key, hosts) == brute_force_hrw(key, hosts)


@settings(max_examples=200)
@given(keys, host_sets, st.randoms(use_true_random=False))
def test_member_order_irrelevant(key, hosts, rnd):
    shuffled = hosts[:]
    rnd.shuffle(shuffled)
    assert select_node(key, hosts) == select_node(key, shuffled)


@settings(max_examples=200)
@given(st.lists(keys, min_size=1, max_size=50), host_sets, st.integers(64, 99))
def test_minimal_disruption_on_add(ks, hosts, new):
    x = pouch_host(new)
    for k in ks:
        assert select_node(k, hosts + [x]) in (select_node(k, hosts), x)


@settings(max_examples=200)
@given(st.lists(keys, min_size=1, max_size=50),
       st.lists(st.integers(0, 63), min_size=2, max_size=16, unique=True), st.data())
def test_minimal_disruption_on_remove(ks, ids, data):
    hosts = [pouch_host(i) for i in ids]
    gone = data.draw(st.sampled_from(hosts))
    rest = [h for h in hosts if h != gone]
    for k in ks:
        before = select_node(k, hosts)
        if before != gone:
            assert select_node(k, rest) == before
