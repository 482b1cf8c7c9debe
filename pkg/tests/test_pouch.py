import pytest
from hypothesis import given
from hypothesis import strategies as st

from microims.engine import SimEngine
from microims.pouch import (DuplicateHost, Pouch, PouchConfig, PouchNotActive, PouchPool,
                            PouchState, inflation)


def _active(capacity: int = 10, base: int = 100) -> Pouch:
    p = Pouch("p0", capacity, 4, base)
    p.state = PouchState.ACTIVE
    return p


def test_admit_up_to_capacity():
    p = _active()
    p.active_sessions = 9
    assert p.admit() and p.active_sessions == 10
    assert not p.admit() and p.active_sessions == 10


def test_failed_pouch_rejects_admission():
    p = _active()
    p.state = PouchState.FAILED
    with pytest.raises(PouchNotActive):
        p.admit()


def test_draining_pouch_is_busy():
    p = _active()
    p.draining = True
    assert not p.admit()


@pytest.mark.parametrize("rho, factor", [(0.0, 1.0), (0.5, 2.0), (0.95, 10.0), (1.0, 10.0)])
def test_inflation(rho, factor):
    assert inflation(rho) == pytest.approx(factor)


def test_service_time_tracks_load():
    p = _active(capacity=10, base=100)
    assert p.service_time() == 100
    p.add_units(30)  # rho = 30 / 60
    assert p.service_time() == 200
    assert p.service_time(exclude_units=30) == 100


def test_media_slots():
    p = _active()
    assert all(p.reserve_media() for _ in range(4))
    assert not p.reserve_media()


def test_provisioning_delay():
    eng = SimEngine()
    pool = PouchPool(eng, PouchConfig(provisioning_delay_ms=5000))
    eng.run_until(10_000)
    p = pool.provision("px")
    assert p.state is PouchState.PROVISIONING and not eng.host_up("px")
    eng.run_until(14_999)
    assert p.state is PouchState.PROVISIONING
    eng.run_until(15_000)
    assert p.is_active and p.active_at == 15_000 and eng.host_up("px")


def test_duplicate_host():
    pool = PouchPool(SimEngine(), PouchConfig())
    pool.add_active("p0")
    with pytest.raises(DuplicateHost):
        pool.provision("p0")


def test_fail_and_retire():
    eng = SimEngine()
    failed = []
    pool = PouchPool(eng, PouchConfig(), on_failed=failed.append)
    a, b = pool.add_active("a"), pool.add_active("b")
    pool.fail("a")
    assert failed == [a] and not eng.host_up("a")
    b.active_sessions = 1
    with pytest.raises(RuntimeError):
        pool.retire("b")
    b.active_sessions = 0
    assert pool.retire("b").state is PouchState.RETIRED
    assert pool.active() == []


def test_generated_hosts_are_unique():
    pool = PouchPool(SimEngine(), PouchConfig())
    pool.add_active(pool.next_host())
    assert pool.next_host() not in pool.pouches


@given(st.lists(st.booleans(), max_size=200), st.integers(1, 20))
def test_capacity_never_exceeded(ops, capacity):
    p = _active(capacity=capacity)
    for admit in ops:
        if admit:
            p.admit()
        elif p.active_sessions:
            p.release()
        assert 0 <= p.active_sessions <= capacity


@given(st.integers(0, 59))
def test_service_time_monotone_in_load(units):
    p = _active(capacity=10, base=313)
    p.add_units(units)
    slower = p.service_time()
    p.add_units(1)
    assert p.service_time() >= slower
