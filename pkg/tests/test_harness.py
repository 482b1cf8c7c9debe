import json

import pytest

from microims.config import (ConfigInvalid, Scenario, apply_overrides, calibrate_base_service_ms,
                             load_config, nominal_establishment_ms, preset)
from microims.harness import CSV_HEADER, calls_csv, emit, empty_report, run_scenario, simulate


def _short(**kw) -> Scenario:
    return Scenario(duration_ms=kw.pop("duration_ms", 400_000), **kw)


def test_constant_interarrival():
    rep = run_scenario(_short(), 0)
    times = [r.t_invite_ms for r in rep.records[:40]]
    assert {b - a for a, b in zip(times, times[1:])} == {2000}


def test_cap_respected():
    rep = run_scenario(_short(duration_ms=900_000), 2)
    assert max(n for _, n in rep.concurrency_samples) <= 80
    assert rep.counters["throttled"] > 0


def test_records_indices_and_latency_presence():
    rep = run_scenario(_short(), 1)
    assert [r.index for r in rep.records] == list(range(1, len(rep.records) + 1))
    for r in rep.records:
        assert (r.latency_ms is not None) == (r.outcome == "established")


@pytest.mark.parametrize("name", ["baseline", "autoscale", "failure", "tradeoff"])
def test_reconciliation(name):
    sc = preset(name)
    sc.duration_ms = min(sc.duration_ms, 1_500_000)
    c = run_scenario(sc, 3).counters
    total = (c["established"] + c["busy_capacity"] + c["busy_media"] + c["policy_rejected"]
             + c["dropped_failure"] + c["throttled"] + c["unfinished"])
    assert total == c["arrivals"]
    assert c["unfinished"] == 0
    busy = c["busy_signals"]
    assert busy["capacity"] == c["busy_capacity"] and busy["media"] == c["busy_media"]


def test_failure_preset_has_mttr_samples():
    rep = run_scenario(preset("failure"), 0)
    assert rep.mttr_samples and rep.counters["established_then_dropped"] > 0


def test_trace_messages_carry_call_id():
    run = simulate(_short(duration_ms=300_000), 4, trace=True)
    ids = set(run.system.calls.sessions)
    for line in run.report.trace:
        _, kind, _, _, detail = line.split("\t")
        if kind == "msg" and not detail.startswith(("nodeset", "invalidate")):
            assert detail.split(" ")[-1] in ids


def test_emit_files(tmp_path):
    rep = run_scenario(_short(duration_ms=300_000), 0, trace=True)
    paths = emit(rep, tmp_path)
    assert sorted(p.name for p in paths) == ["calls.csv", "summary.json", "trace.tsv"]
    rows = (tmp_path / "calls.csv").read_text().splitlines()
    assert rows[0] == ",".join(CSV_HEADER)
    first = rows[1].split(",")
    assert first[0] == "1" and first[3] == "established" and first[4] != ""
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["seed"] == 0 and summary["config"]["hold_ms"] == 300_000
    assert set(summary["latency_ms"]) == {"p50", "p95"}


def test_emit_empty(tmp_path):
    rep = empty_report(Scenario(), 5)
    emit(rep, tmp_path)
    assert (tmp_path / "calls.csv").read_text() == ",".join(CSV_HEADER) + "\n"
    counters = json.loads((tmp_path / "summary.json").read_text())["counters"]
    assert set(counters.values()) == {0}


def test_emit_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        emit(empty_report(Scenario(), 0), blocker / "sub")


def test_same_seed_same_csv():
    a, b = (run_scenario(preset("autoscale"), 11) for _ in range(2))
    assert calls_csv(a) == calls_csv(b)
    assert a.trace_digest == b.trace_digest
    assert calls_csv(run_scenario(preset("autoscale"), 12)) != calls_csv(a)


def test_calibration_procedure():
    sc = Scenario()
    assert calibrate_base_service_ms(sc) == sc.pouch.base_service_ms == 313
    assert nominal_establishment_ms(sc) == 2000
    assert nominal_establishment_ms(sc, cache_hit=False) == 2080


def test_presets():
    assert preset("baseline").pouch.initial_pouch_count == 8
    auto = preset("autoscale")
    assert auto.pouch.initial_pouch_count == 2 and auto.autoscaler.n_extra == 1
    assert preset("failure").fail_at_ms == 1_200_000
    with pytest.raises(ConfigInvalid):
        preset("nope")


def test_validation():
    with pytest.raises(ConfigInvalid, match="arrival"):
        Scenario(arrival_per_min=0).validate()
    with pytest.raises(ConfigInvalid, match="hold"):
        Scenario(hold_ms=10, duration_ms=5).validate()


def test_toml_overrides(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text('[scenario]\nmax_concurrent = -1\narrival_per_min = 12.0\n'
                    '[pouch]\ncapacity_sessions = 5\n[autoscaler]\nenabled = true\n')
    sc = load_config(path, base=preset("baseline"))
    assert sc.max_concurrent is None and sc.arrival_per_min == 12.0
    assert sc.pouch.capacity_sessions == 5 and sc.autoscaler.enabled
    assert sc.pouch.initial_pouch_count == 8


@pytest.mark.parametrize("text", ["[pouch]\nwheels = 4\n", "[gpu]\nx = 1\n", "[scenario\n",
                                  "[scenario]\narrival_per_min = -3.0\n"])
def test_bad_config(tmp_path, text):
    path = tmp_path / "c.toml"
    path.write_text(text)
    with pytest.raises(ConfigInvalid):
        load_config(path)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigInvalid, match="cannot read"):
        load_config(tmp_path / "absent.toml")


def test_apply_overrides_keeps_base():
    base = preset("tradeoff")
    out = apply_overrides(base, {"autoscaler": {"n_extra": 3}})
    assert out.autoscaler.n_extra == 3 and base.autoscaler.n_extra == 0
