import pytest

from netfc.errors import NoData
from netfc.formats import Kind
from netfc.slowloris import (DATA_PLANE_PASS_LATENCY, TelemetryRegisters, attack_demo, bulk_trace,
                             mixed_trace, read_trace, replay, slowloris_trace, to_float16_count,
                             web_trace, write_trace)
from netfc.tables import build_table_set


def test_count_encoding():
    v, s = to_float16_count(200_000)
    assert s == 3 and float(v) * 2 ** s == pytest.approx(200_000, rel=1e-3)
    v, s = to_float16_count(1000)
    assert s == 0 and float(v) == 1000
    with pytest.raises(ValueError):
        to_float16_count(-1)


def test_cpb_value():
    regs = TelemetryRegisters()
    for c in range(100):
        regs.on_packet("d", ("s", c), 2000)
    rec = regs.records["d"]
    assert rec.conn_count == 100 and rec.byte_count == 200_000
    assert float(rec.cpb) == pytest.approx(5.0e-4, rel=2e-3)


def test_zero_byte_first_packet():
    regs = TelemetryRegisters()
    rec = regs.on_packet("d", ("s", 1), 0)
    assert rec.conn_count == 1 and rec.cpb is None
    with pytest.raises(NoData):
        regs.query("d")


def test_repeated_flow_counts_once():
    regs = TelemetryRegisters()
    for _ in range(10):
        regs.on_packet("d", ("s", 1, 80), 100)
    assert regs.records["d"].conn_count == 1
    assert regs.records["d"].byte_count == 1000


def test_verdicts():
    regs = replay(slowloris_trace("v") + bulk_trace("b"), TelemetryRegisters())
    assert regs.query("v").attack
    assert not regs.query("b").attack
    with pytest.raises(NoData):
        regs.query("nowhere")
    with pytest.raises(NoData):
        regs.query_index(50)


def test_fast_path_never_calls_controller():
    regs = replay(web_trace("w"), TelemetryRegisters())
    fast = regs.query_fast("w")
    assert fast.crossings == 0 and regs.controller_calls == 0
    assert fast.latency == DATA_PLANE_PASS_LATENCY
    slow = regs.query_slow_path("w", 0.043)
    assert slow.crossings == 2 and regs.controller_calls == 1
    assert slow.verdict.attack == fast.verdict.attack


def test_rejects_bad_config():
    with pytest.raises(ValueError):
        TelemetryRegisters(threshold=0)
    with pytest.raises(ValueError):
        TelemetryRegisters(build_table_set(Kind.POSIT16, 512))
    with pytest.raises(ValueError):
        TelemetryRegisters().on_packet("d", ("s",), -5)


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_demo_agreement(seed):
    rep = attack_demo(mixed_trace(seed), cp_delay=0.043)
    assert rep["agreement"]
    assert rep["latency_ratio"] >= 100
    for d in rep["destinations"]:
        # classification away from the threshold follows the exact ratio
        assert d["attack_fast"] == (d["cpb_exact"] > 1e-3)
        assert d["fast_crossings"] == 0 and d["slow_crossings"] == 2


def test_trace_csv_roundtrip(tmp_path):
    rows = mixed_trace(5)
    path = tmp_path / "t.csv"
    write_trace(rows, path)
    assert read_trace(path) == rows
