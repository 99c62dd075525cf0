import csv
import json
from fractions import Fraction

import numpy as np
import pytest

from sweepsense.bench import (
    LatencyStats,
    capture_time,
    capture_time_us,
    measure_latency,
    realtime_report,
    time_full_sweep,
    write_bench_csv,
)
from sweepsense.errors import ContractError
from sweepsense.nn import build_baseline_model, build_reference_model
from sweepsense.sweep import SweepConfig


def test_capture_time_exact():
    assert capture_time_us(1024, 10_000_000) == Fraction(512, 5)
    assert float(capture_time_us(1024, 1e7)) == 102.4
    assert capture_time(1024, 1e7) == Fraction(1024, 10**7)
    assert capture_time(0, 1e7) == 0
    assert capture_time_us(2048, 1e7) == 2 * capture_time_us(1024, 1e7) == Fraction(1024, 5)
    with pytest.raises(ContractError):
        capture_time(10, 0)


def test_measure_latency_fields():
    model = build_reference_model(32, 9)
    s = measure_latency(model, 32, batch=8, reps=100)
    assert s.repetitions == 100 and s.warmup == 10 and s.batch == 8
    assert 0 < s.p50_us <= s.p95_us
    assert s.deterministic
    # steady memory across repeated inference on one shape
    assert s.rss_growth_kb < 8 * 1024


def test_measure_latency_contracts():
    model = build_reference_model(32, 9)
    with pytest.raises(ContractError):
        measure_latency(model, 64)
    with pytest.raises(ContractError):
        measure_latency(model, 32, reps=50)
    with pytest.raises(ContractError):
        measure_latency(model, 32, warmup=5)


def test_bench_csv(tmp_path):
    rows = [LatencyStats("reference", 32, 1, 100, 10, 50.0, 60.0, 52.5)]
    write_bench_csv(rows, tmp_path / "b.csv")
    got = list(csv.reader(open(tmp_path / "b.csv")))
    assert got[0] == ["model", "input_bins", "batch", "p50_us", "p95_us", "mean_us"]
    assert got[1] == ["reference", "32", "1", "50.000", "60.000", "52.500"]


def test_full_sweep_bookkeeping():
    cfg = SweepConfig()
    t = time_full_sweep(build_reference_model(32, 9), cfg, reps=200)
    assert min(t.fft_us, t.infer_us, t.combine_us) > 0
    assert t.bookkeeping_error <= 0.10


def test_latency_ordering_reference_vs_baseline():
    for bins, nc in ((32, 9), (256, 65)):
        ref = measure_latency(build_reference_model(bins, nc), bins, reps=100)
        base = measure_latency(build_baseline_model(bins, nc), bins, reps=100)
        assert ref.p50_us < base.p50_us


def test_realtime_report_table(tmp_path):
    rep = realtime_report(SweepConfig(), reps=100, sweep_reps=30)
    assert [r.g for r in rep.rows] == [1, 2, 4, 8]
    assert [b.input_bins for b in rep.baseline] == [256, 128, 64, 32]
    assert all(r.capture_time_us == 102.4 for r in rep.rows)
    for r in rep.rows:
        assert r.within_budget == (r.sweep_p50_us <= 102.4)
        assert r.speedup_vs_baseline == pytest.approx(r.baseline_p50_us / r.chunk_p50_us)
    rep.to_json(tmp_path / "rt.json")
    doc = json.loads((tmp_path / "rt.json").read_text())
    assert doc["capture_time_us_exact"] == "512/5"
    assert len(doc["rows"]) == 4 and len(doc["baseline"]) == 4
    assert doc["informative"]["published_chunk_latency_us"] == 55.0
    assert "G=8 full sweep" in rep.format_table()


def test_realtime_report_uses_given_model():
    model = build_reference_model(64, 17, seed=3)
    rep = realtime_report(SweepConfig(), model=model, g_values=(4,), reps=100, sweep_reps=10)
    assert rep.rows[0].chunk_bins == 64
