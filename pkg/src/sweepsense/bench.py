"""Inference latency of the shallow sensing CNN against the deep baseline,
and the real-time budget check for full spectrum sweeps."""

from __future__ import annotations

import csv
import json
import logging
import resource
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ContractError
from .nn import Model, build_baseline_model, build_reference_model
from .sweep import SweepConfig, combine, encode_chunks, segment_spectra, sense_capture

logger = logging.getLogger(__name__)

# Per-chunk inference time published for the original GPU-less deployment.
# Printed next to our numbers for orientation only, never asserted.
PUBLISHED_CHUNK_LATENCY_US = 55.0


def capture_time(n_time: int, fs) -> Fraction:
    """Seconds needed to collect ``n_time`` samples at ``fs`` Hz, exactly."""
    if n_time < 0:
        raise ContractError("n_time must be non-negative")
    fs = Fraction(fs)
    if fs <= 0:
        raise ContractError("fs must be positive")
    return Fraction(n_time) / fs


def capture_time_us(n_time: int, fs) -> Fraction:
    return capture_time(n_time, fs) * 1_000_000


def _max_rss_kb() -> int:
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss


@dataclass
class LatencyStats:
    model: str
    input_bins: int
    batch: int
    repetitions: int
    warmup: int
    p50_us: float
    p95_us: float
    mean_us: float
    deterministic: bool = True
    rss_growth_kb: int = 0

    @classmethod
    def from_samples(cls, model: str, input_bins: int, batch: int, warmup: int, samples_ns, **kw) -> "LatencyStats":
        us = np.asarray(samples_ns, dtype=np.float64) / 1e3
        return cls(model, input_bins, batch, int(us.size), warmup,
                   float(np.percentile(us, 50)), float(np.percentile(us, 95)), float(us.mean()), **kw)


def measure_latency(
    model: Model,
    input_bins: int,
    batch: int = 1,
    reps: int = 1000,
    warmup: int = 10,
    seed: int = 0,
) -> LatencyStats:
    """Wall-clock statistics of ``model.predict`` on one seeded random batch.

    Every repetition's output is compared with the first one; any difference
    clears ``deterministic``.
    """
    if model.input_len != input_bins:
        raise ContractError(f"model takes {model.input_len} bins, asked to time {input_bins}")
    if reps < 100 or warmup < 10:
        raise ContractError("need reps >= 100 and warmup >= 10")
    x = np.random.default_rng(seed).standard_normal((batch, model.in_channels, input_bins)).astype(np.float32)
    first = None
    for _ in range(warmup):
        first = model.predict(x)
    rss0 = _max_rss_kb()
    samples = np.empty(reps, dtype=np.int64)
    same = True
    for i in range(reps):
        t0 = time.perf_counter_ns()
        out = model.predict(x)
        samples[i] = time.perf_counter_ns() - t0
        if same and not np.array_equal(out, first):
            same = False
    return LatencyStats.from_samples(model.name, input_bins, batch, warmup, samples,
                                     deterministic=same, rss_growth_kb=_max_rss_kb() - rss0)


def write_bench_csv(rows: list[LatencyStats], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "input_bins", "batch", "p50_us", "p95_us", "mean_us"])
        for r in rows:
            w.writerow([r.model, r.input_bins, r.batch, f"{r.p50_us:.3f}", f"{r.p95_us:.3f}", f"{r.mean_us:.3f}"])


@dataclass
class SweepTiming:
    """Median stage times of one full sweep (all segments, all chunks)."""

    fft_us: float
    infer_us: float  # chunk encoding plus the batched forward pass
    combine_us: float
    end_to_end_us: float

    @property
    def component_sum_us(self) -> float:
        return self.fft_us + self.infer_us + self.combine_us

    @property
    def bookkeeping_error(self) -> float:
        return abs(self.component_sum_us - self.end_to_end_us) / self.end_to_end_us


def time_full_sweep(model: Model, cfg: SweepConfig, reps: int = 300, warmup: int = 10, seed: int = 0) -> SweepTiming:
    """Stage-by-stage and end-to-end timing of ``sense_capture`` on random IQ.

    The staged and end-to-end measurements alternate inside one loop so both
    see the same machine state.
    """
    rng = np.random.default_rng(seed)
    x = (rng.standard_normal(cfg.n_time) + 1j * rng.standard_normal(cfg.n_time)).astype(np.complex64)
    for _ in range(warmup):
        sense_capture(x, model, cfg)
    stages = np.empty((reps, 3), dtype=np.int64)
    e2e = np.empty(reps, dtype=np.int64)
    for i in range(reps):
        t0 = time.perf_counter_ns()
        spectra = segment_spectra(x, cfg)
        t1 = time.perf_counter_ns()
        probs = model.predict(encode_chunks(spectra.reshape(-1, cfg.chunk_len), model.normalization))
        t2 = time.perf_counter_ns()
        combine(probs.reshape(cfg.segments_per_capture, cfg.g, -1), cfg)
        t3 = time.perf_counter_ns()
        stages[i] = (t1 - t0, t2 - t1, t3 - t2)
        t4 = time.perf_counter_ns()
        sense_capture(x, model, cfg)
        e2e[i] = time.perf_counter_ns() - t4
    med = np.median(stages, axis=0) / 1e3
    return SweepTiming(float(med[0]), float(med[1]), float(med[2]), float(np.median(e2e) / 1e3))


@dataclass
class RealtimeRow:
    g: int
    chunk_bins: int
    chunk_bandwidth_mhz: float
    chunk_p50_us: float
    sweep_p50_us: float
    fft_us: float
    infer_us: float
    combine_us: float
    capture_time_us: float
    within_budget: bool
    baseline_p50_us: float
    speedup_vs_baseline: float
    bookkeeping_error: float
    informative: bool = True  # absolute timings depend on the host


@dataclass
class RealtimeReport:
    capture_time_us: Fraction
    rows: list[RealtimeRow]
    reference: list[LatencyStats]
    baseline: list[LatencyStats]
    reps: int
    published_chunk_latency_us: float = PUBLISHED_CHUNK_LATENCY_US
    notes: list[str] = field(default_factory=list)

    def row(self, g: int) -> RealtimeRow:
        for r in self.rows:
            if r.g == g:
                return r
        raise KeyError(g)

    def baseline_at(self, bins: int) -> LatencyStats:
        for b in self.baseline:
            if b.input_bins == bins:
                return b
        raise KeyError(bins)

    @property
    def full_sweep_beats_baseline(self) -> bool:
        """Finest-grained full sweep against one baseline pass over the widest input."""
        finest = max(self.rows, key=lambda r: r.g)
        widest = max(self.baseline, key=lambda b: b.input_bins)
        return finest.sweep_p50_us < widest.p50_us

    def to_dict(self) -> dict:
        return {
            "capture_time_us": float(self.capture_time_us),
            "capture_time_us_exact": str(self.capture_time_us),
            "reps": self.reps,
            "rows": [asdict(r) for r in self.rows],
            "reference": [asdict(s) for s in self.reference],
            "baseline": [asdict(s) for s in self.baseline],
            "full_sweep_beats_baseline": self.full_sweep_beats_baseline,
            "informative": {"published_chunk_latency_us": self.published_chunk_latency_us},
            "notes": self.notes,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def format_table(self) -> str:
        head = f"{'G':>2} {'bins':>5} {'MHz':>6} {'chunk us':>9} {'sweep us':>9} {'budget us':>9} {'ok':>3} {'base us':>9} {'speedup':>7}"
        lines = [head]
        for r in self.rows:
            lines.append(
                f"{r.g:>2} {r.chunk_bins:>5} {r.chunk_bandwidth_mhz:>6.2f} {r.chunk_p50_us:>9.1f} "
                f"{r.sweep_p50_us:>9.1f} {r.capture_time_us:>9.1f} {'yes' if r.within_budget else 'no':>3} "
                f"{r.baseline_p50_us:>9.1f} {r.speedup_vs_baseline:>7.1f}"
            )
        for b in self.baseline:
            lines.append(f"baseline {b.input_bins:>4} bins: p50 {b.p50_us:.1f} us, p95 {b.p95_us:.1f} us")
        lines.append(f"G={max(r.g for r in self.rows)} full sweep faster than widest baseline pass: "
                     f"{self.full_sweep_beats_baseline}")
        return "\n".join(lines)


def realtime_report(
    cfg: SweepConfig,
    model: Model | None = None,
    baseline: Model | None = None,
    g_values=(1, 2, 4, 8),
    reps: int = 1000,
    sweep_reps: int = 300,
    seed: int = 0,
) -> RealtimeReport:
    """Latency table per chunk count G against the capture-time budget.

    ``model`` and ``baseline`` are used at their own input size; every other
    size gets a freshly initialised network of the same architecture, which
    costs the same to evaluate.
    """
    budget = capture_time_us(cfg.n_time, Fraction(cfg.sample_rate_hz))
    rows, refs, bases = [], [], []
    for g in g_values:
        gcfg = cfg.with_g(g)
        bins, nc = gcfg.chunk_len, gcfg.num_classes
        ref = model if model is not None and model.input_len == bins and model.num_classes == nc else \
            build_reference_model(bins, nc, seed=seed)
        base = baseline if baseline is not None and baseline.input_len == bins else \
            build_baseline_model(bins, nc, seed=seed)
        rs = measure_latency(ref, bins, 1, reps, seed=seed)
        bs = measure_latency(base, bins, 1, reps, seed=seed)
        st = time_full_sweep(ref, gcfg, sweep_reps, seed=seed)
        refs.append(rs)
        bases.append(bs)
        rows.append(RealtimeRow(
            g=g, chunk_bins=bins, chunk_bandwidth_mhz=gcfg.chunk_bandwidth_hz / 1e6,
            chunk_p50_us=rs.p50_us, sweep_p50_us=st.end_to_end_us,
            fft_us=st.fft_us, infer_us=st.infer_us, combine_us=st.combine_us,
            capture_time_us=float(budget), within_budget=st.end_to_end_us <= budget,
            baseline_p50_us=bs.p50_us, speedup_vs_baseline=bs.p50_us / rs.p50_us,
            bookkeeping_error=st.bookkeeping_error,
        ))
        logger.info("G=%d: chunk %.1f us, sweep %.1f us, baseline %.1f us", g, rs.p50_us, st.end_to_end_us, bs.p50_us)
    notes = ["timings are host-dependent; orderings and ratios are the portable result"]
    return RealtimeReport(budget, rows, refs, bases, reps, notes=notes)
