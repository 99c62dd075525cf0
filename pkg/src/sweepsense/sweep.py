"""Spectrum sweeping: FFT projection, G-way partitioning, batched
classification and fusion of chunk verdicts into one report per capture."""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np

from .errors import ConfigError, ContractError


@dataclass(frozen=True)
class SweepConfig:
    n_time: int = 1024
    n_fft: int = 256
    g: int = 8
    sample_rate_hz: float = 1.0e7
    n_subcarriers: int = 64

    def __post_init__(self):
        if self.n_fft < 1 or self.n_fft & (self.n_fft - 1):
            raise ConfigError(f"n_fft must be a power of two, got {self.n_fft}")
        if self.n_time < 1 or self.n_time % self.n_fft:
            raise ConfigError(f"n_fft={self.n_fft} must divide n_time={self.n_time}")
        if self.g < 1 or self.n_fft % self.g:
            raise ConfigError(f"g={self.g} must divide n_fft={self.n_fft}")
        if self.n_subcarriers < 1 or self.n_fft % self.n_subcarriers or self.n_subcarriers % self.g:
            raise ConfigError(
                f"n_subcarriers={self.n_subcarriers} must divide n_fft and be divisible by g"
            )
        if not (self.sample_rate_hz > 0 and math.isfinite(self.sample_rate_hz)):
            raise ConfigError("sample_rate_hz must be positive")

    @property
    def segments_per_capture(self) -> int:
        return self.n_time // self.n_fft

    @property
    def chunk_len(self) -> int:
        return self.n_fft // self.g

    @property
    def subcarriers_per_chunk(self) -> int:
        return self.n_subcarriers // self.g

    @property
    def bins_per_subcarrier(self) -> int:
        return self.n_fft // self.n_subcarriers

    @property
    def num_classes(self) -> int:
        """In-chunk subcarrier offsets plus the trailing clean class."""
        return self.subcarriers_per_chunk + 1

    @property
    def chunk_bandwidth_hz(self) -> float:
        return self.sample_rate_hz / self.g

    def with_g(self, g: int) -> "SweepConfig":
        return SweepConfig(self.n_time, self.n_fft, g, self.sample_rate_hz, self.n_subcarriers)


@dataclass
class SpectrumFrame:
    bins: np.ndarray  # n_fft complex values, DC at n_fft // 2
    capture_id: int = 0
    segment_index: int = 0


@dataclass
class ChunkBatch:
    chunks: np.ndarray  # (g, n_fft // g), ascending frequency
    capture_id: int = 0
    segment_index: int = 0

    @property
    def g(self) -> int:
        return self.chunks.shape[0]

    @property
    def chunk_index(self) -> range:
        return range(self.g)


@dataclass
class SensingReport:
    capture_id: int
    chunk_classes: np.ndarray  # (g,) fused class index per chunk
    chunk_probs: np.ndarray  # (g, num_classes) segment-averaged probabilities
    global_occupancy: np.ndarray  # (n_subcarriers,) bool, by subcarrier position
    located_subcarrier: int | None
    latency_us: float | None = None
    segment_votes: np.ndarray | None = field(default=None, repr=False)

    @property
    def occupied(self) -> list[int]:
        return np.flatnonzero(self.global_occupancy).tolist()

    def to_dict(self) -> dict:
        return {
            "capture_id": int(self.capture_id),
            "located_subcarrier": self.located_subcarrier,
            "occupied": self.occupied,
            "chunk_classes": self.chunk_classes.tolist(),
            "latency_us": self.latency_us,
        }


def segment_spectra(time_iq: np.ndarray, cfg: SweepConfig) -> np.ndarray:
    """FFT-shifted spectra of every segment as one ``(segments, n_fft)`` array."""
    x = np.asarray(time_iq)
    if x.ndim != 1 or x.shape[0] != cfg.n_time:
        raise ContractError(f"expected {cfg.n_time} time-domain samples, got shape {x.shape}")
    if not np.iscomplexobj(x):
        x = x.astype(np.complex128)
    spectra = np.fft.fft(x.reshape(cfg.segments_per_capture, cfg.n_fft), axis=1)
    return np.fft.fftshift(spectra, axes=1)


def fft_stage(time_iq: np.ndarray, cfg: SweepConfig, capture_id: int = 0) -> list[SpectrumFrame]:
    """Split a capture into non-overlapping ``n_fft`` segments and project each
    into the frequency domain (rectangular window, DC centred)."""
    spectra = segment_spectra(time_iq, cfg)
    return [SpectrumFrame(spectra[s], capture_id, s) for s in range(spectra.shape[0])]


def partition(frame: SpectrumFrame | np.ndarray, g: int) -> ChunkBatch:
    bins = frame.bins if isinstance(frame, SpectrumFrame) else np.asarray(frame)
    if g < 1 or bins.shape[-1] % g:
        raise ContractError(f"g={g} does not divide frame length {bins.shape[-1]}")
    chunks = bins.reshape(g, bins.shape[-1] // g)
    if isinstance(frame, SpectrumFrame):
        return ChunkBatch(chunks, frame.capture_id, frame.segment_index)
    return ChunkBatch(chunks)


def encode_chunks(chunks: np.ndarray, rule: str = "maxabs") -> np.ndarray:
    """Complex chunks ``(..., L)`` to CNN input ``(N, 2, L)`` float32.

    ``maxabs`` divides every chunk by its largest complex magnitude; all-zero
    chunks stay zero.
    """
    z = np.asarray(chunks)
    z = z.reshape(-1, z.shape[-1])
    if rule == "maxabs":
        peak = np.abs(z).max(axis=1, keepdims=True)
        z = z / np.where(peak > 0, peak, 1.0)
    elif rule != "none":
        raise ContractError(f"unknown normalization rule {rule!r}")
    return np.stack([z.real, z.imag], axis=1).astype(np.float32)


def classify_batch(batch: ChunkBatch | np.ndarray, model) -> np.ndarray:
    """One batched forward pass over all chunks; row i is chunk i's softmax."""
    chunks = batch.chunks if isinstance(batch, ChunkBatch) else np.asarray(batch)
    if chunks.ndim != 2 or chunks.shape[1] != model.input_len:
        raise ContractError(
            f"chunks of shape {chunks.shape} do not match model input length {model.input_len}"
        )
    return model.predict(encode_chunks(chunks, model.normalization))


def _verdict_array(verdicts, num_segments: int | None) -> np.ndarray:
    if isinstance(verdicts, np.ndarray):
        arr = verdicts
        if arr.ndim == 2:
            arr = arr[None]
        return arr
    triples = list(verdicts)
    if not triples:
        raise ContractError("empty verdict set")
    n_seg = 1 + max(int(s) for s, _, _ in triples) if num_segments is None else num_segments
    n_chunk = 1 + max(int(c) for _, c, _ in triples)
    n_cls = len(triples[0][2])
    arr = np.full((n_seg, n_chunk, n_cls), np.nan)
    seen = np.zeros((n_seg, n_chunk), dtype=bool)
    for s, c, p in triples:
        if seen[s, c]:
            raise ContractError(f"duplicate verdict for segment {s}, chunk {c}")
        seen[s, c] = True
        arr[s, c] = p
    if not seen.all():
        raise ContractError("need exactly one verdict per (segment, chunk)")
    return arr


def combine(
    verdicts: np.ndarray | Iterable[tuple[int, int, Sequence[float]]],
    cfg: SweepConfig,
    capture_id: int = 0,
) -> SensingReport:
    """Fuse per-segment, per-chunk probability vectors into a SensingReport.

    ``verdicts`` is either an array ``(segments, g, num_classes)`` or an
    iterable of ``(segment_index, chunk_index, probs)`` triples in any order.
    Each chunk takes the majority of its segments' argmaxes, ties going to the
    lowest class index.
    """
    probs = _verdict_array(verdicts, None)
    if probs.size == 0:
        raise ContractError("empty verdict set")
    n_seg, g, n_cls = probs.shape
    if g != cfg.g or n_cls != cfg.num_classes:
        raise ContractError(
            f"verdicts shaped {probs.shape} do not fit g={cfg.g}, num_classes={cfg.num_classes}"
        )
    votes = probs.argmax(axis=2)  # (segments, g)
    counts = np.zeros((g, n_cls), dtype=np.int64)
    for s in range(n_seg):
        counts[np.arange(g), votes[s]] += 1
    chunk_classes = counts.argmax(axis=1)
    clean = n_cls - 1
    spc = cfg.subcarriers_per_chunk
    occupancy = np.zeros(cfg.n_subcarriers, dtype=bool)
    jammed = np.flatnonzero(chunk_classes != clean)
    occupancy[jammed * spc + chunk_classes[jammed]] = True
    hits = np.flatnonzero(occupancy)
    return SensingReport(
        capture_id=capture_id,
        chunk_classes=chunk_classes,
        chunk_probs=probs.mean(axis=0),
        global_occupancy=occupancy,
        located_subcarrier=int(hits[0]) if hits.size else None,
        segment_votes=votes,
    )


def sense_capture(
    time_iq: np.ndarray,
    model,
    cfg: SweepConfig,
    capture_id: int = 0,
    t_in: float | None = None,
) -> SensingReport:
    """Full sweep of one capture: every segment's G chunks go through the CNN
    in a single batch, then the verdicts are fused.

    ``t_in`` is a ``time.perf_counter()`` stamp of the capture's last sample;
    when given, the report carries the elapsed time in microseconds.
    """
    if model.input_len != cfg.chunk_len or model.num_classes != cfg.num_classes:
        raise ContractError(
            f"model expects ({model.input_len} bins, {model.num_classes} classes); "
            f"sweep produces ({cfg.chunk_len}, {cfg.num_classes})"
        )
    spectra = segment_spectra(time_iq, cfg)
    chunks = spectra.reshape(-1, cfg.chunk_len)
    probs = model.predict(encode_chunks(chunks, model.normalization))
    report = combine(probs.reshape(cfg.segments_per_capture, cfg.g, -1), cfg, capture_id)
    if t_in is not None:
        report.latency_us = (time.perf_counter() - t_in) * 1e6
    return report


class ReportWriter:
    """Emits one line per SensingReport as CSV or JSON lines."""

    CSV_FIELDS = ("capture_id", "located_subcarrier", "chunk_argmax", "latency_us")

    def __init__(self, fh: IO[str], mode: str = "csv"):
        if mode not in ("csv", "jsonl"):
            raise ValueError(f"unknown report mode {mode!r}")
        self.mode = mode
        self.fh = fh
        if mode == "csv":
            self._csv = csv.writer(fh)
            self._csv.writerow(self.CSV_FIELDS)

    def write(self, report: SensingReport) -> None:
        if self.mode == "jsonl":
            self.fh.write(json.dumps(report.to_dict()) + "\n")
            return
        located = -1 if report.located_subcarrier is None else report.located_subcarrier
        latency = "" if report.latency_us is None else f"{report.latency_us:.3f}"
        self._csv.writerow([
            report.capture_id,
            located,
            ";".join(str(int(c)) for c in report.chunk_classes),
            latency,
        ])
