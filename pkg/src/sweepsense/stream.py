"""Receiver front-end simulation: a paced IQ source, the mirror that feeds a
lossless decode path and a best-effort sensing path, and the worker threads
behind them.

The decode path never loses a capture. The sensing path sits behind a small
DROP_OLDEST queue, so when classification falls behind, stale captures are
discarded instead of stalling the producer.
"""

from __future__ import annotations

import enum
import itertools
import json
import logging
import math
import sys
import threading
import time
import zlib
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator

import numpy as np

from .errors import ContractError
from .signal_synth import (
    FULLBAND8_CANDIDATES,
    ChannelSpec,
    InterferenceSpec,
    OfdmConfig,
    synthesize_capture,
)
from .sweep import SensingReport, SweepConfig, sense_capture

logger = logging.getLogger(__name__)


class Policy(str, enum.Enum):
    BLOCK_PRODUCER = "BLOCK_PRODUCER"
    DROP_OLDEST = "DROP_OLDEST"


class Closed(Exception):
    """Raised by ``BoundedQueue.get`` once the queue is closed and drained."""


@dataclass(frozen=True)
class Capture:
    capture_id: int
    samples: np.ndarray
    t_arrival: float  # perf_counter() when the last sample arrived


@dataclass(frozen=True)
class QueueEvent:
    seq: int
    t: float
    kind: str  # "put", "drop" or "get"
    capture_id: int


class BoundedQueue:
    """FIFO with a hard capacity and an overflow policy.

    ``record_events=True`` keeps an ordered log of puts, drops and gets, which
    is what the drop-accounting checks replay.
    """

    def __init__(self, capacity: int, policy: Policy = Policy.DROP_OLDEST, record_events: bool = False):
        if capacity < 1:
            raise ValueError("capacity must be at least 1")
        self.capacity = int(capacity)
        self.policy = Policy(policy)
        self._items: deque = deque()
        self._cond = threading.Condition(threading.Lock())
        self._closed = False
        self.drop_count = 0
        self.dropped_ids: list[int] = []
        self.events: list[QueueEvent] | None = [] if record_events else None
        self._seq = itertools.count()

    def _log(self, kind: str, item) -> None:
        if self.events is not None:
            self.events.append(QueueEvent(next(self._seq), time.perf_counter(), kind, getattr(item, "capture_id", -1)))

    def put(self, item) -> float:
        """Enqueue ``item``; returns the seconds spent blocked (BLOCK_PRODUCER only)."""
        waited = 0.0
        with self._cond:
            if self._closed:
                raise Closed("put on a closed queue")
            if len(self._items) >= self.capacity:
                if self.policy is Policy.DROP_OLDEST:
                    old = self._items.popleft()
                    self.drop_count += 1
                    self.dropped_ids.append(getattr(old, "capture_id", -1))
                    self._log("drop", old)
                else:
                    t0 = time.perf_counter()
                    while len(self._items) >= self.capacity:
                        self._cond.wait()
                    waited = time.perf_counter() - t0
            self._items.append(item)
            self._log("put", item)
            self._cond.notify_all()
        return waited

    def get(self, timeout: float | None = None):
        with self._cond:
            deadline = None if timeout is None else time.monotonic() + timeout
            while not self._items:
                if self._closed:
                    raise Closed()
                remaining = None if deadline is None else deadline - time.monotonic()
                if remaining is not None and remaining <= 0:
                    raise TimeoutError("queue empty")
                self._cond.wait(remaining)
            item = self._items.popleft()
            self._log("get", item)
            self._cond.notify_all()
            return item

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    def __len__(self):
        with self._cond:
            return len(self._items)


class IQMirror:
    """Hands the same read-only capture to both paths; no sample copies."""

    def __init__(self, decode_queue: BoundedQueue, sense_queue: BoundedQueue):
        if decode_queue.policy is not Policy.BLOCK_PRODUCER:
            raise ContractError("the decode path must be lossless (BLOCK_PRODUCER)")
        if sense_queue.policy is not Policy.DROP_OLDEST:
            raise ContractError("the sensing path must never block the producer (DROP_OLDEST)")
        self.decode_queue = decode_queue
        self.sense_queue = sense_queue
        self.produced = 0
        self.max_decode_stall_s = 0.0

    def push(self, capture: Capture) -> None:
        capture.samples.flags.writeable = False
        stall = self.decode_queue.put(capture)
        self.max_decode_stall_s = max(self.max_decode_stall_s, stall)
        self.sense_queue.put(capture)
        self.produced += 1

    def close(self) -> None:
        self.decode_queue.close()
        self.sense_queue.close()


def mirror(
    source: Iterable[Capture],
    decode_capacity: int = 256,
    sense_capacity: int = 8,
    record_events: bool = False,
) -> tuple[BoundedQueue, BoundedQueue, threading.Thread]:
    """Start a producer thread that pushes every capture of ``source`` through
    an IQMirror. Returns ``(decode_queue, sense_queue, producer_thread)``; both
    queues are closed once the source is exhausted."""
    dq = BoundedQueue(decode_capacity, Policy.BLOCK_PRODUCER)
    sq = BoundedQueue(sense_capacity, Policy.DROP_OLDEST, record_events=record_events)
    m = IQMirror(dq, sq)

    def produce():
        try:
            for cap in source:
                m.push(cap)
        finally:
            m.close()

    th = threading.Thread(target=produce, name="iq-producer", daemon=True)
    th.mirror = m  # type: ignore[attr-defined]
    th.start()
    return dq, sq, th


@dataclass
class StreamStats:
    produced: int = 0
    decoded: int = 0
    sensed: int = 0
    sense_dropped: int = 0
    sense_pending: int = 0
    max_decode_stall_us: float = 0.0
    capture_period_us: float = 0.0
    duration_s: float = 0.0
    decode_checksum: int = 0
    latency_us: list[float] = field(default_factory=list)
    sensed_ids: list[int] = field(default_factory=list)
    n_sense_workers: int = 1
    sense_slowdown: float = 1.0

    def percentile(self, q: float) -> float | None:
        return float(np.percentile(self.latency_us, q)) if self.latency_us else None

    def histogram(self, bins: int = 20) -> dict:
        if not self.latency_us:
            return {"edges_us": [], "counts": []}
        lat = np.asarray(self.latency_us)
        edges = np.geomspace(max(lat.min(), 1e-3), lat.max() * (1 + 1e-9), bins + 1)
        counts, _ = np.histogram(np.clip(lat, edges[0], None), edges)
        return {"edges_us": edges.tolist(), "counts": counts.tolist()}

    def to_dict(self) -> dict:
        return {
            "produced": self.produced,
            "decoded": self.decoded,
            "sensed": self.sensed,
            "sense_dropped": self.sense_dropped,
            "sense_pending": self.sense_pending,
            "max_decode_stall_us": self.max_decode_stall_us,
            "capture_period_us": self.capture_period_us,
            "duration_s": self.duration_s,
            "decode_checksum": self.decode_checksum,
            "latency_p50_us": self.percentile(50),
            "latency_p95_us": self.percentile(95),
            "latency_histogram": self.histogram(),
            "n_sense_workers": self.n_sense_workers,
            "sense_slowdown": self.sense_slowdown,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


class SyntheticSource:
    """Seeded captures cycled from a pre-synthesized pool.

    Each pool entry is jammed at a random candidate subcarrier (or left clean)
    so the sensing path has something to find.
    """

    def __init__(self, ofdm: OfdmConfig, n_time: int, seed: int = 0, pool: int = 64,
                 candidates=FULLBAND8_CANDIDATES, snr_db: float = 20.0, power_db_rel: float = 15.0):
        rng = np.random.default_rng([seed, 0x5EED])
        self.truth: list[int | None] = []
        self.pool: list[np.ndarray] = []
        for i in range(pool):
            target = None if rng.random() < 1 / (len(candidates) + 1) else int(rng.choice(candidates))
            spec = InterferenceSpec(target, power_db_rel=power_db_rel, candidate_set=candidates)
            ch = ChannelSpec(snr_db, 0.0, int(rng.integers(2**63)))
            cap = synthesize_capture(ofdm, n_time, spec, ch, int(rng.integers(2**63)))
            self.pool.append(cap.astype(np.complex64))
            self.truth.append(target)

    def __call__(self, i: int) -> np.ndarray:
        return self.pool[i % len(self.pool)]


class FileSource:
    """Replays consecutive ``n_time`` captures from raw interleaved float32 I/Q."""

    def __init__(self, path, n_time: int, loop: bool = False):
        raw = np.fromfile(path, dtype="<f4")
        if raw.size % 2:
            raise ContractError(f"{path}: odd number of float32 values; not interleaved I/Q")
        iq = (raw[0::2] + 1j * raw[1::2]).astype(np.complex64)
        n = iq.size // n_time
        if n == 0:
            raise ContractError(f"{path}: fewer than {n_time} samples")
        self.captures = iq[: n * n_time].reshape(n, n_time)
        self.loop = loop

    def __len__(self):
        return self.captures.shape[0]

    def __call__(self, i: int) -> np.ndarray | None:
        if i >= len(self) and not self.loop:
            return None
        return self.captures[i % len(self)]


def paced_captures(
    make: Callable[[int], np.ndarray | None],
    n_captures: int,
    period_s: float,
    paced: bool = True,
) -> Iterator[Capture]:
    """Yield captures as they would complete at the given period.

    Pacing runs on a monotonic clock in capture-sized ticks: on each wake-up
    every capture already due is released, then the loop sleeps to the next.
    """
    t0 = time.perf_counter()
    for i in range(n_captures):
        if paced:
            due = t0 + (i + 1) * period_s
            now = time.perf_counter()
            if due > now:
                time.sleep(due - now)
        samples = make(i)
        if samples is None:
            return
        yield Capture(i, np.array(samples, dtype=np.complex64), time.perf_counter())


@dataclass
class StreamResult:
    stats: StreamStats
    reports: list[SensingReport]
    sense_events: list[QueueEvent] | None
    dropped_ids: list[int]


def run_stream(
    duration_s: float,
    cfg: SweepConfig,
    model,
    *,
    source: Callable[[int], np.ndarray | None] | None = None,
    ofdm: OfdmConfig | None = None,
    paced: bool = True,
    sense_capacity: int = 8,
    decode_capacity: int = 256,
    sense_slowdown: float = 1.0,
    n_sense_workers: int = 1,
    sense_halted: bool = False,
    record_events: bool = False,
    on_report: Callable[[SensingReport], None] | None = None,
    seed: int = 0,
    switch_interval_s: float | None = 1e-4,
) -> StreamResult:
    """Drive source -> mirror -> {decode sink, sensing workers} for ``duration_s``
    of signal time at ``cfg.sample_rate_hz``.

    ``sense_slowdown`` stretches every sensing job to that multiple of its
    measured compute time. ``sense_halted`` runs no sensing worker at all.
    Reports are delivered in capture_id order.
    """
    if model.input_len != cfg.chunk_len or model.num_classes != cfg.num_classes:
        raise ContractError(
            f"model ({model.input_len} bins, {model.num_classes} classes) does not fit "
            f"sweep config ({cfg.chunk_len} bins, {cfg.num_classes} classes)"
        )
    if sense_slowdown < 1.0 or n_sense_workers < 1:
        raise ContractError("sense_slowdown must be >= 1 and n_sense_workers >= 1")
    period = cfg.n_time / cfg.sample_rate_hz
    n_captures = int(math.floor(duration_s * cfg.sample_rate_hz / cfg.n_time + 1e-9))
    if source is None:
        ofdm = ofdm or OfdmConfig(sample_rate_hz=cfg.sample_rate_hz, fft_size=cfg.n_subcarriers)
        source = SyntheticSource(ofdm, cfg.n_time, seed)

    old_switch = sys.getswitchinterval()
    if switch_interval_s is not None:
        sys.setswitchinterval(switch_interval_s)
    try:
        dq, sq, producer = mirror(
            paced_captures(source, n_captures, period, paced),
            decode_capacity, sense_capacity, record_events,
        )
        stats = StreamStats(capture_period_us=period * 1e6, n_sense_workers=n_sense_workers,
                            sense_slowdown=sense_slowdown)
        reports: list[SensingReport] = []

        def decode_sink():
            crc, n = 0, 0
            while True:
                try:
                    cap = dq.get()
                except Closed:
                    break
                crc = zlib.crc32(cap.samples.view(np.uint8), crc)
                n += 1
            stats.decoded, stats.decode_checksum = n, crc

        ticket_lock = threading.Lock()
        tickets = itertools.count()
        out_cond = threading.Condition()
        pending: dict[int, SensingReport] = {}
        next_out = [0]

        def emit(ticket: int, report: SensingReport) -> None:
            with out_cond:
                pending[ticket] = report
                while next_out[0] in pending:
                    rep = pending.pop(next_out[0])
                    reports.append(rep)
                    if on_report is not None:
                        on_report(rep)
                    next_out[0] += 1

        def sense_worker():
            while True:
                with ticket_lock:
                    try:
                        cap = sq.get()
                    except Closed:
                        return
                    ticket = next(tickets)
                t_start = time.perf_counter()
                report = sense_capture(cap.samples, model, cfg, cap.capture_id)
                if sense_slowdown > 1.0:
                    time.sleep((sense_slowdown - 1.0) * (time.perf_counter() - t_start))
                report.latency_us = (time.perf_counter() - cap.t_arrival) * 1e6
                emit(ticket, report)

        t_run = time.perf_counter()
        threads = [threading.Thread(target=decode_sink, name="decode", daemon=True)]
        if not sense_halted:
            threads += [threading.Thread(target=sense_worker, name=f"sense-{i}", daemon=True)
                        for i in range(n_sense_workers)]
        for th in threads:
            th.start()
        producer.join()
        for th in threads:
            th.join()
        stats.duration_s = time.perf_counter() - t_run
    finally:
        sys.setswitchinterval(old_switch)

    m = producer.mirror  # type: ignore[attr-defined]
    stats.produced = m.produced
    stats.max_decode_stall_us = m.max_decode_stall_s * 1e6
    stats.sensed = len(reports)
    stats.sense_dropped = sq.drop_count
    stats.sense_pending = len(sq)
    stats.latency_us = [r.latency_us for r in reports]
    stats.sensed_ids = [r.capture_id for r in reports]
    logger.info("stream: produced %d decoded %d sensed %d dropped %d",
                stats.produced, stats.decoded, stats.sensed, stats.sense_dropped)
    return StreamResult(stats, reports, sq.events, list(sq.dropped_ids))
