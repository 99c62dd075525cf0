"""Labeled chunk corpora: synthesis, the binary DatasetFile and its sidecar.

Binary layout (little-endian)::

    header   magic "DSWP" | version u32 | n_fft u32 | chunk_len u32 | num_classes u32 | num_records u64
    record   label u16 | global_subcarrier i16 | snr_db f32 | chunk_len x (I f32, Q f32)

The sidecar ``<path>.json`` holds everything needed to regenerate the corpus
plus the split layout: records are stored split by split, each split drawn
from its own disjoint set of collection days.
"""

from __future__ import annotations

import json
import math
import os
import struct
import tempfile
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import BuildError, ContractError, CorruptFileError, DataError, FormatError, VersionError
from .signal_synth import (
    ALLSUB_CANDIDATES,
    CHUNK8_CANDIDATES,
    FULLBAND8_CANDIDATES,
    ChannelSpec,
    InterferenceSpec,
    OfdmConfig,
    Waveform,
    synthesize_capture,
)
from .sweep import SweepConfig, segment_spectra

MAGIC = b"DSWP"
VERSION = 1
HEADER = struct.Struct("<4sIIIIQ")

PRESETS = {
    "fullband8": FULLBAND8_CANDIDATES,
    "chunk8": CHUNK8_CANDIDATES,
    "allsub": ALLSUB_CANDIDATES,
}

DEFAULT_SPLITS = {
    "train": (0.70, (0, 1, 2)),
    "val": (0.15, (3,)),
    "test": (0.15, (4,)),
}


def record_dtype(chunk_len: int) -> np.dtype:
    return np.dtype([
        ("label", "<u2"),
        ("global_subcarrier", "<i2"),
        ("snr_db", "<f4"),
        ("iq", "<f4", (chunk_len, 2)),
    ])


@dataclass
class DatasetSplit:
    name: str
    iq: np.ndarray  # (n, chunk_len) complex64
    labels: np.ndarray
    global_subcarrier: np.ndarray
    snr_db: np.ndarray
    capture_ids: np.ndarray
    day_tags: tuple[int, ...] = ()

    def __len__(self):
        return int(self.labels.size)


@dataclass
class Dataset:
    """In-memory corpus. ``records`` is the structured array in file order."""

    n_fft: int
    chunk_len: int
    num_classes: int
    records: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return int(self.records.size)

    @property
    def iq(self) -> np.ndarray:
        raw = self.records["iq"]
        return (raw[..., 0] + 1j * raw[..., 1]).astype(np.complex64)

    @property
    def labels(self) -> np.ndarray:
        return self.records["label"].astype(np.int64)

    @property
    def class_names(self) -> list[str]:
        return self.meta.get("class_names") or [str(i) for i in range(self.num_classes)]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def split(self, name: str) -> DatasetSplit:
        splits = self.meta.get("splits", {})
        if name not in splits:
            raise DataError(f"dataset has no split {name!r} (have {sorted(splits)})")
        info = splits[name]
        sl = slice(info["offset"], info["offset"] + info["count"])
        rec = self.records[sl]
        raw = rec["iq"]
        return DatasetSplit(
            name=name,
            iq=(raw[..., 0] + 1j * raw[..., 1]).astype(np.complex64),
            labels=rec["label"].astype(np.int64),
            global_subcarrier=rec["global_subcarrier"].astype(np.int64),
            snr_db=rec["snr_db"].astype(np.float64),
            capture_ids=np.arange(sl.start, sl.stop, dtype=np.int64) + int(info.get("capture_id_base", 0)),
            day_tags=tuple(info["day_tags"]),
        )


def sidecar_path(path) -> str:
    return os.fspath(path) + ".json"


def _atomic_write(path: str, payload: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)), suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def write_dataset(path, ds: Dataset) -> None:
    if ds.records.dtype != record_dtype(ds.chunk_len):
        raise ContractError("records do not match the chunk length record layout")
    header = HEADER.pack(MAGIC, VERSION, ds.n_fft, ds.chunk_len, ds.num_classes, len(ds))
    _atomic_write(os.fspath(path), header + ds.records.tobytes())
    if ds.meta:
        _atomic_write(sidecar_path(path), json.dumps(ds.meta, indent=2, sort_keys=True).encode())


def read_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < HEADER.size:
        raise CorruptFileError(f"{path}: {len(blob)} bytes is shorter than the header")
    magic, version, n_fft, chunk_len, num_classes, n = HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise VersionError(f"{path}: unsupported dataset version {version}")
    dt = record_dtype(chunk_len)
    expected = HEADER.size + n * dt.itemsize
    if len(blob) != expected:
        raise CorruptFileError(f"{path}: expected {expected} bytes for {n} records, found {len(blob)}")
    records = np.frombuffer(blob, dtype=dt, count=n, offset=HEADER.size).copy()
    if n and int(records["label"].max()) >= num_classes:
        raise CorruptFileError(f"{path}: label out of range for {num_classes} classes")
    meta = {}
    side = sidecar_path(path)
    if os.path.exists(side):
        with open(side) as fh:
            try:
                meta = json.load(fh)
            except json.JSONDecodeError as exc:
                raise CorruptFileError(f"{side}: corrupt sidecar ({exc})") from exc
    return Dataset(n_fft, chunk_len, num_classes, records, meta)


@dataclass(frozen=True)
class BuildConfig:
    """Everything that determines a synthetic corpus."""

    preset: str = "chunk8"
    n_records: int = 20000
    n_time: int = 1024
    n_fft: int = 256
    g: int = 8
    snr_db: tuple[float, float] = (10.0, 30.0)
    snr_points: int = 5
    power_db_rel: tuple[float, float] = (10.0, 20.0)
    waveform: str = "TONE"
    day_gain_db: float = 6.0
    clean_from_jammed: float = 0.5
    clean_idle: float = 0.25
    clean_muted: float = 0.02
    seed: int = 0
    splits: dict = field(default_factory=lambda: {k: v for k, v in DEFAULT_SPLITS.items()})

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ContractError(f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}")
        if self.snr_db[0] > self.snr_db[1] or self.power_db_rel[0] > self.power_db_rel[1]:
            raise ContractError("ranges must be (min, max)")
        if self.snr_points < 1:
            raise ContractError("snr_points must be >= 1")
        total = sum(frac for frac, _ in self.splits.values())
        if not math.isclose(total, 1.0, abs_tol=1e-9):
            raise ContractError(f"split fractions sum to {total}, not 1")
        days = [d for _, tags in self.splits.values() for d in tags]
        if len(days) != len(set(days)) or any(not tags for _, tags in self.splits.values()):
            raise ContractError("each split needs its own non-empty, disjoint set of day tags")

    @property
    def snr_grid(self) -> np.ndarray:
        return np.linspace(self.snr_db[0], self.snr_db[1], self.snr_points)


def label_layout(ofdm: OfdmConfig, sweep: SweepConfig, candidates) -> dict:
    """Map each candidate target to its chunk and in-chunk class."""
    spc = sweep.subcarriers_per_chunk
    out = {}
    for k in candidates:
        p = ofdm.position(k)
        out[int(k)] = {"position": p, "chunk": p // spc, "label": p % spc}
    return out


def class_names(sweep: SweepConfig) -> list[str]:
    return [f"offset{i}" for i in range(sweep.subcarriers_per_chunk)] + ["clean"]


def _split_counts(n: int, splits: dict) -> dict[str, int]:
    names = list(splits)
    counts = {name: int(round(n * splits[name][0])) for name in names}
    counts[names[0]] += n - sum(counts.values())
    return counts


def synthesize_records(
    cfg: BuildConfig, ofdm: OfdmConfig | None = None
) -> tuple[np.ndarray, dict]:
    """Balanced chunk records for every split, plus the sidecar metadata."""
    ofdm = ofdm or OfdmConfig()
    sweep = SweepConfig(cfg.n_time, cfg.n_fft, cfg.g, ofdm.sample_rate_hz, ofdm.fft_size)
    candidates = PRESETS[cfg.preset]
    layout = label_layout(ofdm, sweep, candidates)
    clean = sweep.num_classes - 1
    jam_classes = sorted({v["label"] for v in layout.values()})
    active = jam_classes + [clean]
    if cfg.n_records < len(active):
        raise ContractError(f"n_records={cfg.n_records} is fewer than the {len(active)} classes")
    monitored = None
    if cfg.preset == "chunk8":
        chunks = {v["chunk"] for v in layout.values()}
        if len(chunks) != 1:
            raise ContractError("chunk8 candidates must fall inside one chunk; use g <= 8")
        monitored = chunks.pop()

    by_label: dict[int, list[int]] = {}
    for k, v in layout.items():
        by_label.setdefault(v["label"], []).append(k)

    dt = record_dtype(sweep.chunk_len)
    counts = _split_counts(cfg.n_records, cfg.splits)
    records = np.zeros(cfg.n_records, dtype=dt)
    grid = cfg.snr_grid
    split_meta = {}
    offset = 0
    for name, (_, day_tags) in cfg.splits.items():
        n = counts[name]
        if n < len(active):
            raise BuildError(f"split {name!r} gets {n} records, fewer than {len(active)} classes")
        day_gain = {
            d: float(np.random.default_rng([cfg.seed, d, 0x6A1]).uniform(-cfg.day_gain_db, cfg.day_gain_db))
            for d in day_tags
        }
        for j in range(n):
            idx = offset + j
            block = j // len(active)
            # continuing the rotation across splits keeps the totals balanced too
            cls = active[(offset + j) % len(active)]
            day = day_tags[block % len(day_tags)]
            snr = float(grid[(block // len(day_tags)) % len(grid)])
            rng = np.random.default_rng([cfg.seed, day, idx])
            rel = float(rng.uniform(*cfg.power_db_rel))
            idle = False
            if cls == clean:
                target = None
                idle = bool(rng.random() < cfg.clean_idle)
                if not idle and monitored is None and sweep.g > 1 and rng.random() < cfg.clean_from_jammed:
                    target = int(rng.choice(candidates))
            else:
                target = int(rng.choice(by_label[cls]))
            spec = InterferenceSpec(target, Waveform(cfg.waveform), None, rel, candidates)
            channel = ChannelSpec(snr, day_gain[day] + float(rng.normal(0, 1.0)), int(rng.integers(2**63)), day)
            capture = synthesize_capture(ofdm, cfg.n_time, spec, channel, int(rng.integers(2**63)), idle)
            if cls == clean and rng.random() < cfg.clean_muted:
                # front end muted: the capture carries no samples at all
                capture = np.zeros_like(capture)
            segment = int(rng.integers(sweep.segments_per_capture))
            bins = segment_spectra(capture, sweep)[segment]
            if cls == clean:
                if monitored is not None:
                    chunk = monitored
                elif target is None:
                    chunk = int(rng.integers(sweep.g))
                else:
                    others = [c for c in range(sweep.g) if c != layout[target]["chunk"]]
                    chunk = int(rng.choice(others))
            else:
                chunk = layout[target]["chunk"]
            chunk_bins = bins[chunk * sweep.chunk_len:(chunk + 1) * sweep.chunk_len]
            rec = records[idx]
            rec["label"] = cls
            rec["global_subcarrier"] = -1 if cls == clean else layout[target]["position"]
            rec["snr_db"] = snr
            rec["iq"][:, 0] = chunk_bins.real
            rec["iq"][:, 1] = chunk_bins.imag
        split_counts = np.bincount(records["label"][offset:offset + n], minlength=sweep.num_classes)
        _check_balance(split_counts[active], name)
        split_meta[name] = {
            "offset": offset,
            "count": n,
            "day_tags": list(day_tags),
            "day_gain_db": {str(d): g for d, g in day_gain.items()},
            "capture_id_base": 0,
        }
        offset += n

    totals = np.bincount(records["label"], minlength=sweep.num_classes)
    _check_balance(totals[active], "all")
    names = class_names(sweep)
    meta = {
        "format": "DSWP",
        "version": VERSION,
        "build": {**asdict(cfg), "splits": {k: [f, list(t)] for k, (f, t) in cfg.splits.items()}},
        "ofdm": asdict(ofdm),
        "sweep": asdict(sweep),
        "candidate_set": list(candidates),
        "monitored_chunk": monitored,
        "class_names": names,
        "active_classes": active,
        "class_counts": {names[c]: int(totals[c]) for c in active},
        "splits": split_meta,
    }
    return records, meta


def _check_balance(counts: np.ndarray, where: str) -> None:
    # one record of slack: a round-robin over k classes cannot do better
    mean = counts.mean()
    if mean == 0 or np.abs(counts - mean).max() > max(0.05 * mean, 1.0):
        raise BuildError(f"class imbalance beyond 5% in {where}: {counts.tolist()}")


def build_dataset(cfg: BuildConfig, out_path=None, ofdm: OfdmConfig | None = None) -> Dataset:
    """Synthesize a corpus and, if ``out_path`` is given, write it with its sidecar."""
    ofdm = ofdm or OfdmConfig()
    if cfg.n_fft % cfg.g:
        raise ContractError(f"n_fft={cfg.n_fft} not divisible by g={cfg.g}")
    records, meta = synthesize_records(cfg, ofdm)
    sweep = SweepConfig(cfg.n_time, cfg.n_fft, cfg.g, ofdm.sample_rate_hz, ofdm.fft_size)
    ds = Dataset(cfg.n_fft, sweep.chunk_len, sweep.num_classes, records, meta)
    if out_path is not None:
        write_dataset(out_path, ds)
    return ds
