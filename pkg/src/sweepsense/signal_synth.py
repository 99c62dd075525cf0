"""Synthetic OFDM bursts, narrowband interference and an AWGN channel.

Every generator here is a pure function of its configuration and seed, so a
corpus can be regenerated bit-for-bit from the sidecar metadata alone.

Subcarriers are addressed by signed index ``k`` (``-fft_size/2 .. fft_size/2-1``)
or by position ``p = k + fft_size/2``, which counts upward from the lowest
frequency slot and is what the chunking arithmetic works with.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError, ValidationError

# One interferer per 8-subcarrier chunk (under G=8) with a distinct in-chunk
# offset each, covering all four pilots.
FULLBAND8_CANDIDATES = (-26, -21, -12, -7, 7, 8, 21, 26)
# Eight adjacent targets inside one 1.25 MHz chunk (chunk 3 of 8).
CHUNK8_CANDIDATES = (-8, -7, -6, -5, -4, -3, -2, -1)
# Any of the 52 active subcarriers of the default 64-subcarrier layout.
ALLSUB_CANDIDATES = tuple(k for k in range(-26, 27) if k != 0)


def _rng(*entropy: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(e) for e in entropy]))


@dataclass(frozen=True)
class OfdmConfig:
    """Radio and waveform parameters of the OFDM transmitter."""

    fft_size: int = 64
    active_subcarriers: int = 52
    pilot_indices: tuple[int, ...] = (-21, -7, 7, 21)
    cp_len: int = 16
    sample_rate_hz: float = 1.0e7
    data_modulation: str = "QPSK"

    def __post_init__(self):
        object.__setattr__(self, "pilot_indices", tuple(int(k) for k in self.pilot_indices))
        if self.fft_size < 2 or self.fft_size % 2:
            raise ConfigError(f"fft_size must be a positive even count, got {self.fft_size}")
        if self.active_subcarriers % 2 or not 0 < self.active_subcarriers <= self.fft_size - 1:
            raise ConfigError(
                f"active_subcarriers must be even and at most fft_size-1, got {self.active_subcarriers}"
            )
        active = set(self.active_indices.tolist())
        if not set(self.pilot_indices) <= active:
            raise ConfigError(f"pilot_indices {self.pilot_indices} not inside the active set")
        if not 0 <= self.cp_len < self.fft_size:
            raise ConfigError(f"cp_len must lie in [0, fft_size), got {self.cp_len}")
        if not (self.sample_rate_hz > 0 and math.isfinite(self.sample_rate_hz)):
            raise ConfigError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if self.data_modulation != "QPSK":
            raise ConfigError(f"unsupported data_modulation {self.data_modulation!r}")

    @property
    def active_indices(self) -> np.ndarray:
        half = self.active_subcarriers // 2
        return np.concatenate([np.arange(-half, 0), np.arange(1, half + 1)])

    @property
    def data_indices(self) -> np.ndarray:
        act = self.active_indices
        return act[~np.isin(act, self.pilot_indices)]

    @property
    def symbol_len(self) -> int:
        return self.fft_size + self.cp_len

    @property
    def subcarrier_spacing_hz(self) -> float:
        return self.sample_rate_hz / self.fft_size

    @property
    def subcarrier_power(self) -> float:
        """Time-domain power contributed by one unit-energy subcarrier."""
        return 1.0 / self.fft_size

    def position(self, k: int) -> int:
        return int(k) + self.fft_size // 2

    def signed_index(self, position: int) -> int:
        return int(position) - self.fft_size // 2


class Waveform(str, enum.Enum):
    TONE = "TONE"
    NARROWBAND_NOISE = "NARROWBAND_NOISE"


@dataclass(frozen=True)
class InterferenceSpec:
    """Where and how strongly to jam.

    ``target_subcarrier=None`` describes a clean capture. ``bandwidth_hz=None``
    means one subcarrier spacing of whatever OfdmConfig it is applied with.
    """

    target_subcarrier: int | None = None
    waveform: Waveform = Waveform.TONE
    bandwidth_hz: float | None = None
    power_db_rel: float = 15.0
    candidate_set: tuple[int, ...] = FULLBAND8_CANDIDATES

    def __post_init__(self):
        object.__setattr__(self, "candidate_set", tuple(int(k) for k in self.candidate_set))
        object.__setattr__(self, "waveform", Waveform(self.waveform))
        if not self.candidate_set:
            raise ValidationError("candidate_set must not be empty")
        if len(set(self.candidate_set)) != len(self.candidate_set):
            raise ValidationError(f"candidate_set has duplicates: {self.candidate_set}")
        if self.target_subcarrier is not None and self.target_subcarrier not in self.candidate_set:
            raise ValidationError(
                f"target subcarrier {self.target_subcarrier} not in candidate set {self.candidate_set}"
            )
        if not math.isfinite(self.power_db_rel):
            raise ValidationError("power_db_rel must be finite")

    def resolved_bandwidth(self, cfg: OfdmConfig) -> float:
        bw = cfg.subcarrier_spacing_hz if self.bandwidth_hz is None else float(self.bandwidth_hz)
        if not 0 < bw <= cfg.subcarrier_spacing_hz * (1 + 1e-12):
            raise ValidationError(
                f"bandwidth_hz={bw} exceeds one subcarrier ({cfg.subcarrier_spacing_hz} Hz)"
            )
        return bw

    def validate(self, cfg: OfdmConfig) -> None:
        half = cfg.fft_size // 2
        bad = [k for k in self.candidate_set if not -half <= k < half]
        if bad:
            raise ValidationError(f"candidates {bad} fall outside the {cfg.fft_size}-subcarrier band")
        self.resolved_bandwidth(cfg)


@dataclass(frozen=True)
class ChannelSpec:
    """Gain plus AWGN. ``snr_db=math.inf`` disables the noise entirely."""

    snr_db: float = 20.0
    gain_db: float = 0.0
    seed: int = 0
    day_tag: int = 0

    def __post_init__(self):
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise ConfigError(f"snr_db must be finite or +inf, got {self.snr_db}")
        if not math.isfinite(self.gain_db):
            raise ConfigError("gain_db must be finite")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.day_tag < 0:
            raise ConfigError("day_tag must be non-negative")


@dataclass
class LabeledRecord:
    """One frequency-domain chunk with its interference label."""

    iq: np.ndarray  # complex64, chunk_len bins
    label: int
    global_subcarrier: int  # subcarrier position, -1 when clean
    snr_db: float = field(default=0.0)


def _pilot_symbols(cfg: OfdmConfig) -> np.ndarray:
    pilots = np.asarray(cfg.pilot_indices)
    if pilots.size == 0:
        return pilots.astype(np.complex128)
    # 802.11a polarity: the highest pilot is inverted
    return np.where(pilots == pilots.max(), -1.0, 1.0).astype(np.complex128)


def generate_ofdm_burst(cfg: OfdmConfig, n_symbols: int, seed: int) -> np.ndarray:
    """Return ``n_symbols * (fft_size + cp_len)`` complex baseband samples.

    Data subcarriers carry unit-energy QPSK, pilots carry fixed BPSK and the
    DC and guard bins are empty. With this scaling the mean burst power is
    ``active_subcarriers / fft_size``.
    """
    if n_symbols < 1:
        raise ContractError(f"n_symbols must be >= 1, got {n_symbols}")
    rng = _rng(seed, 0x0FD4)
    n = cfg.fft_size
    grid = np.zeros((n_symbols, n), dtype=np.complex128)
    data = cfg.data_indices
    bits = rng.integers(0, 2, size=(n_symbols, data.size, 2))
    grid[:, data % n] = ((1 - 2 * bits[..., 0]) + 1j * (1 - 2 * bits[..., 1])) / np.sqrt(2)
    if cfg.pilot_indices:
        grid[:, np.asarray(cfg.pilot_indices) % n] = _pilot_symbols(cfg)
    body = np.fft.ifft(grid, axis=1) * np.sqrt(n)
    if cfg.cp_len:
        body = np.concatenate([body[:, n - cfg.cp_len:], body], axis=1)
    return body.reshape(-1)


def inject_interference(
    signal: np.ndarray, spec: InterferenceSpec, cfg: OfdmConfig, seed: int
) -> np.ndarray:
    """Add a narrowband interferer centred on ``spec.target_subcarrier``."""
    signal = np.asarray(signal)
    if signal.size == 0:
        raise ContractError("signal must not be empty")
    spec.validate(cfg)
    if spec.target_subcarrier is None:
        return signal.copy()

    rng = _rng(seed, 0x1A33)
    n = signal.size
    power = cfg.subcarrier_power * 10.0 ** (spec.power_db_rel / 10.0)
    k = spec.target_subcarrier
    if spec.waveform is Waveform.TONE:
        phase = rng.uniform(0.0, 2.0 * np.pi)
        t = np.arange(n)
        # reduce k*t modulo fft_size so the phase argument stays small and exact
        interf = np.sqrt(power) * np.exp(1j * (2.0 * np.pi * ((k * t) % cfg.fft_size) / cfg.fft_size + phase))
    else:
        bw = spec.resolved_bandwidth(cfg)
        white = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        spectrum = np.fft.fft(white)
        freqs = np.fft.fftfreq(n, d=1.0 / cfg.sample_rate_hz)
        fs = cfg.sample_rate_hz
        offset = (freqs - k * cfg.subcarrier_spacing_hz + fs / 2) % fs - fs / 2
        mask = np.abs(offset) <= bw / 2
        if not mask.any():
            mask[np.argmin(np.abs(offset))] = True
        interf = np.fft.ifft(np.where(mask, spectrum, 0))
        interf *= np.sqrt(power / np.mean(np.abs(interf) ** 2))
    return signal + interf


def apply_channel(signal: np.ndarray, ch: ChannelSpec, signal_power: float | None = None) -> np.ndarray:
    """Scale by ``gain_db`` and add circular white Gaussian noise at ``snr_db``.

    The noise is calibrated against the measured power of the scaled input,
    or against ``signal_power`` (before gain) when given, e.g. for an idle
    channel whose nominal transmit power is known but absent.
    """
    signal = np.asarray(signal)
    if signal.size == 0:
        raise ContractError("signal must not be empty")
    out = signal * 10.0 ** (ch.gain_db / 20.0)
    if ch.snr_db == math.inf:
        return out
    rng = _rng(ch.seed, ch.day_tag, 0xC4A7)
    if signal_power is None:
        p_signal = float(np.mean(np.abs(out) ** 2))
    else:
        p_signal = float(signal_power) * 10.0 ** (ch.gain_db / 10.0)
    sigma = np.sqrt(p_signal / 10.0 ** (ch.snr_db / 10.0) / 2.0)
    noise = sigma * (rng.standard_normal(out.size) + 1j * rng.standard_normal(out.size))
    return out + noise.reshape(out.shape)


def synthesize_capture(
    cfg: OfdmConfig,
    n_time: int,
    interference: InterferenceSpec,
    channel: ChannelSpec,
    seed: int,
    idle: bool = False,
) -> np.ndarray:
    """One unsynchronised receive window of ``n_time`` samples.

    The window starts at a seeded random offset inside the first OFDM symbol,
    so captures are not aligned to symbol boundaries. ``idle`` switches the
    OFDM transmitter off while keeping the noise floor it would have had.
    """
    sym = cfg.symbol_len
    n_symbols = -(-n_time // sym) + 1
    burst = generate_ofdm_burst(cfg, n_symbols, seed)
    start = int(_rng(seed, 0x57A7).integers(0, sym))
    window = burst[start:start + n_time]
    nominal = cfg.active_subcarriers * cfg.subcarrier_power
    if idle:
        window = np.zeros_like(window)
    jammed = inject_interference(window, interference, cfg, seed)
    return apply_channel(jammed, channel, signal_power=nominal if idle else None)
