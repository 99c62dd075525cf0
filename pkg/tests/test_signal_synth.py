import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sweepsense.errors import ConfigError, ContractError, ValidationError
from sweepsense.signal_synth import (
    ALLSUB_CANDIDATES,
    CHUNK8_CANDIDATES,
    FULLBAND8_CANDIDATES,
    ChannelSpec,
    InterferenceSpec,
    OfdmConfig,
    Waveform,
    apply_channel,
    generate_ofdm_burst,
    inject_interference,
    synthesize_capture,
)

CFG = OfdmConfig()


def direct_dft(x):
    """O(N^2) DFT with exact integer phase reduction."""
    n = x.size
    idx = np.arange(n)
    phase = (np.outer(idx, idx) % n) * (-2.0 * np.pi / n)
    return np.exp(1j * phase) @ x


def group_power(x, n_fft=256, n_sub=64):
    """Power per subcarrier group of the shifted spectrum, summed over segments."""
    segs = x.reshape(-1, n_fft)
    spec = np.stack([np.roll(direct_dft(s), n_fft // 2) for s in segs])
    p = (np.abs(spec) ** 2).sum(axis=0)
    return p.reshape(n_sub, n_fft // n_sub).sum(axis=1)


def test_burst_length():
    assert generate_ofdm_burst(CFG, 1, seed=0).shape == (80,)
    assert generate_ofdm_burst(CFG, 5, seed=0).shape == (400,)


def test_burst_has_dc_null_and_empty_guards():
    burst = generate_ofdm_burst(CFG, 3, seed=2).reshape(3, 80)
    for sym in burst:
        spec = direct_dft(sym[16:]) / 8.0  # undo the sqrt(64) scaling
        assert abs(spec[0]) < 1e-12
        occupied = np.flatnonzero(np.abs(spec) > 1e-9)
        signed = np.where(occupied >= 32, occupied - 64, occupied)
        assert set(signed.tolist()) == set(CFG.active_indices.tolist())


def test_cyclic_prefix_copies_symbol_tail():
    sym = generate_ofdm_burst(CFG, 1, seed=9)
    np.testing.assert_array_equal(sym[:16], sym[-16:])


def test_burst_mean_power_monte_carlo():
    # average of 1000 seeded single-symbol bursts
    p = np.mean([np.mean(np.abs(generate_ofdm_burst(CFG, 1, seed=s)) ** 2) for s in range(1000)])
    expected = CFG.active_subcarriers / CFG.fft_size
    assert abs(p - expected) / expected < 0.05


def test_burst_determinism():
    a = generate_ofdm_burst(CFG, 4, seed=77)
    b = generate_ofdm_burst(CFG, 4, seed=77)
    c = generate_ofdm_burst(CFG, 4, seed=78)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_burst_rejects_zero_symbols():
    with pytest.raises(ContractError):
        generate_ofdm_burst(CFG, 0, seed=0)


@pytest.mark.parametrize("kwargs", [
    {"active_subcarriers": 64},
    {"active_subcarriers": 51},
    {"pilot_indices": (-30, 7)},
    {"cp_len": 64},
    {"sample_rate_hz": 0.0},
    {"fft_size": 63},
    {"data_modulation": "QAM16"},
])
def test_ofdm_config_invariants(kwargs):
    with pytest.raises(ConfigError):
        OfdmConfig(**kwargs)


def test_none_target_is_identity():
    x = generate_ofdm_burst(CFG, 2, seed=1)
    y = inject_interference(x, InterferenceSpec(None), CFG, seed=3)
    np.testing.assert_array_equal(x, y)
    assert y is not x


def test_target_outside_candidates():
    with pytest.raises(ValidationError):
        InterferenceSpec(target_subcarrier=3)
    with pytest.raises(ValidationError):
        InterferenceSpec(target_subcarrier=-5, candidate_set=FULLBAND8_CANDIDATES)


def test_spec_invariants():
    with pytest.raises(ValidationError):
        InterferenceSpec(candidate_set=())
    with pytest.raises(ValidationError):
        InterferenceSpec(candidate_set=(7, 7))
    spec = InterferenceSpec(7, Waveform.NARROWBAND_NOISE, bandwidth_hz=200e3)
    with pytest.raises(ValidationError):
        inject_interference(np.ones(64, complex), spec, CFG, 0)


def test_default_bandwidth_is_one_subcarrier():
    assert InterferenceSpec(7).resolved_bandwidth(CFG) == 156250.0


def test_tone_lands_in_its_subcarrier_group():
    x = np.zeros(1024, complex)
    y = inject_interference(x, InterferenceSpec(7, power_db_rel=20.0), CFG, seed=5)
    mags = np.abs(np.roll(direct_dft(y[:256]), 128))
    assert mags.argmax() // 4 == CFG.position(7)
    # with the OFDM signal present too
    burst = generate_ofdm_burst(CFG, 13, seed=5)[:1024]
    y = inject_interference(burst, InterferenceSpec(7, power_db_rel=20.0), CFG, seed=5)
    assert group_power(y).argmax() == CFG.position(7)


@pytest.mark.parametrize("waveform", list(Waveform))
@pytest.mark.parametrize("rel", [0.0, 10.0, 20.0])
def test_injected_power(waveform, rel):
    x = generate_ofdm_burst(CFG, 20, seed=4)
    spec = InterferenceSpec(-21, waveform, power_db_rel=rel)
    y = inject_interference(x, spec, CFG, seed=8)
    injected = np.mean(np.abs(y - x) ** 2)
    target = CFG.subcarrier_power * 10 ** (rel / 10)
    assert abs(10 * math.log10(injected / target)) < 0.5


def test_narrowband_noise_stays_in_band():
    x = np.zeros(4096, complex)
    y = inject_interference(x, InterferenceSpec(8, Waveform.NARROWBAND_NOISE), CFG, seed=1)
    spec = np.abs(np.fft.fftshift(np.fft.fft(y))) ** 2
    freqs = np.fft.fftshift(np.fft.fftfreq(4096, 1 / CFG.sample_rate_hz))
    centre = 8 * CFG.subcarrier_spacing_hz
    outside = np.abs(freqs - centre) > CFG.subcarrier_spacing_hz / 2 + 1
    assert spec[outside].sum() < 1e-20 * spec.sum()


def test_channel_infinite_snr_is_pure_gain():
    x = generate_ofdm_burst(CFG, 4, seed=0)
    y = apply_channel(x, ChannelSpec(snr_db=math.inf, gain_db=6.0))
    np.testing.assert_array_equal(y, x * 10 ** (6.0 / 20))


@pytest.mark.parametrize("snr", [0.0, 10.0, 25.0])
def test_channel_snr_sample_variance(snr):
    x = generate_ofdm_burst(CFG, 1250, seed=3)  # 10^5 samples
    ch = ChannelSpec(snr_db=snr, gain_db=-3.0, seed=17)
    y = apply_channel(x, ch)
    signal = x * 10 ** (-3.0 / 20)
    measured = 10 * np.log10(np.mean(np.abs(signal) ** 2) / np.mean(np.abs(y - signal) ** 2))
    assert abs(measured - snr) < 0.3


def test_channel_determinism_and_day_families():
    x = generate_ofdm_burst(CFG, 4, seed=0)
    a = apply_channel(x, ChannelSpec(15.0, seed=3, day_tag=1))
    b = apply_channel(x, ChannelSpec(15.0, seed=3, day_tag=1))
    c = apply_channel(x, ChannelSpec(15.0, seed=3, day_tag=2))
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_channel_spec_invariants():
    with pytest.raises(ConfigError):
        ChannelSpec(snr_db=math.nan)
    with pytest.raises(ConfigError):
        ChannelSpec(gain_db=math.inf)
    with pytest.raises(ContractError):
        apply_channel(np.zeros(0, complex), ChannelSpec())


def test_idle_capture_keeps_nominal_noise_floor():
    ch = ChannelSpec(snr_db=10.0, seed=2)
    y = synthesize_capture(CFG, 1024, InterferenceSpec(None), ch, seed=1, idle=True)
    nominal = CFG.active_subcarriers * CFG.subcarrier_power
    assert abs(np.mean(np.abs(y) ** 2) / (nominal / 10) - 1) < 0.15


def test_candidate_presets():
    assert len(FULLBAND8_CANDIDATES) == 8 and len(CHUNK8_CANDIDATES) == 8
    # the full-band preset has one target per eighth of the band
    assert sorted(CFG.position(k) // 8 for k in FULLBAND8_CANDIDATES) == list(range(8))
    assert {CFG.position(k) // 8 for k in CHUNK8_CANDIDATES} == {3}
    assert len(ALLSUB_CANDIDATES) == 52 and 0 not in ALLSUB_CANDIDATES


@settings(max_examples=25, deadline=None)
@given(
    k=st.sampled_from(ALLSUB_CANDIDATES),
    rel=st.floats(10.0, 30.0),
    snr=st.floats(10.0, 40.0),
    seed=st.integers(0, 2**32 - 1),
)
def test_spectral_placement(k, rel, snr, seed):
    spec = InterferenceSpec(k, power_db_rel=rel, candidate_set=ALLSUB_CANDIDATES)
    y = synthesize_capture(CFG, 1024, spec, ChannelSpec(snr, seed=seed), seed=seed)
    assert group_power(y).argmax() == CFG.position(k)
