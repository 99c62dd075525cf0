import io
import json
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sweepsense.errors import ConfigError, ContractError
from sweepsense.nn import build_reference_model
from sweepsense.signal_synth import ChannelSpec, InterferenceSpec, OfdmConfig, synthesize_capture
from sweepsense.sweep import (
    ReportWriter,
    SpectrumFrame,
    SweepConfig,
    classify_batch,
    combine,
    encode_chunks,
    fft_stage,
    partition,
    sense_capture,
)

CFG = SweepConfig()


def direct_dft(x):
    n = x.size
    idx = np.arange(n)
    return np.exp((np.outer(idx, idx) % n) * (-2j * np.pi / n)) @ x


def random_iq(rng, n=1024):
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


def test_sweep_config_geometry():
    assert CFG.segments_per_capture == 4
    assert CFG.chunk_len == 32
    assert CFG.num_classes == 9
    assert [CFG.with_g(g).chunk_bandwidth_hz / 1e6 for g in (1, 2, 4, 8)] == [10, 5, 2.5, 1.25]


@pytest.mark.parametrize("kwargs", [{"n_fft": 200}, {"n_time": 1000}, {"g": 3}, {"g": 128}])
def test_sweep_config_invariants(kwargs):
    with pytest.raises(ConfigError):
        SweepConfig(**kwargs)


def test_fft_stage_frame_count():
    frames = fft_stage(np.zeros(1024, complex), CFG, capture_id=5)
    assert len(frames) == 4
    assert all(f.bins.shape == (256,) for f in frames)
    assert [f.segment_index for f in frames] == [0, 1, 2, 3]
    assert all(f.capture_id == 5 for f in frames)


def test_fft_stage_constant_input():
    c = 0.7 - 0.2j
    for f in fft_stage(np.full(1024, c), CFG):
        assert abs(abs(f.bins[128]) - 256 * abs(c)) < 1e-12
        others = np.delete(np.abs(f.bins), 128)
        assert others.max() <= 1e-9 * 256 * abs(c)


def test_fft_stage_wrong_length():
    with pytest.raises(ContractError):
        fft_stage(np.zeros(1000, complex), CFG)


def test_fft_stage_matches_direct_dft_and_parseval(rng):
    x = random_iq(rng)
    for f, seg in zip(fft_stage(x, CFG), x.reshape(4, 256)):
        oracle = np.roll(direct_dft(seg), 128)
        rel = np.abs(f.bins - oracle) / np.maximum(np.abs(oracle), 1e-12)
        assert rel.max() <= 1e-9
        parseval = np.sum(np.abs(seg) ** 2) * 256
        assert abs(np.sum(np.abs(f.bins) ** 2) - parseval) / parseval <= 1e-9


@pytest.mark.parametrize("g", [1, 2, 4, 8])
def test_partition_round_trip(rng, g):
    frame = fft_stage(random_iq(rng), CFG)[1]
    batch = partition(frame, g)
    assert batch.chunks.shape == (g, 256 // g)
    assert list(batch.chunk_index) == list(range(g))
    assert np.array_equal(np.concatenate(list(batch.chunks)), frame.bins)


def test_partition_identity_and_lowest_chunk(rng):
    frame = fft_stage(random_iq(rng), CFG)[0]
    np.testing.assert_array_equal(partition(frame, 1).chunks[0], frame.bins)
    # a tone in the lowest 1.25 MHz ends up in chunk 0
    t = np.arange(1024)
    tone = np.exp(2j * np.pi * (-4.5e6 / 1e7) * t)
    batch = partition(fft_stage(tone, CFG)[0], 8)
    assert np.abs(batch.chunks).max(axis=1).argmax() == 0


def test_partition_non_divisor():
    with pytest.raises(ContractError):
        partition(SpectrumFrame(np.zeros(256, complex)), 3)


def test_encode_chunks():
    z = np.array([[3 + 4j, 0, -1j], [0, 0, 0]])
    x = encode_chunks(z)
    assert x.shape == (2, 2, 3) and x.dtype == np.float32
    np.testing.assert_allclose(x[0, 0], [0.6, 0, 0])
    np.testing.assert_allclose(x[0, 1], [0.8, 0, -0.2])
    assert not x[1].any()
    with pytest.raises(ContractError):
        encode_chunks(z, "zscore")


def _probs(votes, n_cls=9):
    """Turn a (segments, g) vote table into probability vectors."""
    votes = np.asarray(votes)
    p = np.full(votes.shape + (n_cls,), 0.5 / (n_cls - 1))
    np.put_along_axis(p, votes[..., None], 0.5, axis=-1)
    return p


def test_combine_all_clean():
    report = combine(_probs(np.full((4, 8), 8)), CFG)
    assert report.located_subcarrier is None
    assert not report.global_occupancy.any()


def test_combine_index_arithmetic_and_majority():
    votes = np.full((4, 8), 8)
    votes[:3, 5] = 3
    report = combine(_probs(votes), CFG, capture_id=7)
    assert report.located_subcarrier == 5 * 8 + 3
    assert report.occupied == [43]
    assert report.capture_id == 7


def test_combine_tie_goes_to_lowest_class():
    votes = np.full((4, 8), 8)
    votes[:, 2] = [2, 7, 2, 7]
    assert combine(_probs(votes), CFG).chunk_classes[2] == 2


def test_combine_reports_all_occupied():
    votes = np.full((4, 8), 8)
    votes[:, 6] = 1
    votes[:, 1] = 4
    report = combine(_probs(votes), CFG)
    assert report.occupied == [12, 49]
    assert report.located_subcarrier == 12


def test_combine_rejects_bad_input():
    with pytest.raises(ContractError):
        combine([], CFG)
    with pytest.raises(ContractError):
        combine(_probs(np.zeros((4, 4), int)), CFG)
    triples = [(0, c, np.full(9, 1 / 9)) for c in range(8)]
    with pytest.raises(ContractError):
        combine(triples[:-1] + [(0, 6, np.full(9, 1 / 9))], CFG)


@settings(max_examples=40, deadline=None)
@given(
    votes=st.lists(st.lists(st.integers(0, 8), min_size=8, max_size=8), min_size=1, max_size=4),
    order_seed=st.integers(0, 10**6),
)
def test_combine_is_arrival_order_invariant(votes, order_seed):
    probs = _probs(votes)
    triples = [(s, c, probs[s, c]) for s in range(probs.shape[0]) for c in range(8)]
    perm = np.random.default_rng(order_seed).permutation(len(triples))
    a = combine(probs, CFG)
    b = combine([triples[i] for i in perm], CFG)
    np.testing.assert_array_equal(a.chunk_classes, b.chunk_classes)
    assert a.located_subcarrier == b.located_subcarrier
    # report invariant: located subcarrier is the lowest occupied one
    assert a.located_subcarrier == (a.occupied[0] if a.occupied else None)


@pytest.fixture(scope="module")
def fresh_model():
    return build_reference_model(32, 9, seed=3)


def test_classify_batch_properties(rng, fresh_model):
    chunks = random_iq(rng, 256).reshape(8, 32)
    probs = classify_batch(chunks, fresh_model)
    assert probs.shape == (8, 9)
    assert np.all(np.abs(probs.sum(axis=1) - 1) <= 1e-6)
    # identical chunks give identical verdicts
    same = classify_batch(np.repeat(chunks[:1], 8, axis=0), fresh_model)
    assert (same == same[0]).all()
    # single-chunk batch equals the matching row, bit for bit
    for i in range(8):
        np.testing.assert_array_equal(classify_batch(chunks[i:i + 1], fresh_model)[0], probs[i])


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_classify_batch_permutation_equivariant(seed, fresh_model):
    r = np.random.default_rng(seed)
    chunks = random_iq(r, 256).reshape(8, 32)
    perm = r.permutation(8)
    np.testing.assert_array_equal(classify_batch(chunks[perm], fresh_model),
                                  classify_batch(chunks, fresh_model)[perm])


def test_classify_batch_shape_mismatch(fresh_model):
    with pytest.raises(ContractError):
        classify_batch(np.zeros((4, 64), complex), fresh_model)


def test_classify_independent_of_parallelism(rng, fresh_model):
    chunks = random_iq(rng, 256).reshape(8, 32)
    batched = classify_batch(chunks, fresh_model)
    out = [None] * 8

    def work(i):
        out[i] = classify_batch(chunks[i:i + 1], fresh_model)[0]

    threads = [threading.Thread(target=work, args=(i,)) for i in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    np.testing.assert_array_equal(np.stack(out), batched)


def test_sense_capture_shape_contract(fresh_model):
    with pytest.raises(ContractError):
        sense_capture(np.zeros(1024, complex), fresh_model, CFG.with_g(4))


def test_all_zero_chunk_is_clean(fullband_model):
    probs = classify_batch(np.zeros((1, 32), complex), fullband_model)
    assert probs.argmax() == 8


@pytest.mark.parametrize("k", [-26, -21, -12, -7, 7, 8, 21, 26])
def test_end_to_end_noiseless_tone(fullband_model, k):
    ofdm = OfdmConfig()
    iq = synthesize_capture(ofdm, 1024, InterferenceSpec(k, power_db_rel=15.0),
                            ChannelSpec(snr_db=np.inf), seed=100 + k)
    report = sense_capture(iq, fullband_model, CFG, capture_id=1)
    assert report.located_subcarrier == ofdm.position(k)
    assert report.occupied == [ofdm.position(k)]


def test_report_writer_formats():
    votes = np.full((4, 8), 8)
    votes[:, 5] = 3
    report = combine(_probs(votes), CFG, capture_id=9)
    report.latency_us = 12.5
    buf = io.StringIO()
    ReportWriter(buf).write(report)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "capture_id,located_subcarrier,chunk_argmax,latency_us"
    assert lines[1] == "9,43,8;8;8;8;8;3;8;8,12.500"
    buf = io.StringIO()
    ReportWriter(buf, "jsonl").write(report)
    doc = json.loads(buf.getvalue())
    assert doc["located_subcarrier"] == 43 and doc["occupied"] == [43]
