import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from cesim.channel import SeedSpec, sample_channel, sample_symbol_batch, sample_symbols
from cesim.model import Dimensions


def draws(L, count=100_000, seed=11):
    # one user, many antennas: count entries per tap
    return sample_channel(Dimensions(count, 1, L, 1), SeedSpec(seed)).taps[0]


def within_3se(samples, mean):
    se = np.std(samples, ddof=1) / np.sqrt(samples.size)
    return abs(np.mean(samples) - mean) <= 3 * se


def test_unit_variance_single_tap():
    power = np.abs(draws(1)[:, 0]) ** 2
    assert within_3se(power, 1.0)


def test_uniform_power_delay_profile():
    taps = draws(4)
    powers = np.abs(taps) ** 2
    for l in range(4):
        assert within_3se(powers[:, l], 0.25)
    assert np.mean(powers.sum(axis=1)) == pytest.approx(1.0, abs=0.02)


def test_real_and_imaginary_parts_balanced():
    h = draws(2)[:, 1]
    assert np.var(h.real) == pytest.approx(0.25, rel=0.03)
    assert np.var(h.imag) == pytest.approx(0.25, rel=0.03)
    assert abs(np.mean(h.real * h.imag)) < 4 / np.sqrt(h.size)


def test_symbols_zero_mean_unit_power():
    u = sample_symbols(Dimensions(4, 4, 1, 25_000), SeedSpec(3)).symbols.ravel()
    assert within_3se(u.real, 0.0) and within_3se(u.imag, 0.0)
    assert within_3se(np.abs(u) ** 2, 1.0)


def test_symbol_frame_energy_argument():
    frame = sample_symbols(Dimensions(3, 3, 1, 4), SeedSpec(1), energy=2.5)
    np.testing.assert_array_equal(frame.energies, [2.5, 2.5, 2.5])


def test_cross_correlation_between_taps_and_users():
    h = sample_channel(Dimensions(50_000, 2, 2, 1), SeedSpec(5)).taps
    n = h.shape[1]
    bound = 4 / np.sqrt(n)
    assert abs(np.mean(h[0, :, 0] * np.conj(h[0, :, 1]))) / 0.5 < bound
    assert abs(np.mean(h[0, :, 0] * np.conj(h[1, :, 0]))) / 0.5 < bound


def test_phase_is_uniform():
    phase = np.angle(draws(1)[:, 0])
    counts, _ = np.histogram(phase, bins=16, range=(-np.pi, np.pi))
    assert stats.chisquare(counts).pvalue > 1e-3


def test_seed_spec_range_checks():
    with pytest.raises(ValueError):
        SeedSpec(-1)
    with pytest.raises(ValueError):
        SeedSpec(0, 2**64)


def test_task_streams_differ():
    a = SeedSpec.for_task(9, "channel", 0)
    b = SeedSpec.for_task(9, "channel", 1)
    assert a.stream_id != b.stream_id
    assert a == SeedSpec.for_task(9, "channel", 0)


def test_batch_matches_repeated_shape():
    d = Dimensions(3, 3, 1, 5)
    batch = sample_symbol_batch(d, SeedSpec(4, 8), 6)
    assert batch.shape == (6, 3, 5)
    np.testing.assert_array_equal(batch, sample_symbol_batch(d, SeedSpec(4, 8), 6))


@given(st.integers(0, 2**64 - 1), st.integers(0, 2**64 - 1))
def test_same_seed_bit_identical(master, stream):
    d = Dimensions(3, 2, 2, 4)
    seed = SeedSpec(master, stream)
    np.testing.assert_array_equal(sample_channel(d, seed).taps, sample_channel(d, seed).taps)
    np.testing.assert_array_equal(sample_symbols(d, seed).symbols, sample_symbols(d, seed).symbols)


def test_large_stream_ids_stay_distinct():
    d = Dimensions(2, 1, 1, 3)
    top = 2**64 - 1
    a = sample_channel(d, SeedSpec(top, top)).taps
    b = sample_channel(d, SeedSpec(top, top - 1)).taps
    c = sample_channel(d, SeedSpec(top, 0)).taps
    assert not np.array_equal(a, b) and not np.array_equal(a, c)
