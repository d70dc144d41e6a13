import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import binom

from mambaspike.encoders import EncoderConfig, delta_encode, encode, latency_encode, rate_encode

unit = st.floats(0.0, 1.0, allow_nan=False)


def crossing_oracle(sig, theta):
    """Per-step crossing counts from a scalar reference walk."""
    on = off = 0
    ref = sig[0]
    for v in sig[1:]:
        up = down = 0
        while v - ref >= theta:
            ref += theta
            up = 1
        while ref - v >= theta:
            ref -= theta
            down = 1
        on += up
        off += down
    return on, off


# -- rate ---------------------------------------------------------------------

@pytest.mark.parametrize("mode", ["deterministic", "poisson"])
def test_zero_input_never_spikes(mode):
    assert rate_encode(np.zeros(7), 20, mode, seed=3).sum() == 0


def test_full_input_fires_every_step():
    assert rate_encode(np.array([1.0]), 10).ravel().tolist() == [1.0] * 10


def test_poisson_count_seed_seven():
    n = rate_encode(np.array(0.3), 10_000, "poisson", seed=7).sum()
    assert 2850 <= n <= 3150
    lo, hi = binom.interval(0.9999, 10_000, 0.3)
    assert lo <= n <= hi


def test_poisson_is_seeded():
    x = np.full(50, 0.4)
    np.testing.assert_array_equal(rate_encode(x, 30, "poisson", 5), rate_encode(x, 30, "poisson", 5))
    assert not np.array_equal(rate_encode(x, 30, "poisson", 5), rate_encode(x, 30, "poisson", 6))


def test_deterministic_positions_follow_index_formula():
    s = rate_encode(np.array([0.3]), 10).ravel()
    assert np.flatnonzero(s).tolist() == [0, 3, 6]


def test_domain_error_without_clipping():
    with pytest.raises(ValueError):
        rate_encode(np.array([1.2]), 5, clip=False)
    with pytest.raises(ValueError):
        latency_encode(np.array([-0.1]), 5, clip=False)


@settings(max_examples=200)
@given(st.lists(unit, min_size=1, max_size=20), st.integers(1, 64))
def test_deterministic_count_is_rounded_rate(xs, T):
    x = np.array(xs)
    s = rate_encode(x, T)
    assert set(np.unique(s)) <= {0.0, 1.0}
    np.testing.assert_array_equal(s.sum(axis=0), np.floor(x * T + 0.5))


@settings(max_examples=200)
@given(unit, unit, st.integers(1, 64))
def test_rate_count_monotone(a, b, T):
    lo, hi = sorted((a, b))
    assert rate_encode(np.array([lo]), T).sum() <= rate_encode(np.array([hi]), T).sum()


# -- latency -----------------------------------------------------------------

def test_latency_examples():
    assert np.flatnonzero(latency_encode(np.array(1.0), 10)).tolist() == [0]
    assert latency_encode(np.array(0.0), 10).sum() == 0
    assert np.flatnonzero(latency_encode(np.array(0.5), 10)).tolist() == [5]


def test_latency_threshold():
    assert latency_encode(np.array([0.009]), 10, x_min=0.01).sum() == 0
    assert latency_encode(np.array([0.01]), 10, x_min=0.01).sum() == 1


@settings(max_examples=200)
@given(st.lists(unit, min_size=1, max_size=20), st.integers(1, 64))
def test_latency_at_most_one_spike(xs, T):
    s = latency_encode(np.array(xs), T)
    assert set(np.unique(s)) <= {0.0, 1.0}
    assert s.sum(axis=0).max() <= 1


@settings(max_examples=200)
@given(st.floats(0.01, 1.0), st.floats(0.01, 1.0), st.integers(1, 64))
def test_latency_monotone(a, b, T):
    lo, hi = sorted((a, b))
    t_lo = np.argmax(latency_encode(np.array(lo), T))
    t_hi = np.argmax(latency_encode(np.array(hi), T))
    assert t_lo >= t_hi


# -- delta --------------------------------------------------------------------

def test_constant_signal_is_silent():
    assert delta_encode(np.full((30, 3), 0.7), 0.1).sum() == 0


def test_ramp_gives_four_on_spikes():
    sig = np.linspace(0.0, 1.0, 100)
    s = delta_encode(sig, 0.25)
    assert s.shape == (100, 2)
    assert s[:, 1].sum() == 4 and s[:, 0].sum() == 0
    assert (s[:, 1].sum(), s[:, 0].sum()) == crossing_oracle(sig, 0.25)


def test_mirrored_signal_swaps_polarity(rng):
    sig = np.cumsum(rng.normal(size=200))
    a, b = delta_encode(sig, 0.3), delta_encode(-sig, 0.3)
    np.testing.assert_array_equal(a[:, 0], b[:, 1])
    np.testing.assert_array_equal(a[:, 1], b[:, 0])


def test_multiple_crossings_saturate_but_advance_reference():
    s = delta_encode(np.array([0.0, 1.0, 1.05, 1.1]), 0.25)
    assert s[:, 1].tolist() == [0, 1, 0, 0]


@settings(max_examples=200)
@given(st.lists(st.floats(-3, 3, allow_nan=False), min_size=2, max_size=60),
       st.floats(0.05, 1.0))
def test_delta_matches_oracle_and_variation_bound(xs, theta):
    sig = np.array(xs)
    s = delta_encode(sig, theta)
    assert set(np.unique(s)) <= {0.0, 1.0}
    assert (s[:, 1].sum(), s[:, 0].sum()) == crossing_oracle(sig, theta)
    tv = np.abs(np.diff(sig)).sum()
    assert s.sum() <= tv / theta + 1


def test_delta_rejects_non_positive_theta():
    with pytest.raises(ValueError):
        delta_encode(np.zeros(4), 0.0)


# -- config dispatch -------------------------------------------------------------

def test_encode_dispatch():
    x = np.array([0.2, 0.9])
    np.testing.assert_array_equal(encode(x, EncoderConfig("rate-deterministic", T=6)), rate_encode(x, 6))
    np.testing.assert_array_equal(encode(x, EncoderConfig("latency", T=6)), latency_encode(x, 6))
    np.testing.assert_array_equal(encode(x, EncoderConfig("rate-poisson", T=6, seed=4)),
                                  rate_encode(x, 6, "poisson", 4))


@pytest.mark.parametrize("kw", [dict(scheme="burst"), dict(T=0), dict(theta_delta=0.0),
                                dict(x_min_latency=0.0), dict(x_min_latency=1.5)])
def test_encoder_config_invariants(kw):
    with pytest.raises(ValueError):
        EncoderConfig(**kw).validate()
