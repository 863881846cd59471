import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special as sp

from bdsym.special import (bessel_i, bessel_i_scaled_band, bessel_ive, order_cutoff,
                           scaled_table)


def series(k, x, terms=50):
    """Brute-force definition, summed in exact rationals then rounded."""
    from fractions import Fraction
    k = abs(k)
    half = Fraction(x) / 2
    total = sum(half ** (k + 2 * i) / (math.factorial(i) * math.factorial(k + i)) for i in range(terms))
    return float(total)


def test_values_at_zero():
    assert bessel_i(0, 0.0) == 1.0
    assert bessel_i(3, 0.0) == 0.0
    assert bessel_i_scaled_band((-2, 2), 0.0).tolist() == [0, 0, 1, 0, 0]


def test_series_oracle():
    assert bessel_i(1, 2.0) == pytest.approx(series(1, 2.0), rel=1e-12)
    for k in (0, 2, 5, 11):
        for x in (0.3, 4.0, 17.5):
            assert bessel_i(k, x) == pytest.approx(series(k, x, 120), rel=1e-12)


def test_band_matches_single_orders():
    band = bessel_i_scaled_band((0, 1), 2.0)
    assert band[0] == pytest.approx(math.exp(-2) * bessel_i(0, 2.0), rel=1e-12)
    assert band[1] == pytest.approx(math.exp(-2) * bessel_i(1, 2.0), rel=1e-12)


def test_band_is_symmetric():
    band = bessel_i_scaled_band((-40, 40), 5.0)
    assert np.array_equal(band, band[::-1])


@pytest.mark.parametrize("x", [0.01, 1.0, 29.9, 30.1, 250.0, 4000.0])
def test_against_scipy(x):
    ks = np.arange(0, 60)
    ours = bessel_i_scaled_band((0, 59), x)
    ref = sp.ive(ks, x)
    mask = ref > 1e-250
    assert np.allclose(ours[mask], ref[mask], rtol=1e-12, atol=0)


def test_table_matches_band():
    x = np.array([0.0, 0.5, 12.0, 80.0])
    table = scaled_table(20, x)
    for i, xi in enumerate(x):
        assert np.allclose(table[i], bessel_i_scaled_band((0, 20), xi), rtol=1e-13, atol=1e-300)


def test_overflow_signalled():
    with pytest.raises(OverflowError):
        bessel_i(0, 800.0)
    assert 0 < bessel_ive(0, 800.0) < 1


def test_negative_argument_rejected():
    with pytest.raises(ValueError):
        bessel_i(0, -1.0)


def test_poisson_walk_normalisation():
    x = 37.0
    K = int(math.ceil(order_cutoff(2 * x)))
    band = bessel_i_scaled_band((-K, K), 2 * x)
    assert abs(band.sum() - 1.0) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(k=st.integers(min_value=-300, max_value=300), x=st.floats(min_value=0.0, max_value=500.0))
def test_parity_and_range(k, x):
    a, b = bessel_ive(k, x), bessel_ive(-k, x)
    assert a == b
    assert 0.0 <= a <= 1.0


@settings(max_examples=200, deadline=None)
@given(k=st.integers(min_value=1, max_value=80), x=st.floats(min_value=0.05, max_value=300.0))
def test_recurrence_residual(k, x):
    band = bessel_i_scaled_band((k - 1, k + 1), x)
    lo, mid, hi = band
    if lo < 1e-280:
        return
    assert abs(lo - hi - 2 * k / x * mid) <= 1e-10 * lo


@settings(max_examples=100, deadline=None)
@given(k=st.integers(min_value=0, max_value=200), x=st.floats(min_value=0.0, max_value=2000.0))
def test_differential_against_scipy(k, x):
    ref = float(sp.ive(k, x))
    ours = bessel_ive(k, x)
    if ref < 1e-280:
        assert ours < 1e-270
    else:
        assert ours == pytest.approx(ref, rel=1e-11)
