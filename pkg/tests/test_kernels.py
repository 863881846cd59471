import math

import numpy as np
import pytest
from scipy.linalg import expm

from bdsym import kernels
from bdsym.kernels import (Generator, WindowTooSmall, p_bilateral_poisson, p_catastrophe_constant,
                           p_constant_absorbing, p_ehrenfest_reflecting, transition_grid, uniformize,
                           verify_quasi_symmetry)
from bdsym.rates import Family, RateModel, build_preset, weights
from bdsym.special import bessel_i

PRESETS = {
    "constant-absorbing": dict(N=12, lam=1.0, mu=0.5),
    "ehrenfest": dict(N=8, alpha=0.7),
    "quadratic-ehrenfest": dict(N=6, alpha=0.3),
    "sigmoidal": dict(lam=2.0, mu=1.0, c=1.0),
    "alternating-a": dict(lam=1.5, mu=0.5),
    "alternating-b": dict(lam=1.5, mu=0.5),
    "constant-bilateral": dict(lam=1.0, mu=0.6),
    "constant-catastrophe": dict(lam=1.0, mu=1.0, alpha=0.5),
}


@pytest.mark.parametrize("tag", sorted(PRESETS))
def test_generator_is_conservative(tag):
    model = build_preset(tag, **PRESETS[tag])
    Q = Generator.from_model(model).dense()
    assert np.all(Q - np.diag(np.diag(Q)) >= 0)
    rows = Q.sum(axis=1)
    if model.family in (Family.BILATERAL, Family.CATASTROPHE):
        rows = rows[1:-1]  # the window edges leak on purpose
    assert np.allclose(rows, 0.0, atol=1e-14)


@pytest.mark.parametrize("tag", ["constant-absorbing", "ehrenfest", "quadratic-ehrenfest"])
def test_uniformization_matches_expm(tag):
    model = build_preset(tag, **PRESETS[tag])
    Q = Generator.from_model(model).dense()
    times = [0.0, 0.3, 1.7, 6.0]
    grid = uniformize(model, 2, times, tol=1e-13)
    for j, t in enumerate(times):
        assert np.allclose(grid.values[j], expm(Q * t)[2], atol=1e-12)


@pytest.mark.parametrize("tag", sorted(PRESETS))
def test_initial_condition(tag):
    model = build_preset(tag, **PRESETS[tag])
    grid = uniformize(model, 1, [0.0])
    assert np.array_equal(grid.values[0], (grid.states == 1).astype(float))


def test_ehrenfest_rows_sum_to_one():
    model = build_preset("ehrenfest", N=20, alpha=1.0)
    grid = uniformize(model, 10, np.linspace(0, 5, 11), tol=1e-12)
    assert np.allclose(grid.values.sum(axis=1), 1.0, atol=1e-12)


def test_constant_bilateral_matches_uniformization_equal_rates():
    model = build_preset("constant-absorbing", N=20, lam=1.0, mu=1.0)
    grid = uniformize(model, 10, [1.0], tol=1e-13)
    for n in range(1, 20):
        assert abs(p_constant_absorbing(20, 1.0, 1.0, 10, n, 1.0) - grid.column(n)[0]) <= 1e-9


def test_constant_bilateral_oracle_point(absorbing_20):
    ref = uniformize(absorbing_20, 6, [1.0], tol=1e-13).column(10)[0]
    assert abs(p_constant_absorbing(20, 1.0, 0.5, 6, 10, 1.0) - ref) <= 1e-9


def test_constant_bilateral_reversibility_at_unit_ratio():
    for k, n in [(3, 17), (8, 12), (1, 19)]:
        a = p_constant_absorbing(20, 0.8, 0.8, k, n, 2.5)
        b = p_constant_absorbing(20, 0.8, 0.8, n, k, 2.5)
        assert a == pytest.approx(b, rel=1e-12)


def test_quasi_symmetry_with_weights(absorbing_20):
    x = weights(absorbing_20)
    for k, n, t in [(3, 5, 0.7), (12, 4, 2.0), (9, 10, 5.0)]:
        lhs = p_constant_absorbing(20, 1.0, 0.5, 20 - k, 20 - n, t)
        rhs = x.ratio(n, k) * p_constant_absorbing(20, 1.0, 0.5, k, n, t)
        assert abs(lhs - rhs) <= 1e-12


def test_ehrenfest_limits_and_symmetry():
    N = 10
    binom = np.array([math.comb(N, n) for n in range(N + 1)]) / 2**N
    for n in range(N + 1):
        assert p_ehrenfest_reflecting(N, 1.0, 3, n, 1e9) == pytest.approx(binom[n], abs=1e-15)
        assert p_ehrenfest_reflecting(N, 1.0, 3, n, 0.0) == (1.0 if n == 3 else 0.0)
    assert p_ehrenfest_reflecting(10, 1.0, 3, 7, 0.5) == pytest.approx(
        p_ehrenfest_reflecting(10, 1.0, 7, 3, 0.5), rel=1e-13)


def test_ehrenfest_closed_vs_uniformization():
    model = build_preset("ehrenfest", N=12, alpha=0.5)
    times = [0.1, 1.0, 4.0]
    grid = uniformize(model, 4, times, tol=1e-13)
    for n in range(13):
        assert np.allclose(p_ehrenfest_reflecting(12, 0.5, 4, n, times), grid.column(n), atol=1e-12)


def test_ehrenfest_log_space_branch_normalised():
    t = 0.3
    total = sum(p_ehrenfest_reflecting(800, 1.0, 100, n, t) for n in range(801))
    assert total == pytest.approx(1.0, abs=1e-10)


def test_bilateral_poisson():
    assert p_bilateral_poisson(1.0, 1.0, 0, 0, 0.0) == 1.0
    assert p_bilateral_poisson(1.0, 1.0, 0, 2, 0.0) == 0.0
    assert p_bilateral_poisson(1.0, 1.0, 0, 0, 1.0) == pytest.approx(math.exp(-2) * bessel_i(0, 2.0), rel=1e-14)
    total = sum(p_bilateral_poisson(1.3, 0.6, 2, n, 3.0) for n in range(-80, 85))
    assert total == pytest.approx(1.0, abs=1e-12)


def test_bilateral_closed_vs_uniformization():
    model = build_preset("constant-bilateral", lam=1.3, mu=0.6)
    times = [0.5, 2.0, 6.0]
    grid = uniformize(model, -2, times, tol=1e-12)
    for n in (-6, -2, 0, 3, 9):
        assert np.allclose(p_bilateral_poisson(1.3, 0.6, -2, n, times), grid.column(n), atol=1e-11)


def test_catastrophe_reduces_to_bilateral():
    times = np.array([0.0, 0.4, 2.0])
    for n in (-2, 0, 3):
        a = p_catastrophe_constant(1.0, 1.0, 0.0, 1, n, times)
        b = p_bilateral_poisson(1.0, 1.0, 1, n, times)
        assert np.array_equal(a, b)


def test_catastrophe_initial_condition():
    assert p_catastrophe_constant(1.0, 1.0, 0.5, 2, 2, 0.0) == 1.0
    assert p_catastrophe_constant(1.0, 1.0, 0.5, 2, 0, 0.0) == 0.0


def test_catastrophe_closed_vs_uniformization():
    model = build_preset("constant-catastrophe", lam=1.0, mu=1.0, alpha=0.5)
    ref = uniformize(model, 2, [0.8], tol=1e-12).column(-1)[0]
    assert abs(p_catastrophe_constant(1.0, 1.0, 0.5, 2, -1, 0.8) - ref) <= 1e-8


@pytest.mark.parametrize("tag", sorted(PRESETS))
def test_rows_are_probabilities(tag):
    model = build_preset(tag, **PRESETS[tag])
    grid = uniformize(model, 1, [0.5, 3.0], tol=1e-12)
    assert np.all(grid.values >= -1e-15) and np.all(grid.values <= 1 + 1e-12)
    assert np.all(np.abs(grid.values.sum(axis=1) - 1.0) <= max(grid.tail_bound, 1e-12) + 1e-12)


def test_absorbing_mass_balance(absorbing_20):
    times = np.linspace(0, 20, 41)
    grid = uniformize(absorbing_20, 7, times, tol=1e-12)
    assert np.allclose(grid.values.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(np.diff(grid.column(0)) >= -1e-15)
    assert np.all(np.diff(grid.column(20)) >= -1e-15)


def test_oracle_equivalence_lattice():
    for tag in ("constant-absorbing", "ehrenfest", "constant-bilateral", "constant-catastrophe"):
        model = build_preset(tag, **PRESETS[tag])
        lo, hi = (1, model.N - 1) if model.N else (-4, 4)
        times = [0.2, 1.0, 3.0]
        for k in (lo + 1, hi - 2):
            unif = uniformize(model, k, times, tol=1e-12)
            for n in range(lo, hi + 1, 2):
                closed = kernels.transition_probability(model, k, n, times, method="closed")
                assert np.max(np.abs(closed - unif.column(n))) <= 1e-8, (tag, k, n)


def test_quasi_symmetry_reports(absorbing_20):
    times = [0.1, 1.0, 5.0]
    g = uniformize(absorbing_20, 4, times, tol=1e-12)
    m = uniformize(absorbing_20, 16, times, tol=1e-12)
    report = verify_quasi_symmetry(g, m, Family.ABSORBING, weights(absorbing_20), tol=1e-11)
    assert report.satisfied and report.worst_residual <= 1e-11

    cat = build_preset("constant-catastrophe", lam=1.0, mu=1.0, alpha=0.4)
    a, b = uniformize(cat, [3, -3], times, tol=1e-12)
    assert verify_quasi_symmetry(a, b, Family.CATASTROPHE, tol=1e-11).satisfied

    sig = build_preset("sigmoidal", lam=2.0, mu=1.0, c=1.0)
    a, b = uniformize(sig, [2, -2], times, tol=1e-12)
    assert verify_quasi_symmetry(a, b, Family.BILATERAL, tol=1e-11).satisfied

    ehr = build_preset("ehrenfest", N=10, alpha=1.0)
    a, b = uniformize(ehr, [3, 7], times, tol=1e-12)
    assert verify_quasi_symmetry(a, b, Family.REFLECTING, tol=1e-11).satisfied


def test_quasi_symmetry_fails_for_violator():
    model = RateModel.absorbing([0, 1, 2, 1, 0], [0, 2, 1, 1, 0])
    times = [0.5, 1.0, 2.0]
    a, b = uniformize(model, [1, 3], times, tol=1e-12)
    report = verify_quasi_symmetry(a, b, Family.ABSORBING, weights(model), tol=1e-10)
    assert not report.satisfied and report.worst_residual > 1e-4


def test_grid_mismatch_rejected(absorbing_20):
    a = uniformize(absorbing_20, 4, [1.0])
    b = uniformize(absorbing_20, 16, [2.0])
    with pytest.raises(ValueError):
        verify_quasi_symmetry(a, b, Family.ABSORBING, weights(absorbing_20))


def test_custom_window_too_small():
    lam = np.ones(7)
    model = RateModel.bilateral(lam, lam, (-3, 3))
    with pytest.raises(WindowTooSmall) as info:
        uniformize(model, 0, [10.0], tol=1e-9)
    assert info.value.required_window[1] > 3


def test_auto_window_grows_for_presets():
    model = build_preset("constant-bilateral", lam=1.0, mu=1.0, window=(-2, 2))
    grid = uniformize(model, 0, [5.0], tol=1e-12)
    assert grid.window[1] > 2 and grid.tail_bound < 1e-12


def test_grid_csv_layout(absorbing_20):
    grid = transition_grid(absorbing_20, 10, [0.0, 1.0], states=[9, 10, 11])
    lines = grid.to_csv().splitlines()
    assert lines[0] == "t,state,probability,method"
    assert [ln.split(",")[:2] for ln in lines[1:]] == [
        ["0", "9"], ["0", "10"], ["0", "11"], ["1", "9"], ["1", "10"], ["1", "11"]]
    assert lines[2].split(",")[2] == "1"
