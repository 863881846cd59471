import numpy as np
import pytest

from bdsym import fpt
from bdsym.kernels import p_constant_absorbing, uniformize
from bdsym.rates import RateModel, build_preset, weights
from bdsym.special import scaled_table


@pytest.fixture
def fair_20():
    return build_preset("constant-absorbing", N=20, lam=1.0, mu=1.0)


def test_renewal_small_t_adjacent(fair_20):
    dens = fpt.fpt_renewal(fair_20, 9, 10, [0.0, 1e-3, 1e-2], tol=1e-8)
    assert dens.values[0] == pytest.approx(1.0, abs=1e-6)
    assert dens.values[1] == pytest.approx(1.0 - 2e-3, abs=1e-5)


def test_renewal_small_t_three_steps(fair_20):
    ts = np.linspace(0.0, 0.05, 11)[1:]
    dens = fpt.fpt_renewal(fair_20, 7, 10, ts, tol=1e-9)
    assert np.all(dens.values <= 1.0 * ts**2 + 1e-8)


def test_renewal_matches_symmetry_route(absorbing_20, fig_times):
    a = fpt.fpt_renewal(absorbing_20, 6, 10, fig_times)
    b = fpt.fpt_symmetric_absorbing(absorbing_20, 6, fig_times)
    assert np.max(np.abs(a.values - b.values)) <= 1e-6
    assert a.method == "renewal" and b.method == "symmetry"


def test_renewal_downward(absorbing_20):
    ts = np.linspace(0.02, 8, 200)
    a = fpt.fpt_renewal(absorbing_20, 14, 10, ts)
    b = fpt.fpt_symmetric_absorbing(absorbing_20, 14, ts)
    assert a.direction == b.direction == "down"
    assert np.max(np.abs(a.values - b.values)) <= 1e-6


def test_grid_too_coarse_reported(absorbing_20):
    with pytest.raises(fpt.GridTooCoarse) as info:
        fpt.fpt_renewal(absorbing_20, 6, 10, np.linspace(0, 10, 5), tol=1e-14, max_doublings=0)
    assert info.value.gap > 3e-14


@pytest.mark.parametrize("k", range(1, 10))
def test_gamblers_ruin_mass(fair_20, k):
    exact = fpt.hitting_probability(fair_20, k, 10)
    assert exact == pytest.approx(k / 10, abs=1e-13)
    body, tail = fpt.eventual_mass(lambda t: fpt.fpt_symmetric_absorbing(fair_20, k, t).values, 150.0)
    assert body + tail == pytest.approx(exact, abs=1e-3)


def test_hitting_probability_general_model():
    # biased walk: gambler's ruin with q/p = 2
    m = build_preset("constant-absorbing", N=20, lam=1.0, mu=2.0)
    r = 2.0
    for k in (1, 5, 9):
        exact = (1 - r**k) / (1 - r**10)
        assert fpt.hitting_probability(m, k, 10) == pytest.approx(exact, rel=1e-12)


def test_mirror_identity(absorbing_20):
    x = weights(absorbing_20).x
    ts = np.linspace(0.05, 6, 60)
    k, s = 13, 10
    down = fpt.fpt_symmetric_absorbing(absorbing_20, k, ts)
    up = fpt.fpt_symmetric_absorbing(absorbing_20, 20 - k, ts)
    assert np.allclose(up.values, x[s] / x[k] * down.values, rtol=1e-10, atol=1e-15)


def test_small_t_near_rate(absorbing_20):
    dens = fpt.fpt_symmetric_absorbing(absorbing_20, 9, [1e-6])
    assert dens.values[0] == pytest.approx(1.0, abs=1e-5)


def test_closed_series_matches_symmetry(absorbing_20, fig_times):
    for k in (6, 7, 8, 9):
        a = fpt.fpt_constant_closed(20, 1.0, 0.5, k, fig_times).values
        b = fpt.fpt_symmetric_absorbing(absorbing_20, k, fig_times).values
        assert np.max(np.abs(a - b)) <= 1e-9


def test_figure_1_ordering_and_shape():
    t_small = np.array([0.05])
    vals = [fpt.fpt_constant_closed(20, 1.0, 0.5, k, t_small).values[0] for k in (6, 7, 8, 9)]
    assert vals == sorted(vals)
    ts = np.linspace(0.01, 10, 1000)
    g = fpt.fpt_constant_closed(20, 1.0, 0.5, 9, ts).values
    # unimodal: decreasing from the start for the adjacent state
    assert np.all(np.diff(g) < 0)
    g6 = fpt.fpt_constant_closed(20, 1.0, 0.5, 6, ts).values
    peak = int(np.argmax(g6))
    assert 0 < peak < ts.size - 1
    assert np.all(np.diff(g6[:peak + 1]) > 0) and np.all(np.diff(g6[peak:]) < 0)


def test_taboo_absorbing_routes(absorbing_20):
    ts = np.linspace(0.0, 6.0, 61)
    grid = fpt.taboo_symmetric_absorbing(absorbing_20, 9, [7, 8, 9], ts)
    assert grid.side == "below"
    for n in (7, 8, 9):
        closed = fpt.taboo_constant_closed(20, 1.0, 0.5, 9, n, ts)
        assert np.max(np.abs(grid.column(n) - closed)) <= 1e-9
        renewal = fpt.taboo_renewal(absorbing_20, 9, n, 10, ts)
        assert np.max(np.abs(grid.column(n) - renewal)) <= 1e-6
    assert np.array_equal(grid.values[0], [0.0, 0.0, 1.0])


def test_taboo_bounded_by_free_probability(absorbing_20):
    ts = np.linspace(0.01, 6.0, 40)
    grid = fpt.taboo_symmetric_absorbing(absorbing_20, 12, [11, 14, 17], ts)
    assert grid.side == "above"
    for n in (11, 14, 17):
        free = p_constant_absorbing(20, 1.0, 0.5, 12, n, ts)
        assert np.all(grid.column(n) >= 0) and np.all(grid.column(n) <= free + 1e-15)


def test_taboo_side_mismatch(absorbing_20):
    with pytest.raises(ValueError):
        fpt.taboo_symmetric_absorbing(absorbing_20, 9, [12], [1.0])


def test_asymmetric_model_rejected():
    m = RateModel.absorbing([0, 1, 2, 1, 0], [0, 2, 1, 1, 0])
    with pytest.raises(fpt.AsymmetricModel) as info:
        fpt.fpt_symmetric_absorbing(m, 1, [1.0])
    assert not info.value.report.satisfied


def test_renewal_handles_asymmetric_model():
    m = RateModel.absorbing([0, 1, 2, 1, 0], [0, 2, 1, 1, 0])
    ts = np.linspace(0, 5, 51)
    dens = fpt.fpt_renewal(m, 1, 2, ts, tol=1e-8)
    # direct oracle: make state 2 absorbing and differentiate its occupation
    lam = np.array([0, 1, 0.0])
    mu = np.array([0, 2, 0.0])
    stopped = RateModel.absorbing(lam, mu)
    grid = uniformize(stopped, 1, ts, tol=1e-13)
    assert np.max(np.abs(dens.values - lam[1] * grid.column(1))) <= 1e-7


@pytest.mark.parametrize("alpha", [0.5, 1.0])
def test_reflecting_routes(alpha, fig_times):
    model = build_preset("ehrenfest", N=20, alpha=alpha)
    for k in (6, 7, 8, 9):
        a = fpt.fpt_symmetric_reflecting(model, k, fig_times).values
        b = fpt.fpt_ehrenfest_closed(10, alpha, k, fig_times).values
        assert np.max(np.abs(a - b)) <= 1e-10
    grid = fpt.taboo_reflecting(model, 9, [6, 7, 8, 9], fig_times)
    assert grid.diagnostics["route_gap"] <= 1e-8
    for n in (6, 7, 8, 9):
        ref = fpt.taboo_ehrenfest_closed(10, alpha, 9, n, fig_times)
        assert np.max(np.abs(grid.column(n) - ref)) <= 1e-10


def test_reflecting_hit_is_certain(ehrenfest_20):
    body, tail = fpt.eventual_mass(lambda t: fpt.fpt_symmetric_reflecting(ehrenfest_20, 4, t).values, 40.0)
    assert body + tail == pytest.approx(1.0, abs=1e-4)


def test_reflecting_renewal_quadratic():
    model = build_preset("quadratic-ehrenfest", N=10, alpha=0.2)
    ts = np.linspace(0.01, 3, 100)
    a = fpt.fpt_symmetric_reflecting(model, 3, ts).values
    b = fpt.fpt_renewal(model, 3, 5, ts).values
    assert np.max(np.abs(a - b)) <= 1e-6


def test_bilateral_constant_rates():
    model = build_preset("constant-bilateral", lam=0.8, mu=0.8)
    ts = np.linspace(0.05, 6, 80)
    for k in (1, 2, 4):
        down = fpt.fpt_bilateral(model, k, ts)
        x = 2 * 0.8 * ts
        table = scaled_table(k + 1, x)
        ref = 0.8 * (table[:, k - 1] - table[:, k + 1])
        assert down.direction == "down"
        assert np.max(np.abs(down.values - ref)) <= 1e-12
        up = fpt.fpt_bilateral(model, -k, ts)
        assert np.allclose(up.values, down.values, atol=1e-15)
        taboo = fpt.taboo_bilateral(model, k, [k + 1, 2 * k + 3], ts)
        for n in (k + 1, 2 * k + 3):
            t2 = scaled_table(n + k, x)
            assert np.max(np.abs(taboo.column(n) - (t2[:, n - k] - t2[:, n + k]))) <= 1e-12


def test_bilateral_general_presets_vs_renewal():
    ts = np.linspace(0.01, 3, 60)
    for tag, kw in [("sigmoidal", dict(lam=2.0, mu=1.0, c=1.0)), ("alternating-b", dict(lam=1.5, mu=0.5))]:
        model = build_preset(tag, **kw)
        a = fpt.fpt_bilateral(model, 2, ts).values
        b = fpt.fpt_renewal(model, 2, 0, ts).values
        assert np.max(np.abs(a - b)) <= 1e-6, tag
        assert np.all(a >= -1e-9)


@pytest.mark.parametrize("alpha", [0.5, 1.0])
def test_catastrophe_routes(alpha):
    model = build_preset("constant-catastrophe", lam=1.0, mu=1.0, alpha=alpha)
    ts = np.linspace(0.05, 5, 100)
    for k in (1, 2, 3):
        dens = fpt.fpt_catastrophe(model, k, ts)
        ref = fpt.catastrophe_series(1.0, alpha, k, ts)
        assert np.max(np.abs(dens.values - ref.values)) <= 1e-8
        assert dens.diagnostics["mirror_gap"] <= 1e-8
        mirrored = fpt.fpt_catastrophe(model, -k, ts)
        assert np.allclose(mirrored.values, dens.values, atol=1e-12)
        taboo = fpt.taboo_bilateral(model, k, [1, 4], ts)
        for n in (1, 4):
            assert np.max(np.abs(taboo.column(n) - fpt.taboo_catastrophe_series(1.0, alpha, k, n, ts))) <= 1e-8


def test_catastrophe_zero_rate_is_bilateral():
    ts = np.linspace(0.05, 5, 100)
    zero = build_preset("constant-catastrophe", lam=1.0, mu=1.0, alpha=0.0)
    plain = build_preset("constant-bilateral", lam=1.0, mu=1.0)
    for k in (1, 2, 3):
        a = fpt.fpt_catastrophe(zero, k, ts).values
        b = fpt.fpt_bilateral(plain, k, ts).values
        assert np.max(np.abs(a - b)) <= 1e-12


def test_catastrophe_renewal_refused():
    model = build_preset("constant-catastrophe", lam=1.0, mu=1.0, alpha=0.5)
    with pytest.raises(Exception):
        fpt.fpt_renewal(model, 2, 0, [1.0])


def test_density_invariants(absorbing_20, fig_times):
    dens = fpt.fpt_symmetric_absorbing(absorbing_20, 7, fig_times)
    assert np.all(dens.values >= -1e-9)
    cum = dens.cumulative
    assert np.all(np.diff(cum) >= -1e-15) and cum[-1] <= 1 + 1e-9


def test_csv_headers(absorbing_20):
    dens = fpt.fpt_symmetric_absorbing(absorbing_20, 7, [0.5, 1.0])
    assert dens.to_csv().splitlines()[0] == "t,value"
    grid = fpt.taboo_symmetric_absorbing(absorbing_20, 7, [6, 8], [0.5, 1.0])
    assert grid.to_csv().splitlines()[0] == "t,state,value"
    assert len(grid.to_csv().splitlines()) == 5
