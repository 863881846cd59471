import json

import numpy as np
import pytest
from scipy import sparse
from scipy.sparse.linalg import expm_multiply

from bdsym import _quad, twod
from bdsym.kernels import p_bilateral_poisson
from bdsym.rates import ModelError, PlaneModel


def forward_solve(model, k, t, half=14):
    """Transient law of the plane walk on a box, by the sparse matrix exponential."""
    side = 2 * half + 1
    idx = lambda a, b: (a + half) * side + (b + half)  # noqa: E731
    rows, cols, vals = [], [], []
    total = model.lam1 + model.lam2 + model.mu1 + model.mu2
    for a in range(-half, half + 1):
        for b in range(-half, half + 1):
            i = idx(a, b)
            rows.append(i), cols.append(i), vals.append(-total)
            for (da, db), rate in (((1, 0), model.lam1), ((0, 1), model.lam2),
                                   ((-1, 0), model.mu1), ((0, -1), model.mu2)):
                if -half <= a + da <= half and -half <= b + db <= half:
                    rows.append(i), cols.append(idx(a + da, b + db)), vals.append(rate)
    Q = sparse.csr_matrix((vals, (rows, cols)), shape=(side**2, side**2))
    p0 = np.zeros(side**2)
    p0[idx(*k)] = 1.0
    return expm_multiply(Q.T * t, p0).reshape(side, side), half


def test_product_form_against_forward_equations(plane_xi2):
    k, t = (1, -1), 0.6
    law, half = forward_solve(plane_xi2, k, t)
    for n in [(1, -1), (2, 0), (-1, 1), (3, -4), (0, 2)]:
        assert twod.p2d(plane_xi2, k, n, t) == pytest.approx(law[n[0] + half, n[1] + half], abs=1e-12)


def test_initial_condition_and_factorisation(plane_xi2):
    assert twod.p2d(plane_xi2, (1, 2), (1, 2), 0.0) == 1.0
    assert twod.p2d(plane_xi2, (1, 2), (1, 3), 0.0) == 0.0
    rng = np.random.default_rng(3)
    for _ in range(300):
        k = rng.integers(-5, 6, 2)
        n = rng.integers(-8, 9, 2)
        t = rng.uniform(0.01, 6)
        ref = p_bilateral_poisson(2, 1, k[0], n[0], t) * p_bilateral_poisson(1, 2, k[1], n[1], t)
        assert twod.p2d(plane_xi2, k, n, t) == pytest.approx(ref, rel=1e-12, abs=1e-300)


def test_mirror_relation_example(plane_xi2):
    k, n, t = (0, 0), (1, 0), 0.7
    lhs = twod.p2d(plane_xi2, twod.mirror(k, 0), twod.mirror(n, 0), t)
    rhs = plane_xi2.xi ** (n[1] - k[1] - n[0] + k[0]) * twod.p2d(plane_xi2, k, n, t)
    assert abs(lhs - rhs) <= 1e-15


def test_mirror_relation_fails_for_asymmetric_model():
    model = PlaneModel(2.0, 1.0, 1.0, 1.0)
    xi = model.lam1 / model.lam2
    k, n, t = (0, 0), (2, -1), 1.0
    lhs = twod.p2d(model, twod.mirror(k, 0), twod.mirror(n, 0), t)
    rhs = xi ** (n[1] - k[1] - n[0] + k[0]) * twod.p2d(model, k, n, t)
    assert abs(lhs - rhs) > 1e-3
    with pytest.raises(ModelError):
        twod.taboo2d(model, (0, -2), (0, -1), 0, 1.0)


def test_taboo_nonnegative_same_side():
    model = PlaneModel(1.0, 1.0, 1.0, 1.0)
    for t in (0.1, 1.0, 5.0):
        assert twod.taboo2d(model, (0, -2), (0, -1), 0, t) >= 0.0


def test_taboo_side_mismatch(plane_xi2):
    with pytest.raises(ValueError):
        twod.taboo2d(plane_xi2, (0, -2), (0, 1), 0, 1.0)


def crossed_mass(model, k, n, r, t, panels=60):
    """Sum over landing sites of int_0^t g(x, x+r, tau) P(n, t - tau | x, x+r) dtau."""
    sites = twod.diagonal_band(model, k, r, t)
    nodes, w = _quad.gauss_nodes(0.0, t, panels)
    g = twod.fpt2d_subdensity(model, k, r, sites, nodes)
    out = 0.0
    for j, x in enumerate(sites):
        out += np.dot(w, g[:, j] * twod.p2d(model, (x, x + r), n, t - nodes))
    return out


@pytest.mark.parametrize("n", [(0, -2), (1, -1), (2, 3), (-1, 0)])
def test_continuity_equation(plane_xi2, n):
    k, r, t = (0, -1), 0, 1.3
    total = twod.p2d(plane_xi2, k, n, t)
    crossed = crossed_mass(plane_xi2, k, n, r, t)
    side = np.sign(n[1] - n[0] - r)
    taboo = twod.taboo2d(plane_xi2, k, n, r, t) if side < 0 else 0.0
    assert abs(total - crossed - taboo) <= 1e-6


def test_crossing_density_symmetry(plane_xi2):
    ts = np.linspace(0.05, 8, 40)
    for k, r in [((0, -1), 0), ((2, -3), 1), ((0, 3), -1)]:
        mk = twod.mirror(k, r)
        lhs = twod.fpt2d_total(plane_xi2, mk, r, ts)
        rhs = plane_xi2.xi ** (k[0] + r - k[1]) * twod.fpt2d_total(plane_xi2, k, r, ts)
        assert np.allclose(lhs, rhs, rtol=1e-11, atol=1e-300)


def test_landing_site_sum_matches_projection(plane_xi2):
    ts = np.linspace(0.05, 10, 100)
    for k, r in [((0, -1), 0), ((3, 1), -4), ((0, 4), 2)]:
        sites = twod.diagonal_band(plane_xi2, k, r, float(ts.max()))
        summed = twod.fpt2d_subdensity(plane_xi2, k, r, sites, ts).sum(axis=1)
        d = abs(k[1] - k[0] - r)
        projected = d / ts * twod.projected_diagonal_probability(plane_xi2, k, r, ts)
        assert np.max(np.abs(summed - projected)) <= 1e-10


def test_crossing_probability_branches(plane_xi2):
    pi = twod.crossing_probability(plane_xi2, (0, -1), 0)
    assert (pi.branch, pi.pi) == ("power", 0.5)
    assert twod.crossing_probability(plane_xi2, (0, 1), 0).pi == 1.0
    flat = PlaneModel(0.7, 0.7, 0.7, 0.7)
    assert twod.crossing_probability(flat, (0, -3), 0).pi == 1.0
    assert twod.crossing_probability(flat, (0, 3), 0).pi == 1.0
    k, r = (1, -2), 0
    lhs = twod.crossing_probability(plane_xi2, twod.mirror(k, r), r).pi
    rhs = plane_xi2.xi ** (k[0] + r - k[1]) * twod.crossing_probability(plane_xi2, k, r).pi
    assert lhs == pytest.approx(rhs, rel=1e-15)
    assert json.loads(pi.to_json()) == {"branch": "power", "pi": 0.5, "xi": 2.0}


@pytest.mark.parametrize("k,expected", [((0, -1), 0.5), ((0, -3), 0.125), ((0, 2), 1.0)])
def test_crossing_probability_by_integration(plane_xi2, k, expected):
    body, tail = twod.crossing_probability_numeric(plane_xi2, k, 0)
    assert twod.crossing_probability(plane_xi2, k, 0).pi == expected
    assert body + tail == pytest.approx(expected, abs=1e-3)


def test_line_crossing_record(plane_xi2):
    res = twod.line_crossing(plane_xi2, (0, -1), 0, np.linspace(0.0, 2.0, 5))
    assert res.times[0] > 0  # t = 0 is dropped
    assert np.allclose(res.g.sum(axis=1), res.h, rtol=1e-12)
    assert res.h_csv().splitlines()[0] == "t,h_r"
    assert res.g_csv().splitlines()[0] == "t,x,g"
    assert 0.0 <= res.pi.pi <= 1.0


def test_start_on_line_rejected(plane_xi2):
    with pytest.raises(ValueError):
        twod.fpt2d_total(plane_xi2, (1, 1), 0, 1.0)
    with pytest.raises(ValueError):
        twod.fpt2d_total(plane_xi2, (0, -1), 0, 0.0)
