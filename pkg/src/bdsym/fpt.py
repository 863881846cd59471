"""First-passage-time densities and avoiding (taboo) transition probabilities.

Three kinds of routes are provided and cross-checked in the test suite:

* the renewal route, which solves the Volterra equation linking the FPT
  density to transition probabilities and works for any skip-free model;
* the symmetry routes, which write the density through the symmetry state
  as a difference of two transition probabilities;
* explicit Bessel or binomial series for the constant-rate, Ehrenfest and
  catastrophe examples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.interpolate import CubicSpline

from . import _quad
from ._io import csv_text
from .kernels import (DEFAULT_TOL, _as_times, _auto_window, _drift_factor, _j_range, _kmax,
                      image_series, transition_probability, uniformize)
from .rates import (Boundary, Family, ModelError, Preset, RateModel, SymmetryReport,
                    check_symmetry, weights)
from .special import order_cutoff, scaled_table

NEGATIVE_CLAMP = 1e-12


class AsymmetricModel(ModelError):
    def __init__(self, report: SymmetryReport):
        super().__init__(f"model is not symmetric: {report}")
        self.report = report


class GridTooCoarse(RuntimeError):
    def __init__(self, message, gap):
        super().__init__(message)
        self.gap = gap


@dataclass(frozen=True)
class FptDensity:
    """First-passage-time density g(t) from ``k`` to ``s`` on a time grid.

    ``cumulative`` integrates the density by the trapezoid rule from the
    first grid time.  ``eventual`` adds an exponential-tail extrapolation to
    the cumulative mass; it is an estimate and is labelled as such.
    """

    k: int
    s: int
    direction: str
    times: np.ndarray
    values: np.ndarray
    method: str
    currents: tuple[np.ndarray, np.ndarray] | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def cumulative(self) -> np.ndarray:
        steps = 0.5 * (self.values[1:] + self.values[:-1]) * np.diff(self.times)
        return np.concatenate([[0.0], np.cumsum(steps)])

    @property
    def eventual(self) -> float:
        n = self.times.size
        tail = _quad.exponential_tail(self.times[-max(2, n // 10):], self.values[-max(2, n // 10):])
        return float(self.cumulative[-1] + tail)

    def to_csv(self) -> str:
        return csv_text(("t", "value"), zip(self.times, _clamped(self.values)))


@dataclass(frozen=True)
class TabooGrid:
    """Avoiding transition probabilities p^<r>_{k,n}(t) for fixed k and r."""

    k: int
    r: int
    states: np.ndarray
    times: np.ndarray
    values: np.ndarray  # shape (len(times), len(states))
    side: str
    method: str
    diagnostics: dict = field(default_factory=dict)

    def column(self, n) -> np.ndarray:
        hit = np.flatnonzero(self.states == n)
        if not hit.size:
            raise KeyError(f"state {n} not on the grid")
        return self.values[:, hit[0]]

    def to_csv(self) -> str:
        rows = ((t, int(s), v) for j, t in enumerate(self.times)
                for s, v in zip(self.states, _clamped(self.values[j])))
        return csv_text(("t", "state", "value"), rows)


def _clamped(values):
    v = np.asarray(values, dtype=float)
    return np.where((v < 0) & (v >= -NEGATIVE_CLAMP), 0.0, v)


def _require(model: RateModel, family: Family):
    report = check_symmetry(model, family)
    if not report.satisfied:
        raise AsymmetricModel(report)


def _direction(k, s) -> str:
    if k == s:
        raise ValueError("start and target coincide")
    return "up" if k < s else "down"


def _columns(model: RateModel, k: int, ns, times, tol=DEFAULT_TOL) -> dict[int, np.ndarray]:
    """Several p_{k,n}(t) columns, sharing one uniformization when needed."""
    ns = [int(n) for n in ns]
    if model.preset in (Preset.CONSTANT_ABSORBING, Preset.EHRENFEST, Preset.CONSTANT_BILATERAL):
        try:
            return {n: transition_probability(model, k, n, times, tol, "closed") for n in ns}
        except ModelError:
            pass
    window = None
    if model.boundary is Boundary.BILATERAL:
        window = _auto_window(model, [k], float(np.max(times, initial=0.0)), extra=ns)
    grid = uniformize(model, k, times, tol, window=window)
    return {n: grid.column(n) for n in ns}


# -- renewal route --------------------------------------------------------------


def _volterra(rate, pa, kernel, h):
    """Product-trapezoid solution of g = rate (pa - g * kernel) on a uniform grid.

    ``kernel[0]`` must vanish (the kernel is a transition probability between
    distinct states), which makes every step explicit.
    """
    n = pa.size
    g = np.empty(n)
    g[0] = rate * pa[0]
    rev = kernel[::-1].copy()
    half = 0.5 * h * kernel
    for i in range(1, n):
        conv = half[i] * g[0] + h * np.dot(g[1:i], rev[n - i:n - 1])
        g[i] = rate * (pa[i] - conv)
    return g


def _convolve(g, p, h):
    full = np.convolve(g, p)[: g.size]
    return h * (full - 0.5 * (g[0] * p + g * p[0]))


def _renewal_setup(model: RateModel, k: int, s: int):
    if model.family is Family.CATASTROPHE:
        raise ModelError("catastrophe paths are not skip-free; use fpt_catastrophe")
    direction = _direction(k, s)
    if model.boundary is not Boundary.BILATERAL:
        N = model.N
        ok = (0 < k < s < N) if direction == "up" else (0 < s < k < N)
        if not ok:
            raise ValueError("need 0 < k < s < N (up) or 0 < s < k < N (down)")
    if direction == "up":
        return direction, s - 1, float(model.birth(s - 1))
    return direction, s + 1, float(model.death(s + 1))


def _renewal_levels(model, k, s, t_max, n_steps, tol, extra_states=()):
    """Fine-grid densities at two resolutions plus the probabilities they used."""
    direction, nb, rate = _renewal_setup(model, k, s)
    fine = np.linspace(0.0, t_max, 2 * n_steps + 1)
    needed = sorted({nb, *extra_states})
    starts = [k, s]
    window = None
    if model.boundary is Boundary.BILATERAL:
        window = _auto_window(model, starts, t_max, extra=needed)
    grids = uniformize(model, starts, fine, tol=1e-13, window=window)
    pk = {n: grids[0].column(n) for n in needed}
    ps = {n: grids[1].column(n) for n in needed}
    h = t_max / (2 * n_steps)
    g_fine = _volterra(rate, pk[nb], ps[nb], h)
    g_coarse = _volterra(rate, pk[nb][::2], ps[nb][::2], 2 * h)
    return direction, fine, g_fine, g_coarse, pk, ps


def _default_steps(times: np.ndarray) -> int:
    t_max = float(times.max())
    gaps = np.diff(times)
    gaps = gaps[gaps > 0]
    h = float(gaps.min()) if gaps.size else t_max / 1000
    h = min(h, t_max / 200)
    return max(16, int(math.ceil(t_max / h)))


def fpt_renewal(model: RateModel, k: int, s: int, times, tol: float = 1e-6,
                max_doublings: int = 6) -> FptDensity:
    """FPT density from the renewal (Volterra) equation.

    Solved by product trapezoid on a uniform grid from 0 to ``max(times)``
    with steps h and h/2; the step is halved until the two solutions differ
    by at most ``3 tol`` (so the h/2 solution is within ``tol``), and the
    Richardson combination of the two is interpolated onto ``times``.
    Raises :class:`GridTooCoarse` if that never happens.
    """
    times = _as_times(times)
    t_max = float(times.max())
    if t_max <= 0:
        raise ValueError("need a positive time horizon")
    n_steps = _default_steps(times)
    for _ in range(max_doublings + 1):
        direction, fine, g_fine, g_coarse, _, _ = _renewal_levels(model, k, s, t_max, n_steps, tol)
        gap = float(np.max(np.abs(g_fine[::2] - g_coarse)))
        if gap <= 3.0 * tol:
            break
        n_steps *= 2
    else:
        raise GridTooCoarse(f"Richardson gap {gap:.2e} still above {3 * tol:.2e}", gap)
    rich = (4.0 * g_fine[::2] - g_coarse) / 3.0
    values = CubicSpline(fine[::2], rich)(times)
    return FptDensity(k, s, direction, times, values, "renewal",
                      diagnostics={"richardson_gap": gap, "steps": n_steps})


def taboo_renewal(model: RateModel, k: int, n: int, r: int, times, tol: float = 1e-6,
                  max_doublings: int = 6) -> np.ndarray:
    """p^<r>_{k,n}(t) = p_{k,n}(t) - int_0^t g_{k,r}(u) p_{r,n}(t - u) du, renewal route."""
    times = _as_times(times)
    if (n - r) * (k - r) <= 0:
        raise ValueError("k and n must lie strictly on the same side of r")
    t_max = float(times.max())
    n_steps = _default_steps(times)
    for _ in range(max_doublings + 1):
        _, fine, g_fine, g_coarse, pk, ps = _renewal_levels(model, k, r, t_max, n_steps, tol, [n])
        h = fine[1]
        tab_fine = pk[n] - _convolve(g_fine, ps[n], h)
        tab_coarse = pk[n][::2] - _convolve(g_coarse, ps[n][::2], 2 * h)
        gap = float(np.max(np.abs(tab_fine[::2] - tab_coarse)))
        if gap <= 3.0 * tol:
            break
        n_steps *= 2
    else:
        raise GridTooCoarse(f"Richardson gap {gap:.2e} still above {3 * tol:.2e}", gap)
    rich = (4.0 * tab_fine[::2] - tab_coarse) / 3.0
    return CubicSpline(fine[::2], rich)(times)


# -- absorbing endpoints ----------------------------------------------------------


def _half(model: RateModel) -> int:
    if model.N % 2:
        raise ModelError("the symmetry state needs an even N")
    return model.N // 2


def fpt_symmetric_absorbing(model: RateModel, k: int, times, s: int | None = None,
                            tol: float = DEFAULT_TOL) -> FptDensity:
    """FPT density through the symmetry state s = N/2 of a symmetric absorbing model."""
    if model.boundary is not Boundary.ABSORBING:
        raise ModelError("expected an absorbing model")
    _require(model, Family.ABSORBING)
    half = _half(model)
    if s is not None and s != half:
        raise ValueError(f"the symmetry state is N/2 = {half}")
    s = half
    if not 0 < k < 2 * s or k == s:
        raise ValueError("need 0 < k < 2s, k != s")
    times = _as_times(times)
    p = _columns(model, k, [s - 1, s + 1], times, tol)
    up = model.lam[s - 1] * p[s - 1] - model.mu[s + 1] * p[s + 1]
    direction = _direction(k, s)
    values = up if direction == "up" else -up
    return FptDensity(k, s, direction, times, values, "symmetry")


def fpt_constant_closed(N: int, lam: float, mu: float, k: int, times) -> FptDensity:
    """Bessel series for the upward density of the constant-rate chain, N = 2s."""
    if N % 2:
        raise ValueError("N must be even")
    s = N // 2
    if not 0 < k < s:
        raise ValueError("need 0 < k < s")
    t = _as_times(times)
    js = _j_range([s - k, s + k], 4 * s, _kmax(t, lam, mu))
    m1 = s - k - 4 * s * js
    m2 = s + k - 4 * s * js
    series = image_series(t, lam * mu, np.concatenate([m1, m2]), np.concatenate([m1, -m2]))
    pos = t > 0
    values = np.empty(t.size)
    values[pos] = _drift_factor(t[pos], lam, mu, (s - k) / 2) * series[pos] / t[pos]
    values[~pos] = lam if k == s - 1 else 0.0
    return FptDensity(k, s, "up", t, values, "bessel-series")


def _side(k, n, r, lo, hi):
    if lo < k < r and lo < n < r:
        return "below"
    if r < k < hi and r < n < hi:
        return "above"
    raise ValueError(f"k={k} and n={n} must lie on the same side of {r}")


def taboo_symmetric_absorbing(model: RateModel, k: int, n, times, tol: float = DEFAULT_TOL) -> TabooGrid:
    """s-avoiding probabilities p_{k,n} - (x_k / x_s) p_{2s-k,n}, s = N/2."""
    if model.boundary is not Boundary.ABSORBING:
        raise ModelError("expected an absorbing model")
    _require(model, Family.ABSORBING)
    s = _half(model)
    times = _as_times(times)
    ns = [int(v) for v in np.atleast_1d(n)]
    sides = {_side(k, v, s, 0, 2 * s) for v in ns}
    x = weights(model).x
    direct = _columns(model, k, ns, times, tol)
    mirror = _columns(model, 2 * s - k, ns, times, tol)
    vals = np.column_stack([direct[v] - x[k] / x[s] * mirror[v] for v in ns])
    return TabooGrid(k, s, np.array(ns), times, _clamped(vals), sides.pop(), "symmetry")


def taboo_constant_closed(N: int, lam: float, mu: float, k: int, n: int, times) -> np.ndarray:
    """Four-image Bessel series for the s-avoiding probabilities, N = 2s."""
    if N % 2:
        raise ValueError("N must be even")
    s = N // 2
    _side(k, n, s, 0, N)
    t = _as_times(times)
    js = _j_range([n - k, n + k, n + k - 2 * s, n - k - 2 * s], 4 * s, _kmax(t, lam, mu))
    orders = np.concatenate([n - k - 4 * s * js, n + k - 4 * s * js,
                             n + k - 2 * s * (2 * js + 1), n - k - 2 * s * (2 * js + 1)])
    one = np.ones(js.size)
    coeffs = np.concatenate([one, -one, -one, one])
    return _drift_factor(t, lam, mu, (n - k) / 2) * image_series(t, lam * mu, orders, coeffs)


def hitting_probability(model: RateModel, k: int, s: int, lower: int | None = None) -> float:
    """Probability of ever hitting ``s`` before ``lower`` (default: state 0).

    Solves the tridiagonal harmonic system
    ``(lam_n + mu_n) h_n = lam_n h_{n+1} + mu_n h_{n-1}`` with ``h_lower = 0``
    and ``h_s = 1``.
    """
    lower = 0 if lower is None else lower
    if not lower < k < s:
        raise ValueError("need lower < k < s")
    n = np.arange(lower + 1, s)
    lam, mu = model.birth(n), model.death(n)
    size = n.size
    ab = np.zeros((3, size))
    ab[0, 1:] = -lam[:-1]
    ab[1] = lam + mu
    ab[2, :-1] = -mu[1:]
    rhs = np.zeros(size)
    rhs[-1] = lam[-1]
    h = linalg.solve_banded((1, 1), ab, rhs)
    return float(h[k - lower - 1])


# -- reflecting endpoints --------------------------------------------------------


def fpt_symmetric_reflecting(model: RateModel, k: int, times, tol: float = DEFAULT_TOL) -> FptDensity:
    """Upward density through s = N/2 for a symmetric reflecting model, 0 <= k < s."""
    if model.boundary is not Boundary.REFLECTING:
        raise ModelError("expected a reflecting model")
    _require(model, Family.REFLECTING)
    s = _half(model)
    if not 0 <= k < s:
        raise ValueError("need 0 <= k < s")
    times = _as_times(times)
    p = _columns(model, k, [s - 1, s + 1], times, tol)
    values = model.mu[s + 1] * (p[s - 1] - p[s + 1])
    return FptDensity(k, s, "up", times, values, "symmetry")


def taboo_reflecting(model: RateModel, k: int, n, times, tol: float = DEFAULT_TOL) -> TabooGrid:
    """s-avoiding probabilities of a symmetric reflecting model.

    Both mirror expressions, ``p_{k,n} - p_{2s-k,n}`` and ``p_{k,n} - p_{k,2s-n}``,
    are evaluated; their largest disagreement is kept as ``route_gap`` and
    anything above 1e-8 is an error.
    """
    if model.boundary is not Boundary.REFLECTING:
        raise ModelError("expected a reflecting model")
    _require(model, Family.REFLECTING)
    s = _half(model)
    times = _as_times(times)
    ns = [int(v) for v in np.atleast_1d(n)]
    sides = {_side(k, v, s, -1, 2 * s + 1) for v in ns}
    direct = _columns(model, k, ns + [2 * s - v for v in ns], times, tol)
    mirror = _columns(model, 2 * s - k, ns, times, tol)
    a = np.column_stack([direct[v] - mirror[v] for v in ns])
    b = np.column_stack([direct[v] - direct[2 * s - v] for v in ns])
    gap = float(np.max(np.abs(a - b)))
    if gap > 1e-8:
        raise ArithmeticError(f"reflecting taboo routes disagree by {gap:.2e}")
    return TabooGrid(k, s, np.array(ns), times, _clamped(a), sides.pop(), "symmetry",
                     {"route_gap": gap})


def fpt_ehrenfest_closed(s: int, alpha: float, k: int, times) -> FptDensity:
    """Binomial-sum FPT density through s for the Ehrenfest chain on {0..2s}."""
    if not 0 <= k < s:
        raise ValueError("need 0 <= k < s")
    t = _as_times(times)
    e = np.exp(-2.0 * alpha * t)
    minus, plus = (1.0 - e)[:, None], (1.0 + e)[:, None]
    j = np.arange(k + 1)
    ck = np.array([math.comb(k, int(v)) for v in j], dtype=float)
    c1 = np.array([_comb(2 * s - k, s - 1 - int(v)) for v in j])
    c2 = np.array([_comb(2 * s - k, s + 1 - int(v)) for v in j])
    first = c1 * minus ** (s - 1 + k - 2 * j) * plus ** (s + 1 - k + 2 * j)
    second = c2 * minus ** (s + 1 + k - 2 * j) * plus ** (s - 1 - k + 2 * j)
    values = alpha * (s + 1) / 2.0 ** (2 * s) * ((ck * (first - second)).sum(axis=1))
    return FptDensity(k, s, "up", t, values, "binomial-series")


def taboo_ehrenfest_closed(s: int, alpha: float, k: int, n: int, times) -> np.ndarray:
    """Binomial-sum s-avoiding probabilities for the Ehrenfest chain on {0..2s}."""
    _side(k, n, s, -1, 2 * s + 1)
    t = _as_times(times)
    e = np.exp(-2.0 * alpha * t)
    minus, plus = (1.0 - e)[:, None], (1.0 + e)[:, None]
    j1 = np.arange(max(0, n + k - 2 * s), min(n, k) + 1)
    c1 = np.array([_comb(k, int(v)) * _comb(2 * s - k, n - int(v)) for v in j1])
    first = (c1 * _pow(minus, n + k - 2 * j1) * _pow(plus, 2 * s - n - k + 2 * j1)).sum(axis=1)
    j2 = np.arange(max(0, n - k), min(n, 2 * s - k) + 1)
    c2 = np.array([_comb(2 * s - k, int(v)) * _comb(k, n - int(v)) for v in j2])
    second = (c2 * _pow(minus, n + 2 * s - k - 2 * j2) * _pow(plus, k - n + 2 * j2)).sum(axis=1)
    return (first - second) / 2.0 ** (2 * s)


def _comb(n, k) -> float:
    return float(math.comb(n, k)) if 0 <= k <= n else 0.0


def _pow(base, exps):
    # 0**0 = 1, matching the t -> 0 limit of the binomial sums
    return np.where(exps[None, :] == 0, 1.0, base ** exps[None, :])


# -- bilateral processes ------------------------------------------------------------


def _bilateral(model: RateModel):
    if model.boundary is not Boundary.BILATERAL:
        raise ModelError("expected a bilateral model")
    if model.center != 0:
        raise ModelError("FPT through 0 needs a model symmetric about 0")


def fpt_bilateral(model: RateModel, k: int, times, tol: float = DEFAULT_TOL) -> FptDensity:
    """FPT density through 0 of a symmetric bilateral model (no catastrophes)."""
    _bilateral(model)
    if model.alpha is not None:
        raise ModelError("use fpt_catastrophe for models with catastrophes")
    _require(model, Family.BILATERAL)
    if k == 0:
        raise ValueError("k must be nonzero")
    times = _as_times(times)
    p = _columns(model, k, [-1, 1], times, tol)
    mu1 = float(model.death(1))
    up = mu1 * (p[-1] - p[1])
    direction = _direction(k, 0)
    return FptDensity(k, 0, direction, times, up if direction == "up" else -up, "symmetry")


def taboo_bilateral(model: RateModel, k: int, n, times, tol: float = DEFAULT_TOL) -> TabooGrid:
    """0-avoiding probabilities p_{k,n} - p_{-k,n} (also valid with catastrophes)."""
    _bilateral(model)
    family = Family.CATASTROPHE if model.alpha is not None else Family.BILATERAL
    _require(model, family)
    times = _as_times(times)
    ns = [int(v) for v in np.atleast_1d(n)]
    big = 10**9
    sides = {_side(k, v, 0, -big, big) for v in ns}
    direct = _columns(model, k, ns, times, tol)
    mirror = _columns(model, -k, ns, times, tol)
    vals = np.column_stack([direct[v] - mirror[v] for v in ns])
    return TabooGrid(k, 0, np.array(ns), times, _clamped(vals), sides.pop(), "symmetry")


def fpt_catastrophe(model: RateModel, k: int, times, tol: float = DEFAULT_TOL) -> FptDensity:
    """FPT density through 0 under catastrophes, as a difference of probability currents.

    The currents into 0 from below and above are summed over the
    uniformization window; the window's leaked mass (times the largest
    catastrophe rate) is reported as ``tail_bound``.  The mirror density from
    ``-k`` is computed too and must agree to 1e-8.
    """
    _bilateral(model)
    if model.alpha is None:
        raise ModelError("model has no catastrophes")
    _require(model, Family.CATASTROPHE)
    if k == 0:
        raise ValueError("k must be nonzero")
    times = _as_times(times)
    grids = uniformize(model, [k, -k], times, tol)
    currents = []
    for grid in grids:
        states = grid.states
        alpha = model.with_window(grid.window).alpha
        below = states < 0
        above = states > 0
        h_plus = float(model.birth(-1)) * grid.column(-1) + grid.values[:, below] @ alpha[below]
        h_minus = float(model.death(1)) * grid.column(1) + grid.values[:, above] @ alpha[above]
        currents.append((h_plus, h_minus))
    (hp, hm), (mhp, mhm) = currents
    direction = _direction(k, 0)
    values = hp - hm if direction == "up" else hm - hp
    mirror = mhm - mhp if direction == "up" else mhp - mhm
    gap = float(np.max(np.abs(values - mirror)))
    if gap > 1e-8:
        raise ArithmeticError(f"catastrophe FPT mirror symmetry broken by {gap:.2e}")
    bound = max(g.tail_bound for g in grids) * float(np.max(model.alpha, initial=0.0))
    return FptDensity(k, 0, direction, times, values, "currents", currents=(hp, hm),
                      diagnostics={"mirror_gap": gap, "tail_bound": bound, "window": grids[0].window})


def catastrophe_series(lam: float, alpha: float, k: int, times) -> FptDensity:
    """Downward density through 0 for constant rates lam = mu and catastrophe rate alpha, k >= 1."""
    if k < 1:
        raise ValueError("need k >= 1")
    t = _as_times(times)
    x = 2.0 * lam * t
    kmax = int(math.ceil(float(order_cutoff(x.max(initial=0.0))))) + k + 1
    table = scaled_table(kmax, x)
    idx = lambda m: np.abs(m)  # noqa: E731
    j = np.arange(1, kmax - k + 1)
    walk = lam * (table[:, idx(k - 1)] - table[:, k + 1])
    jumps = (table[:, idx(k - j)] - table[:, k + j]).sum(axis=1)
    values = np.exp(-alpha * t) * (walk + alpha * jumps)
    return FptDensity(k, 0, "down", t, values, "bessel-series")


def taboo_catastrophe_series(lam: float, alpha: float, k: int, n: int, times) -> np.ndarray:
    """0-avoiding probability for constant rates lam = mu with catastrophes, k, n >= 1."""
    if k < 1 or n < 1:
        raise ValueError("need k, n >= 1")
    t = _as_times(times)
    x = 2.0 * lam * t
    table = scaled_table(n + k, x)
    return np.exp(-alpha * t) * (table[:, abs(n - k)] - table[:, n + k])


def eventual_mass(density, t_max: float, panels: int = 400) -> tuple[float, float]:
    """(integral of ``density`` over [0, t_max], exponential-tail estimate beyond)."""
    return _quad.mass_with_tail(density, t_max, panels)
