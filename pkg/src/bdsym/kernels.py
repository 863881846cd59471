"""Transition probabilities p_{k,n}(t).

Closed forms are provided for the constant-rate absorbing chain, the
Ehrenfest chain, the bilateral Poisson walk and the constant-rate bilateral
walk with catastrophes.  :func:`uniformize` solves the forward equations of
any :class:`~bdsym.rates.RateModel` and serves as the general oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, sparse, stats

from ._io import csv_text
from .rates import Boundary, Family, ModelError, Preset, RateModel, SymmetryReport, SymmetryWeights
from .special import bessel_ive, order_cutoff, scaled_table

DEFAULT_TOL = 1e-12


class WindowTooSmall(ModelError):
    """A bilateral window cannot hold the requested probability mass."""

    def __init__(self, message, required_window=None):
        super().__init__(message)
        self.required_window = required_window


class QuadratureError(RuntimeError):
    def __init__(self, message, achieved):
        super().__init__(message)
        self.achieved = achieved


# -- generator ----------------------------------------------------------------


@dataclass(frozen=True)
class Generator:
    """Conservative rate matrix of a model restricted to ``states``.

    For bilateral windows, jumps that would leave the window are dropped
    from the off-diagonals but kept on the diagonal, so probability leaks
    out at the edges instead of being reflected; the leak bounds the
    truncation error.
    """

    states: np.ndarray
    up: np.ndarray  # rate n -> n+1
    down: np.ndarray  # rate n -> n-1
    cat: np.ndarray  # rate n -> 0
    leaky: bool = False

    @classmethod
    def from_model(cls, model: RateModel) -> "Generator":
        return cls(model.states, model.lam.copy(), model.mu.copy(),
                   np.zeros(model.lam.size) if model.alpha is None else model.alpha.copy(),
                   leaky=model.boundary is Boundary.BILATERAL)

    @property
    def exit_rates(self) -> np.ndarray:
        return self.up + self.down + self.cat

    @property
    def zero_index(self) -> int | None:
        hit = np.flatnonzero(self.states == 0)
        return int(hit[0]) if hit.size else None

    def matrix(self) -> sparse.csr_matrix:
        n = self.states.size
        rows, cols, vals = [], [], []
        idx = np.arange(n)
        rows += [idx[:-1], idx[1:], idx]
        cols += [idx[1:], idx[:-1], idx]
        vals += [self.up[:-1], self.down[1:], -self.exit_rates]
        z = self.zero_index
        if z is not None and np.any(self.cat):
            src = np.flatnonzero(self.cat)
            rows.append(src)
            cols.append(np.full(src.size, z))
            vals.append(self.cat[src])
        Q = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(n, n))
        return Q.tocsr()

    def dense(self) -> np.ndarray:
        return self.matrix().toarray()


# -- probability grids ----------------------------------------------------------


@dataclass(frozen=True)
class ProbabilityGrid:
    """p_{k,n}(t_j) for one start state over a state x time grid."""

    k: int
    states: np.ndarray
    times: np.ndarray
    values: np.ndarray  # shape (len(times), len(states))
    method: str
    window: tuple[int, int] | None = None
    tail_bound: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def column(self, n) -> np.ndarray:
        hit = np.flatnonzero(self.states == n)
        if not hit.size:
            raise KeyError(f"state {n} not on the grid")
        return self.values[:, hit[0]]

    def to_csv(self) -> str:
        rows = ((t, int(s), p, self.method)
                for j, t in enumerate(self.times)
                for s, p in zip(self.states, self.values[j]))
        return csv_text(("t", "state", "probability", "method"), rows)


def _as_times(times) -> np.ndarray:
    t = np.atleast_1d(np.asarray(times, dtype=float))
    if t.ndim != 1 or np.any(t < 0) or not np.all(np.isfinite(t)):
        raise ValueError("times must be finite and nonnegative")
    if np.any(np.diff(t) < 0):
        raise ValueError("times must be ascending")
    return t


# -- uniformization -------------------------------------------------------------


def poisson_weights(rate_times: np.ndarray, tol: float) -> np.ndarray:
    """Poisson pmf table w[j, m] truncated where the upper tail drops below tol."""
    top = float(rate_times.max(initial=0.0))
    M = int(stats.poisson.isf(tol, top)) + 2 if top > 0 else 1
    m = np.arange(M + 1)
    with np.errstate(divide="ignore"):
        logw = stats.poisson.logpmf(m[None, :], rate_times[:, None])
    w = np.exp(logw)
    w[rate_times == 0, :] = 0.0
    w[rate_times == 0, 0] = 1.0
    return w


def _propagate(gen: Generator, starts: np.ndarray, times: np.ndarray, tol: float) -> np.ndarray:
    """Uniformized transition rows; result shape (len(times), len(starts), n_states)."""
    Q = gen.matrix()
    rate = float(gen.exit_rates.max())
    nstates = gen.states.size
    V = np.zeros((len(starts), nstates))
    V[np.arange(len(starts)), starts] = 1.0
    if rate == 0.0:
        return np.broadcast_to(V, (times.size,) + V.shape).copy()
    PT = (sparse.identity(nstates, format="csr") + Q / rate).T.tocsr()
    w = poisson_weights(rate * times, tol)
    M = w.shape[1] - 1
    powers = np.empty((M + 1, nstates, len(starts)))
    cur = V.T.copy()
    powers[0] = cur
    for m in range(1, M + 1):
        cur = PT @ cur
        powers[m] = cur
    out = w @ powers.reshape(M + 1, -1)
    out = out.reshape(times.size, nstates, len(starts)).transpose(0, 2, 1)
    return np.clip(out, 0.0, 1.0)


def _auto_window(model: RateModel, k, t_max: float, extra=()) -> tuple[int, int]:
    rate = model.max_exit_rate
    if model.preset is not Preset.CUSTOM:
        lt = rate * t_max
        m = math.ceil(lt + 12.0 * math.sqrt(lt) + 20.0)
        reach = max([abs(int(v)) for v in np.atleast_1d(k)] + [abs(int(v)) for v in extra] + [0])
        return -(reach + m), reach + m
    return model.window


def uniformize(model: RateModel, k, times, tol: float = DEFAULT_TOL, window=None) -> ProbabilityGrid:
    """Solve the forward equations from start ``k`` by uniformization.

    ``k`` may also be a sequence of start states, in which case a list of
    grids is returned (computed together, sharing the matrix powers).

    Bilateral presets get a window ``[-W, W]`` covering ``k +- m`` with
    ``m = ceil(L t + 12 sqrt(L t) + 20)`` (``L`` the largest exit rate),
    doubled until the mass leaking through the window edges is below
    ``tol / 2``.  Custom bilateral models are confined to their own window
    and raise :class:`WindowTooSmall` when it is not wide enough.
    """
    if not 0 < tol < 1:
        raise ValueError("tol must lie in (0, 1)")
    times = _as_times(times)
    many = np.ndim(k) > 0
    ks = [int(v) for v in np.atleast_1d(k)]
    t_max = float(times.max(initial=0.0))

    if model.boundary is not Boundary.BILATERAL:
        lo, hi = model.support()
        if any(v < lo or v > hi for v in ks):
            raise ModelError(f"start state outside {lo}..{hi}")
        gen = Generator.from_model(model)
        rows = _propagate(gen, np.array(ks) - lo, times, tol)
        grids = [ProbabilityGrid(kk, gen.states, times, rows[:, i], "uniformization")
                 for i, kk in enumerate(ks)]
        return grids if many else grids[0]

    if window is None:
        window = _auto_window(model, ks, t_max)
    lo, hi = int(window[0]), int(window[1])
    while True:
        local = model.with_window((lo, hi))
        gen = Generator.from_model(local)
        if any(v < lo or v > hi for v in ks):
            raise WindowTooSmall("start state outside the window", (min(ks + [lo]), max(ks + [hi])))
        rows = _propagate(gen, np.array(ks) - lo, times, tol / 2)
        leak = float(np.max(1.0 - rows.sum(axis=2), initial=0.0))
        if leak < tol / 2:
            break
        grown = (2 * lo, 2 * hi)
        if model.preset is Preset.CUSTOM:
            raise WindowTooSmall(
                f"window {(lo, hi)} loses {leak:.2e} of probability mass; "
                f"grow it towards {grown}", grown)
        lo, hi = grown
    grids = [ProbabilityGrid(kk, gen.states, times, rows[:, i], "uniformization",
                             window=(lo, hi), tail_bound=max(leak, 0.0))
             for i, kk in enumerate(ks)]
    return grids if many else grids[0]


# -- closed forms -------------------------------------------------------------


def image_series(t, rate_product: float, orders: np.ndarray, coeffs: np.ndarray | None = None) -> np.ndarray:
    """sum_i coeffs[i] * exp(-x) I_{orders[i]}(x) with x = 2 t sqrt(rate_product).

    Orders beyond the Bessel cutoff at the largest ``t`` are dropped.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    x = 2.0 * t * math.sqrt(rate_product)
    kmax = int(math.ceil(float(order_cutoff(x.max(initial=0.0)))))
    orders = np.abs(np.asarray(orders, dtype=int))
    if coeffs is None:
        coeffs = np.ones(orders.size)
    keep = orders <= kmax
    table = scaled_table(kmax, x)
    return table[:, orders[keep]] @ np.asarray(coeffs, dtype=float)[keep]


def _j_range(offsets, period: int, kmax: int):
    lo = min(offsets) - kmax
    hi = max(offsets) + kmax
    return np.arange(math.floor(lo / period) - 1, math.ceil(hi / period) + 2)


def _kmax(t, lam, mu) -> int:
    x = 2.0 * float(np.max(t, initial=0.0)) * math.sqrt(lam * mu)
    return int(math.ceil(float(order_cutoff(x))))


def _drift_factor(t, lam, mu, power: float) -> np.ndarray:
    # exp(-(lam+mu) t) I(2 t sqrt(lam mu)) = exp(-(sqrt(lam)-sqrt(mu))^2 t) * scaled I
    t = np.asarray(t, dtype=float)
    return np.exp(power * (math.log(lam) - math.log(mu)) - (math.sqrt(lam) - math.sqrt(mu)) ** 2 * t)


def _scalar_or_array(t, out):
    return float(out[0]) if np.ndim(t) == 0 else out


def p_constant_absorbing(N: int, lam: float, mu: float, k: int, n: int, t):
    """Constant-rate chain on {0..N} absorbed at 0 and N, interior states only."""
    if not (1 <= k <= N - 1 and 1 <= n <= N - 1):
        raise ValueError("k and n must be interior states 1..N-1")
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    kmax = _kmax(tt, lam, mu)
    js = _j_range([n - k, n + k - 2 * N], 2 * N, kmax)
    orders = np.concatenate([n - k - 2 * js * N, n + k - 2 * (js + 1) * N])
    coeffs = np.concatenate([np.ones(js.size), -np.ones(js.size)])
    out = _drift_factor(tt, lam, mu, (n - k) / 2) * image_series(tt, lam * mu, orders, coeffs)
    return _scalar_or_array(t, out)


def p_ehrenfest_reflecting(N: int, alpha: float, k: int, n: int, t):
    """Ehrenfest chain on {0..N} with rates alpha (N-n) up and alpha n down."""
    if not (0 <= k <= N and 0 <= n <= N):
        raise ValueError("states must lie in 0..N")
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    e = np.exp(-2.0 * alpha * tt)
    js = np.arange(max(0, n + k - N), min(n, k) + 1)
    a = n + k - 2 * js  # power of (1 - e)
    b = N - a  # power of (1 + e)
    if N <= 500:
        binom = np.array([math.comb(k, int(j)) * math.comb(N - k, n - int(j)) for j in js], dtype=float)
        terms = binom[None, :] * (1.0 - e)[:, None] ** a * (1.0 + e)[:, None] ** b
        out = terms.sum(axis=1) / 2.0 ** N
    else:
        logb = np.array([_logcomb(k, int(j)) + _logcomb(N - k, n - int(j)) for j in js])
        with np.errstate(divide="ignore", invalid="ignore"):
            lm = np.where(a[None, :] == 0, 0.0, a[None, :] * np.log1p(-e)[:, None])
        logt = logb[None, :] + lm + b[None, :] * np.log1p(e)[:, None] - N * math.log(2.0)
        peak = logt.max(axis=1, keepdims=True)
        out = np.exp(peak[:, 0]) * np.exp(logt - peak).sum(axis=1)
    return _scalar_or_array(t, out)


def _logcomb(n, k):
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def p_bilateral_poisson(lam: float, mu: float, k: int, n: int, t):
    """Bilateral Poisson walk: (lam/mu)^((n-k)/2) I_{n-k}(2 sqrt(lam mu) t) e^{-(lam+mu)t}."""
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    m = abs(n - k)
    x = 2.0 * tt * math.sqrt(lam * mu)
    scaled = scaled_table(m, x)[:, m]
    out = _drift_factor(tt, lam, mu, (n - k) / 2) * scaled
    return _scalar_or_array(t, out)


def p_catastrophe_constant(lam: float, mu: float, alpha: float, k: int, n: int, t, *, epsabs=1e-12):
    """Constant-rate bilateral walk with catastrophes at rate alpha into 0.

    The time integral is computed by adaptive Gauss-Kronrod quadrature;
    :class:`QuadratureError` is raised when the achieved error exceeds 1e-10.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    direct = np.exp(-alpha * tt) * p_bilateral_poisson(lam, mu, k, n, tt)
    if alpha == 0:
        return _scalar_or_array(t, direct)
    root = math.sqrt(lam * mu)
    gap = (math.sqrt(lam) - math.sqrt(mu)) ** 2 + alpha
    pref = alpha * math.exp(n / 2 * (math.log(lam) - math.log(mu)))

    def integrand(tau):
        return math.exp(-gap * tau) * bessel_ive(n, 2.0 * root * tau)

    out = np.empty(tt.size)
    for i, ti in enumerate(tt):
        if ti == 0:
            out[i] = direct[i]
            continue
        val, err = integrate.quad(integrand, 0.0, float(ti), epsabs=epsabs, epsrel=1e-12, limit=200)
        if pref * err > 1e-10:
            raise QuadratureError(f"catastrophe integral error {pref * err:.2e} > 1e-10", pref * err)
        out[i] = direct[i] + pref * val
    return _scalar_or_array(t, out)


# -- dispatch -----------------------------------------------------------------


def has_closed_form(model: RateModel) -> bool:
    return model.preset in (Preset.CONSTANT_ABSORBING, Preset.EHRENFEST,
                            Preset.CONSTANT_BILATERAL, Preset.CONSTANT_CATASTROPHE)


def transition_probability(model: RateModel, k: int, n: int, times, tol: float = DEFAULT_TOL,
                           method: str = "auto") -> np.ndarray:
    """p_{k,n}(t) on ``times``; closed form when the preset has one, else uniformization."""
    times = _as_times(times)
    prm = model.params
    if method in ("auto", "closed"):
        if model.preset is Preset.CONSTANT_ABSORBING and 1 <= k < model.N and 1 <= n < model.N:
            return p_constant_absorbing(model.N, prm["lam"], prm["mu"], k, n, times)
        if model.preset is Preset.EHRENFEST:
            return p_ehrenfest_reflecting(model.N, prm["alpha"], k, n, times)
        if model.preset is Preset.CONSTANT_BILATERAL:
            return p_bilateral_poisson(prm["lam"], prm["mu"], k, n, times)
        if model.preset is Preset.CONSTANT_CATASTROPHE:
            return p_catastrophe_constant(prm["lam"], prm["mu"], prm["alpha"], k, n, times)
        if method == "closed":
            raise ModelError(f"no closed form for {model.preset.value} at k={k}, n={n}")
    window = None
    if model.boundary is Boundary.BILATERAL:
        window = _auto_window(model, [k], float(times.max(initial=0.0)), extra=[n])
    grid = uniformize(model, k, times, tol, window=window)
    return grid.column(n)


def transition_grid(model: RateModel, k: int, times, states=None, tol: float = DEFAULT_TOL,
                    method: str = "auto") -> ProbabilityGrid:
    """ProbabilityGrid over ``states`` (default: the whole support or the auto window)."""
    times = _as_times(times)
    use_closed = method == "closed" or (method == "auto" and has_closed_form(model)
                                        and model.preset is not Preset.CONSTANT_CATASTROPHE)
    if states is None:
        if model.boundary is Boundary.BILATERAL:
            if use_closed:
                lo, hi = _auto_window(model, [k], float(times.max(initial=0.0)))
                states = np.arange(lo, hi + 1)
            else:
                grid = uniformize(model, k, times, tol)
                return grid
        else:
            states = model.states
    states = np.asarray(states, dtype=int)
    if use_closed and model.preset is Preset.CONSTANT_ABSORBING and (
            k in (0, model.N) or np.any((states == 0) | (states == model.N))):
        use_closed = False
    if use_closed:
        values = np.column_stack([transition_probability(model, k, int(n), times, tol, "closed")
                                  for n in states])
        return ProbabilityGrid(k, states, times, values, "closed-form")
    grid = uniformize(model, k, times, tol)
    cols = np.column_stack([grid.column(int(n)) if n in grid.states else np.zeros(times.size)
                            for n in states])
    return ProbabilityGrid(k, states, times, cols, "uniformization", grid.window, grid.tail_bound)


# -- quasi-symmetry at the probability level --------------------------------------


def verify_quasi_symmetry(grid: ProbabilityGrid, mirror: ProbabilityGrid, family: Family | str,
                          weights: SymmetryWeights | None = None, tol: float = 1e-10) -> SymmetryReport:
    """Worst residual of the mirror identity linking ``grid`` and ``mirror``.

    * absorbing: ``p_{N-k,N-n}(t) = (x_n / x_k) p_{k,n}(t)`` (needs ``weights``);
    * reflecting: ``p_{N-k,N-n}(t) = p_{k,n}(t)``;
    * bilateral / catastrophe: ``p_{-k,-n}(t) = p_{k,n}(t)``.
    """
    family = Family(family)
    if grid.times.shape != mirror.times.shape or np.any(grid.times != mirror.times):
        raise ValueError("grids must share the time grid")
    if family in (Family.ABSORBING, Family.REFLECTING):
        if weights is None and family is Family.ABSORBING:
            raise ValueError("absorbing quasi-symmetry needs the symmetry weights")
        N = int(max(grid.states.max(), mirror.states.max()))
        if mirror.k != N - grid.k:
            raise ValueError(f"mirror grid must start at {N - grid.k}")
        centre = N
    elif family in (Family.BILATERAL, Family.CATASTROPHE):
        if mirror.k != -grid.k:
            raise ValueError(f"mirror grid must start at {-grid.k}")
        centre = 0
    else:
        raise ValueError("twod grids are checked in bdsym.twod")
    ns = [int(n) for n in grid.states if (centre - n) in set(mirror.states.tolist())]
    if not ns:
        raise ValueError("grids share no mirrored states")
    lhs = np.column_stack([mirror.column(centre - n) for n in ns])
    rhs = np.column_stack([grid.column(n) for n in ns])
    if family is Family.ABSORBING:
        rhs = rhs * np.array([weights.ratio(n, grid.k) for n in ns])[None, :]
    resid = np.abs(lhs - rhs).max(axis=0)
    i = int(np.argmax(resid))
    worst = float(resid[i])
    ok = worst <= tol
    return SymmetryReport(family, ok, worst, None if ok else ns[i], tol)
