"""Two-dimensional constant-rate birth-death process and the lines x2 = x1 + r.

The coordinates move independently, so P(n, t | k) is a product of two
bilateral Poisson-walk factors.  Under lam1/lam2 = mu2/mu1 = xi the process
is quasi-symmetric with respect to every line x2 = x1 + r, which yields the
taboo probabilities, the first-crossing densities and the ultimate crossing
probability below.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import _quad
from ._io import csv_text
from .kernels import _as_times, p_bilateral_poisson
from .rates import Family, ModelError, PlaneModel, check_symmetry
from .special import scaled_table

NEGATIVE_CLAMP = 1e-12


def _require(model: PlaneModel):
    report = check_symmetry(model, Family.TWOD)
    if not report.satisfied:
        raise ModelError(f"plane model is not symmetric: {report}")


def _offset(k, r) -> int:
    d = k[1] - k[0] - r
    if d == 0:
        raise ValueError("the start point lies on the line")
    return d


def _jump_band(rate_sum: float, t_max: float) -> int:
    # displacement is bounded by the Poisson number of jumps
    lt = rate_sum * t_max
    return int(math.ceil(lt + 12.0 * math.sqrt(lt) + 20.0))


def _factor(lam, mu, disp: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Poisson-walk probabilities for every displacement in ``disp`` (columns) at ``t`` (rows)."""
    kmax = int(np.abs(disp).max())
    table = scaled_table(kmax, 2.0 * t * math.sqrt(lam * mu))
    tilt = np.exp(0.5 * disp * (math.log(lam) - math.log(mu)))
    decay = np.exp(-(math.sqrt(lam) - math.sqrt(mu)) ** 2 * t)
    return decay[:, None] * table[:, np.abs(disp)] * tilt[None, :]


def p2d(model: PlaneModel, k, n, t):
    """P(n, t | k) as the product of the two coordinate factors."""
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    out = (p_bilateral_poisson(model.lam1, model.mu1, k[0], n[0], tt)
           * p_bilateral_poisson(model.lam2, model.mu2, k[1], n[1], tt))
    return float(out[0]) if np.ndim(t) == 0 else out


def mirror(point, r):
    """Reflection of a lattice point in the line x2 = x1 + r."""
    return (point[1] - r, point[0] + r)


def taboo2d(model: PlaneModel, k, n, r: int, t):
    """Probability of reaching ``n`` at time t without touching x2 = x1 + r."""
    _require(model)
    below = n[1] < n[0] + r and k[1] < k[0] + r
    above = n[1] > n[0] + r and k[1] > k[0] + r
    if not (below or above):
        raise ValueError("k and n must lie strictly on the same side of the line")
    ratio = model.xi ** (n[0] + r - n[1])
    out = np.asarray(p2d(model, k, n, t)) - ratio * np.asarray(p2d(model, k, mirror(n, r), t))
    out = np.where((out < 0) & (out >= -NEGATIVE_CLAMP), 0.0, out)
    return float(out) if np.ndim(t) == 0 else out


def diagonal_band(model: PlaneModel, k, r: int, t_max: float) -> np.ndarray:
    """Landing sites x on the line that carry non-negligible probability by t_max."""
    b1 = _jump_band(model.lam1 + model.mu1, t_max)
    b2 = _jump_band(model.lam2 + model.mu2, t_max)
    lo = max(k[0] - b1, k[1] - r - b2)
    hi = min(k[0] + b1, k[1] - r + b2)
    return np.arange(lo, hi + 1)


def diagonal_probability(model: PlaneModel, k, r: int, t, sites=None) -> np.ndarray:
    """P{X2(t) = X1(t) + r} summed over the landing-site band; one value per time."""
    tt = _as_times(np.atleast_1d(t))
    x = diagonal_band(model, k, r, float(tt.max())) if sites is None else np.asarray(sites)
    return _site_probabilities(model, k, r, tt, x).sum(axis=1)


def projected_diagonal_probability(model: PlaneModel, k, r: int, t) -> np.ndarray:
    """Same quantity from the one-dimensional walk D = X2 - X1.

    D jumps up at rate lam2 + mu1 and down at rate lam1 + mu2, so this route
    avoids the landing-site sum entirely.
    """
    tt = _as_times(np.atleast_1d(t))
    return p_bilateral_poisson(model.lam2 + model.mu1, model.lam1 + model.mu2,
                               k[1] - k[0], r, tt)


def _site_probabilities(model, k, r, tt, x) -> np.ndarray:
    f1 = _factor(model.lam1, model.mu1, x - k[0], tt)
    f2 = _factor(model.lam2, model.mu2, x + r - k[1], tt)
    return f1 * f2


def fpt2d_subdensity(model: PlaneModel, k, r: int, x, t):
    """Density of first reaching the line at time t in site (x, x + r)."""
    _require(model)
    d = _offset(k, r)
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(tt <= 0):
        raise ValueError("the sub-density is defined for t > 0")
    sites = np.atleast_1d(np.asarray(x, dtype=int))
    out = abs(d) / tt[:, None] * _site_probabilities(model, k, r, tt, sites)
    if np.ndim(x) == 0:
        out = out[:, 0]
    if np.ndim(t) == 0:
        out = out[0]
    return float(out) if np.ndim(out) == 0 else out


def fpt2d_total(model: PlaneModel, k, r: int, t):
    """First-crossing density h_r(t | k) of the line, via the landing-site sum."""
    _require(model)
    d = _offset(k, r)
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(tt <= 0):
        raise ValueError("the crossing density is defined for t > 0")
    out = abs(d) / tt * diagonal_probability(model, k, r, tt)
    return float(out[0]) if np.ndim(t) == 0 else out


def t_min(model: PlaneModel) -> float:
    """Smallest time at which crossing densities are evaluated."""
    return 1e-6 / (model.lam1 + model.lam2 + model.mu1 + model.mu2)


@dataclass(frozen=True)
class CrossingProbability:
    xi: float
    branch: str
    pi: float

    def to_json(self) -> str:
        return json.dumps({"xi": self.xi, "branch": self.branch, "pi": self.pi}, sort_keys=True)


def crossing_probability(model: PlaneModel, k, r: int) -> CrossingProbability:
    """Probability of ever reaching the line x2 = x1 + r from k."""
    _require(model)
    d = _offset(k, r)
    xi = model.xi
    lhs, rhs = model.lam1 + model.mu2, model.mu1 + model.lam2
    if (lhs >= rhs and d < 0) or (lhs <= rhs and d > 0):
        return CrossingProbability(xi, "power", xi ** d)
    return CrossingProbability(xi, "certain", 1.0)


def crossing_probability_numeric(model: PlaneModel, k, r: int, panels: int = 400) -> tuple[float, float]:
    """(integral of h_r over [t_min, T], extrapolated tail) with T = 50 / smallest rate."""
    _require(model)
    _offset(k, r)
    horizon = 50.0 / min(model.lam1, model.lam2, model.mu1, model.mu2)
    start = t_min(model)
    body = _quad.integrate(lambda s: fpt2d_total(model, k, r, s), start, horizon, panels)
    fit = np.linspace(0.9 * horizon, horizon, 11)
    return body, _quad.exponential_tail(fit, fpt2d_total(model, k, r, fit))


@dataclass(frozen=True)
class LineCrossing:
    """Crossing densities through x2 = x1 + r on a time grid."""

    r: int
    k: tuple[int, int]
    times: np.ndarray
    h: np.ndarray
    sites: np.ndarray
    g: np.ndarray  # shape (len(times), len(sites))
    pi: CrossingProbability

    def h_csv(self) -> str:
        return csv_text(("t", "h_r"), zip(self.times, self.h))

    def g_csv(self) -> str:
        rows = ((t, int(x), v) for j, t in enumerate(self.times) for x, v in zip(self.sites, self.g[j]))
        return csv_text(("t", "x", "g"), rows)


def line_crossing(model: PlaneModel, k, r: int, times) -> LineCrossing:
    """h_r, per-site sub-densities and pi_r; times below :func:`t_min` are dropped."""
    _require(model)
    tt = _as_times(times)
    tt = tt[tt >= t_min(model)]
    if tt.size == 0:
        raise ValueError("no grid time above t_min")
    sites = diagonal_band(model, k, r, float(tt.max()))
    g = fpt2d_subdensity(model, k, r, sites, tt)
    h = fpt2d_total(model, k, r, tt)
    return LineCrossing(r, tuple(k), tt, h, sites, g, crossing_probability(model, k, r))
