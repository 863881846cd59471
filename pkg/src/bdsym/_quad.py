"""Composite Gauss-Legendre integration and exponential tail extrapolation."""

from __future__ import annotations

import numpy as np

_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(20)


def gauss_nodes(a: float, b: float, panels: int = 200) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of a composite 20-point rule on [a, b]."""
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * _NODES[None, :]).ravel()
    weights = (half[:, None] * _WEIGHTS[None, :]).ravel()
    return nodes, weights


def integrate(fn, a: float, b: float, panels: int = 200) -> float:
    """Integral of a vectorised ``fn`` over [a, b]."""
    nodes, weights = gauss_nodes(a, b, panels)
    return float(np.dot(weights, fn(nodes)))


def exponential_tail(times: np.ndarray, values: np.ndarray) -> float:
    """Mass beyond ``times[-1]`` of a density decaying like A exp(-beta t).

    The decay rate is fitted by least squares on log(values); returns 0 when
    the density is not positive and decaying over the fitting window.
    """
    times = np.asarray(times, float)
    values = np.asarray(values, float)
    if values.size < 2 or np.any(values <= 0):
        return 0.0
    slope = np.polyfit(times, np.log(values), 1)[0]
    if slope >= 0:
        return float("inf")
    return float(values[-1] / -slope)


def mass_with_tail(fn, t_max: float, panels: int = 400) -> tuple[float, float]:
    """(integral over [0, t_max], extrapolated tail) for a vectorised density."""
    body = integrate(fn, 0.0, t_max, panels)
    fit_t = np.linspace(0.9 * t_max, t_max, 11)
    return body, exponential_tail(fit_t, fn(fit_t))
