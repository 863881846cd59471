r"""Modified Bessel functions of the first kind, integer order.

Everything downstream works with the exponentially scaled form
:math:`\tilde I_k(x) = e^{-x} I_k(x)`, which lies in ``[0, 1]`` and satisfies
:math:`\sum_{k\in\mathbb Z} \tilde I_k(x) = 1`.

Two independent evaluation routes are used:

* the power series, for single orders with ``x <= 30``;
* backward recurrence of the ratios :math:`I_k/I_{k-1}` (Miller's method in
  ratio form, so nothing overflows), normalised with the identity above.
  This gives a whole band of orders at once and is used for ``x > 30`` and
  for all batch evaluations.
"""

from __future__ import annotations

import math

import numpy as np

MAX_ORDER = 10**6
SERIES_MAX_X = 30.0


def order_cutoff(x) -> np.ndarray:
    """Largest order worth keeping at argument ``x``.

    Past ``x + 40 sqrt(x) + 40`` the scaled function is below ~1e-15 of its
    peak value.
    """
    x = np.asarray(x, dtype=float)
    return x + 40.0 * np.sqrt(x) + 40.0


def _check_order(order: int) -> int:
    order = int(order)
    if abs(order) > MAX_ORDER:
        raise ValueError(f"|order| {abs(order)} exceeds the configured maximum {MAX_ORDER}")
    return abs(order)


def _series_scaled(k: int, x: float) -> float:
    half = 0.5 * x
    if half == 0.0:
        # also catches subnormal x, where x / 2 underflows
        return 1.0 if k == 0 else 0.0
    q = half * half
    # leading term in log space; factorials overflow for large k
    term = math.exp(k * math.log(half) - math.lgamma(k + 1) - x)
    total = term
    i = 0
    while True:
        i += 1
        term *= q / (i * (k + i))
        total += term
        if term <= 1e-17 * total:
            return total


def _start_order(kmax: int, xmax: float) -> int:
    return int(max(kmax, math.ceil(xmax)) + math.ceil(40.0 * math.sqrt(xmax)) + 60)


def bessel_i_scaled_band(orders, x) -> np.ndarray:
    """``exp(-x) * I_k(x)`` for every ``k`` in a contiguous order range.

    Parameters
    ----------
    orders : range or (lo, hi) pair
        Contiguous integer orders, ``hi`` inclusive when a pair is given.
    x : float or array_like
        Nonnegative arguments.  With an array the result has shape
        ``(len(x), n_orders)``.
    """
    if isinstance(orders, range):
        if orders.step != 1:
            raise ValueError("orders must be contiguous")
        lo, hi = orders.start, orders.stop - 1
    else:
        lo, hi = (int(v) for v in orders)
    if hi < lo:
        raise ValueError("empty order range")
    kmax = max(_check_order(lo), _check_order(hi))
    scalar = np.ndim(x) == 0
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(xs < 0) or not np.all(np.isfinite(xs)):
        raise ValueError("Bessel argument must be finite and nonnegative")
    table = scaled_table(kmax, xs)
    idx = np.abs(np.arange(lo, hi + 1))
    out = table[:, idx]
    return out[0] if scalar else out


def scaled_table(kmax: int, x) -> np.ndarray:
    """``exp(-x) I_k(x)`` for ``k = 0..kmax``; shape ``(len(x), kmax + 1)``."""
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    kmax = int(kmax)
    out = np.zeros((xs.size, kmax + 1))
    zero = xs == 0.0
    out[zero, 0] = 1.0
    pos = np.flatnonzero(~zero)
    # chunk to bound the (top x chunk) working set
    chunk = max(1, 2_000_000 // max(1, _start_order(kmax, float(xs.max(initial=0.0)))))
    for start in range(0, pos.size, chunk):
        sel = pos[start:start + chunk]
        out[sel] = _ratio_table(kmax, xs[sel])
    return out


def _ratio_table(kmax: int, x: np.ndarray) -> np.ndarray:
    top = _start_order(kmax, float(x.max()))
    with np.errstate(over="ignore"):
        inv = 2.0 / x  # inf for subnormal x, which correctly drives the ratios to 0
    ratio = np.zeros_like(x)
    r = np.empty((top, x.size))  # r[k-1] = I_k / I_{k-1}
    for k in range(top, 0, -1):
        ratio = 1.0 / (k * inv + ratio)
        r[k - 1] = ratio
    # cumulative products give I_k / I_0; they underflow gracefully to 0
    prods = np.cumprod(r, axis=0)
    i0 = 1.0 / (1.0 + 2.0 * prods.sum(axis=0))
    table = np.empty((x.size, kmax + 1))
    table[:, 0] = i0
    if kmax > 0:
        table[:, 1:] = (prods[:kmax] * i0).T
    return table


def bessel_ive(order: int, x: float) -> float:
    """Scaled value ``exp(-x) * I_order(x)``."""
    k = _check_order(order)
    x = float(x)
    if x < 0 or not math.isfinite(x):
        raise ValueError("Bessel argument must be finite and nonnegative")
    if x <= SERIES_MAX_X:
        return _series_scaled(k, x)
    return float(_ratio_table(k, np.array([x]))[0, k])


def bessel_i(order: int, x: float) -> float:
    """Modified Bessel function of the first kind ``I_order(x)``.

    Raises ``OverflowError`` when the unscaled value is not representable;
    use :func:`bessel_ive` in that regime.
    """
    scaled = bessel_ive(order, x)
    if scaled == 0.0:
        return 0.0
    log_value = math.log(scaled) + float(x)
    if log_value > 709.78:
        raise OverflowError(f"I_{order}({x}) overflows double precision; use the scaled form")
    return scaled * math.exp(float(x))
