"""Bessel functions of the first kind, integer order.

Small arguments use the ascending power series. Everything else uses
Miller's backward recurrence normalized with ``J_0 + 2 sum_k J_2k = 1``;
that yields all orders ``0..n`` in one sweep, which is what the equalizer
needs per frequency bin.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["bessel_j", "bessel_j_orders", "MAX_ORDER", "MAX_ARG"]

MAX_ORDER = 64
MAX_ARG = 200.0
SERIES_MAX_ARG = 2.0


def _check(order: int, x: float) -> None:
    if not math.isfinite(x) or x < 0 or x > MAX_ARG:
        raise ValueError(f"argument must lie in [0, {MAX_ARG}], got {x}")
    if abs(order) > MAX_ORDER:
        raise ValueError(f"|order| must not exceed {MAX_ORDER}, got {order}")


def _series(n: int, x: float) -> float:
    half = 0.5 * x
    term = half**n / math.factorial(n)
    total = term
    q = -half * half
    m = 0
    while True:
        m += 1
        term *= q / (m * (m + n))
        total += term
        if abs(term) < 1e-17 * abs(total) or term == 0.0:
            return total


def _miller(n_max: int, x: float) -> np.ndarray:
    """J_0..J_{n_max} at x > 0 by backward recurrence."""
    top = max(n_max, int(x))
    start = top + 20 + int(math.sqrt(60.0 * top))
    start += start % 2
    vals = np.zeros(n_max + 1)
    nxt, cur = 0.0, 1e-300
    norm_sum = 0.0
    two_over_x = 2.0 / x
    for k in range(start, 0, -1):
        prev = k * two_over_x * cur - nxt  # J_{k-1}
        nxt, cur = cur, prev
        if k - 1 <= n_max:
            vals[k - 1] = cur
        if (k - 1) % 2 == 0 and k - 1 > 0:
            norm_sum += cur
        if abs(cur) > 1e250:
            nxt *= 1e-250
            cur *= 1e-250
            vals *= 1e-250
            norm_sum *= 1e-250
    norm = 2.0 * norm_sum + cur  # cur is J_0 now
    return vals / norm


def bessel_j_orders(n_max: int, x: float) -> np.ndarray:
    """``[J_0(x), ..., J_{n_max}(x)]`` for nonnegative ``x``."""
    _check(n_max, x)
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    if x == 0.0:
        out = np.zeros(n_max + 1)
        out[0] = 1.0
        return out
    if x <= SERIES_MAX_ARG:
        return np.array([_series(n, x) for n in range(n_max + 1)])
    return _miller(n_max, x)


def bessel_j(order: int, x: float) -> float:
    """Bessel function of the first kind ``J_order(x)``.

    Parameters
    ----------
    order : int
        Integer order, ``|order| <= 64``. Negative orders use
        ``J_{-p}(x) = (-1)^p J_p(x)``.
    x : float
        Argument in ``[0, 200]``.

    Raises
    ------
    ValueError
        If the order or argument is out of range.
    """
    if int(order) != order:
        raise ValueError("order must be an integer")
    order = int(order)
    _check(order, x)
    n = abs(order)
    if x == 0.0:
        val = 1.0 if n == 0 else 0.0
    elif x <= SERIES_MAX_ARG:
        val = _series(n, x)
    else:
        val = float(_miller(n, x)[n])
    if order < 0 and n % 2:
        val = -val
    return val
