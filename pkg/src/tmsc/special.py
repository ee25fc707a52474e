"""Digamma, trigamma and log-gamma for positive arguments.

All three use the same scheme: shift the argument upward with the
functional recurrence until it reaches ``_ASYMPTOTIC_FROM``, then evaluate
the asymptotic (Stirling-type) series. Inputs may be Python scalars or
numpy arrays; scalars come back as floats.
"""

from __future__ import annotations

import math

import numpy as np

_ASYMPTOTIC_FROM = 6.0
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def _prepare(x, name):
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: argument must be finite")
    if np.any(arr <= 0):
        raise ValueError(f"{name}: math domain error (argument must be > 0)")
    return arr


def _recur(arr, term):
    """Raise ``arr`` past the asymptotic cut, summing ``term(x)`` per step."""
    x = arr.copy()
    acc = np.zeros_like(x)
    low = x < _ASYMPTOTIC_FROM
    while low.any():
        acc += np.where(low, term(x), 0.0)
        x = np.where(low, x + 1.0, x)
        low = x < _ASYMPTOTIC_FROM
    return x, acc


def _out(value, x):
    return float(value) if np.ndim(x) == 0 else value


def digamma(x):
    """psi(x) = d/dx log Gamma(x); raises ValueError for x <= 0."""
    arr = _prepare(x, "digamma")
    cur, acc = _recur(arr, lambda t: -1.0 / t)
    inv = 1.0 / cur
    inv2 = inv * inv
    series = inv2 * (1 / 12 - inv2 * (1 / 120 - inv2 * (1 / 252 - inv2 * (1 / 240 - inv2 * (1 / 132)))))
    return _out(acc + np.log(cur) - 0.5 * inv - series, x)


def trigamma(x):
    """psi'(x), the derivative of digamma."""
    arr = _prepare(x, "trigamma")
    cur, acc = _recur(arr, lambda t: 1.0 / (t * t))
    inv = 1.0 / cur
    inv2 = inv * inv
    series = inv + 0.5 * inv2 + inv * inv2 * (
        1 / 6 - inv2 * (1 / 30 - inv2 * (1 / 42 - inv2 * (1 / 30 - inv2 * (5 / 66))))
    )
    return _out(acc + series, x)


def lgamma(x):
    """log Gamma(x) for x > 0."""
    arr = _prepare(x, "lgamma")
    cur, acc = _recur(arr, lambda t: -np.log(t))
    inv = 1.0 / cur
    inv2 = inv * inv
    series = inv * (1 / 12 - inv2 * (1 / 360 - inv2 * (1 / 1260 - inv2 * (1 / 1680 - inv2 * (1 / 1188)))))
    return _out(acc + (cur - 0.5) * np.log(cur) - cur + _HALF_LOG_2PI + series, x)
