"""Special functions and stable reductions.

``log_gamma``, ``digamma`` and ``trigamma`` use the same recipe: push the
argument above a threshold with the functional recurrence, then evaluate the
asymptotic (Stirling) series. All of them accept scalars or arrays and return
the same kind.
"""

import math

import numpy as np

__all__ = [
    "DomainError",
    "log_gamma",
    "digamma",
    "trigamma",
    "inv_digamma",
    "log_sum_exp",
    "softmax",
]

# B_2k for k = 1..10
_BERNOULLI = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
)

_LGAMMA_COEF = tuple(b / ((2 * k) * (2 * k - 1)) for k, b in enumerate(_BERNOULLI, 1))
_DIGAMMA_COEF = tuple(b / (2 * k) for k, b in enumerate(_BERNOULLI, 1))

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_SHIFT = 10.0


class DomainError(ValueError):
    """Argument outside the domain of a special function."""


def _prepare(x, name):
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
        raise DomainError(f"{name} requires finite x > 0")
    return arr


def _finish(arr, out):
    return float(out) if arr.ndim == 0 else out


def _shift_up(x):
    """Return (shifted x, number of unit steps taken per entry)."""
    steps = np.maximum(np.ceil(_SHIFT - x), 0.0)
    return x + steps, steps.astype(np.int64)


def log_gamma(x):
    """Natural log of the Gamma function for x > 0."""
    arr = _prepare(x, "log_gamma")
    z, steps = _shift_up(arr)
    # lnG(x) = lnG(x + n) - sum_j log(x + j)
    corr = np.zeros_like(z)
    for j in range(int(steps.max(initial=0))):
        active = steps > j
        corr = np.where(active, corr + np.log(np.where(active, arr + j, 1.0)), corr)
    inv = 1.0 / z
    inv2 = inv * inv
    series = np.zeros_like(z)
    for c in reversed(_LGAMMA_COEF):
        series = series * inv2 + c
    out = (z - 0.5) * np.log(z) - z + _HALF_LOG_2PI + series * inv - corr
    return _finish(arr, out)


def digamma(x):
    """psi(x) = d/dx log Gamma(x) for x > 0."""
    arr = _prepare(x, "digamma")
    z, steps = _shift_up(arr)
    corr = np.zeros_like(z)
    for j in range(int(steps.max(initial=0))):
        active = steps > j
        corr = np.where(active, corr + 1.0 / np.where(active, arr + j, 1.0), corr)
    inv2 = 1.0 / (z * z)
    series = np.zeros_like(z)
    for c in reversed(_DIGAMMA_COEF):
        series = series * inv2 + c
    out = np.log(z) - 0.5 / z - series * inv2 - corr
    return _finish(arr, out)


def trigamma(x):
    """psi'(x) for x > 0."""
    arr = _prepare(x, "trigamma")
    z, steps = _shift_up(arr)
    corr = np.zeros_like(z)
    for j in range(int(steps.max(initial=0))):
        active = steps > j
        t = np.where(active, arr + j, 1.0)
        corr = np.where(active, corr + 1.0 / (t * t), corr)
    inv = 1.0 / z
    inv2 = inv * inv
    series = np.zeros_like(z)
    for b in reversed(_BERNOULLI):
        series = series * inv2 + b
    out = inv + 0.5 * inv2 + series * inv2 * inv + corr
    return _finish(arr, out)


def inv_digamma(y, iters=8):
    """Solve digamma(x) = y for x > 0 (Newton from Minka's starting point)."""
    yy = np.asarray(y, dtype=np.float64)
    if not np.all(np.isfinite(yy)):
        raise DomainError("inv_digamma requires finite input")
    euler = -digamma(1.0)
    with np.errstate(divide="ignore"):
        x = np.where(yy >= -2.22, np.exp(np.minimum(yy, 700.0)) + 0.5, -1.0 / (yy + euler))
    for _ in range(iters):
        x = x - (digamma(x) - yy) / trigamma(x)
        x = np.maximum(x, 1e-300)
    return float(x) if yy.ndim == 0 else x


def log_sum_exp(v, axis=None):
    """log(sum(exp(v))) without overflow.

    Entries may be ``-inf``; an all ``-inf`` slice returns ``-inf``.
    """
    a = np.asarray(v, dtype=np.float64)
    if a.size == 0:
        raise ValueError("log_sum_exp of an empty array")
    if np.any(np.isnan(a)) or np.any(a == np.inf):
        raise ValueError("log_sum_exp requires entries that are finite or -inf")
    m = np.max(a, axis=axis, keepdims=True)
    m_safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m_safe), axis=axis, keepdims=True)) + m_safe
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def softmax(v, axis=-1):
    """Normalized exponentials along ``axis``."""
    a = np.asarray(v, dtype=np.float64)
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(a - m)
    return e / np.sum(e, axis=axis, keepdims=True)
