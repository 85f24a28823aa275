"""Regularized incomplete beta function by continued fraction.

Modified Lentz evaluation of the standard continued fraction, using the
symmetry ``I_x(a, b) = 1 - I_{1-x}(b, a)`` so the fraction is always evaluated
where it converges fast.  Vectorized over broadcastable inputs.
"""

import math

import numpy as np
from scipy.special import betaln

_TINY = 1e-300
_EPS = 1e-16
_MAX_ITER = 1000


def _cf(a, b, x):
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = np.ones_like(x)
    d = 1.0 - qab * x / qap
    d = np.where(np.abs(d) < _TINY, _TINY, d)
    d = 1.0 / d
    h = d.copy()
    done = np.zeros(x.shape, dtype=bool)
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _TINY, _TINY, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _TINY, _TINY, c)
        d = 1.0 / d
        h = np.where(done, h, h * d * c)
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _TINY, _TINY, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _TINY, _TINY, c)
        d = 1.0 / d
        delta = d * c
        h = np.where(done, h, h * delta)
        done |= np.abs(delta - 1.0) < _EPS
        if done.all():
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def _cf_scalar(a, b, x):
    # same recurrence as _cf on plain floats; much cheaper for one evaluation
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) >= _TINY else _TINY)
    h = d
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) >= _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) >= _TINY else _TINY
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) >= _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) >= _TINY else _TINY
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def _betainc_scalar(a, b, x):
    if a <= 0 or b <= 0:
        raise ValueError("shape parameters must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    swap = x > (a + 1.0) / (a + b + 2.0)
    if swap:
        a, b, x = b, a, 1.0 - x
    lbeta = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    val = math.exp(a * math.log(x) + b * math.log1p(-x) - lbeta) * _cf_scalar(a, b, x) / a
    return 1.0 - val if swap else val


def betainc(a, b, x):
    """Regularized incomplete beta ``I_x(a, b)`` for a, b > 0 and x in [0, 1]."""
    if all(np.ndim(v) == 0 for v in (a, b, x)):
        return _betainc_scalar(float(a), float(b), float(x))
    a, b, x = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, b, x)))
    if np.any(a <= 0) or np.any(b <= 0):
        raise ValueError("shape parameters must be positive")
    if np.any((x < 0) | (x > 1)):
        raise ValueError("x must lie in [0, 1]")
    out = np.where(x >= 1.0, 1.0, 0.0)
    inner = (x > 0) & (x < 1)
    if inner.any():
        ai, bi, xi = a[inner], b[inner], x[inner]
        swap = xi > (ai + 1.0) / (ai + bi + 2.0)
        aa = np.where(swap, bi, ai)
        bb = np.where(swap, ai, bi)
        xx = np.where(swap, 1.0 - xi, xi)
        logfront = aa * np.log(xx) + bb * np.log1p(-xx) - betaln(aa, bb)
        val = np.exp(logfront) * _cf(aa, bb, xx) / aa
        out = out.astype(float)
        out[inner] = np.where(swap, 1.0 - val, val)
    return out[()] if out.ndim == 0 else out


def beta_cdf(x, a, b):
    return betainc(a, b, x)


def beta_sf(x, a, b):
    """``1 - I_x(a, b)`` computed without cancellation in the upper tail."""
    if all(np.ndim(v) == 0 for v in (a, b, x)):
        return betainc(float(b), float(a), min(max(1.0 - float(x), 0.0), 1.0))
    a, b, x = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, b, x)))
    return betainc(b, a, np.clip(1.0 - x, 0.0, 1.0))
