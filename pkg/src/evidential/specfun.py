"""Scalar special functions used by densities, entropies and closed-form losses.

``digamma`` and ``trigamma`` accept scalars or arrays and are used on the hot path
of training, so they are vectorised. The incomplete-function CDFs are scalar.
"""
from __future__ import annotations

import math
from typing import Callable

import numpy as np
from scipy import special as _sp

from .errors import DomainError, NumericError

EULER_GAMMA = 0.57721566490153286061

# Signed Bernoulli-number coefficients of the asymptotic series, lowest order first.
_PSI_COEF = (1 / 12, -1 / 120, 1 / 252, -1 / 240, 1 / 132, -691 / 32760, 1 / 12)
_PSI1_COEF = (1 / 6, -1 / 30, 1 / 42, -1 / 30, 5 / 66, -691 / 2730, 7 / 6)
_SHIFT = 10.0


def _positive(x, name="x"):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError(f"{name} must be finite and > 0, got {x!r}")
    return arr


def _out(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def ln_gamma(x):
    """Natural log of the Gamma function for x > 0."""
    return _out(_sp.gammaln(_positive(x)))


def digamma(x):
    """psi(x) via upward recurrence to x >= 10 followed by the asymptotic series."""
    x = _positive(x).copy()
    acc = np.zeros_like(x)
    small = x < _SHIFT
    while np.any(small):
        acc[small] -= 1.0 / x[small]
        x[small] += 1.0
        small = x < _SHIFT
    inv2 = 1.0 / (x * x)
    return _out(acc + np.log(x) - 0.5 / x - _series(_PSI_COEF, inv2))


def _series(coef, inv2):
    # sum_k coef[k] * inv2**(k+1), Horner form
    s = np.zeros_like(inv2)
    for c in reversed(coef):
        s = (s + c) * inv2
    return s


def trigamma(x):
    """psi'(x), always positive on x > 0."""
    x = _positive(x).copy()
    acc = np.zeros_like(x)
    small = x < _SHIFT
    while np.any(small):
        acc[small] += 1.0 / (x[small] * x[small])
        x[small] += 1.0
        small = x < _SHIFT
    inv2 = 1.0 / (x * x)
    return _out(acc + 1.0 / x + 0.5 * inv2 + _series(_PSI1_COEF, inv2) / x)


def ln_beta(a, b):
    a = _positive(a, "a")
    b = _positive(b, "b")
    return _out(_sp.gammaln(a) + _sp.gammaln(b) - _sp.gammaln(a + b))


_CF_EPS = 1e-16
_CF_TINY = 1e-300
_CF_MAXIT = 10_000


def _beta_cf(a: float, b: float, x: float) -> float:
    # modified Lentz evaluation of the incomplete-beta continued fraction
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = _CF_TINY if abs(d) < _CF_TINY else d
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = _CF_TINY if abs(d) < _CF_TINY else d
        c = 1.0 + aa / c
        c = _CF_TINY if abs(c) < _CF_TINY else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = _CF_TINY if abs(d) < _CF_TINY else d
        c = 1.0 + aa / c
        c = _CF_TINY if abs(c) < _CF_TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise NumericError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def reg_inc_beta(a: float, b: float, x: float) -> float:
    """Regularised incomplete beta I_x(a, b)."""
    _positive(a, "a")
    _positive(b, "b")
    if not (0.0 <= x <= 1.0):
        raise DomainError(f"x must lie in [0, 1], got {x!r}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    log_front = a * math.log(x) + b * math.log1p(-x) - float(ln_beta(a, b))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        val = front * _beta_cf(a, b, x) / a
    else:
        val = 1.0 - front * _beta_cf(b, a, 1.0 - x) / b
    return min(1.0, max(0.0, val))


def _gamma_series(a: float, x: float) -> float:
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_CF_MAXIT):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _CF_EPS:
            return total * math.exp(-x + a * math.log(x) - math.lgamma(a))
    raise NumericError(f"incomplete gamma series did not converge (a={a}, x={x})")


def _gamma_cf_upper(a: float, x: float) -> float:
    b = x + 1.0 - a
    c = 1.0 / _CF_TINY
    d = 1.0 / b
    h = d
    for i in range(1, _CF_MAXIT + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        d = _CF_TINY if abs(d) < _CF_TINY else d
        c = b + an / c
        c = _CF_TINY if abs(c) < _CF_TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h
    raise NumericError(f"incomplete gamma continued fraction did not converge (a={a}, x={x})")


def reg_inc_gamma_lower(a: float, x: float) -> float:
    """Regularised lower incomplete gamma P(a, x)."""
    _positive(a, "a")
    if math.isnan(x) or x < 0:
        raise DomainError(f"x must be >= 0, got {x!r}")
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        val = _gamma_series(a, x)
    else:
        val = 1.0 - _gamma_cf_upper(a, x)
    return min(1.0, max(0.0, val))


def reg_inc_gamma_upper(a: float, x: float) -> float:
    """Q(a, x) = 1 - P(a, x), computed without cancellation in the upper tail."""
    _positive(a, "a")
    if math.isnan(x) or x < 0:
        raise DomainError(f"x must be >= 0, got {x!r}")
    if x == 0.0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        val = 1.0 - _gamma_series(a, x)
    else:
        val = _gamma_cf_upper(a, x)
    return min(1.0, max(0.0, val))


def inverse_cdf_bisect(
    cdf: Callable[[float], float],
    p: float,
    lo: float,
    hi: float,
    tol: float = 1e-10,
    expand: bool = True,
    max_iter: int = 400,
) -> float:
    """Return q in [lo, hi] with |cdf(q) - p| <= tol by bisection.

    With ``expand`` the bracket is widened geometrically (away from zero) until it
    straddles p, which lets callers pass a rough guess for unbounded supports.
    """
    if not (0.0 < p < 1.0):
        raise DomainError(f"p must lie in (0, 1), got {p!r}")
    if not lo < hi:
        raise NumericError(f"empty bracket [{lo}, {hi}]")
    f_lo, f_hi = cdf(lo), cdf(hi)
    grow = 0
    while expand and (f_lo > p or f_hi < p) and grow < 200:
        width = hi - lo
        if f_lo > p:
            lo -= width
            f_lo = cdf(lo)
        if f_hi < p:
            hi += width
            f_hi = cdf(hi)
        grow += 1
    if f_lo > p or f_hi < p:
        raise NumericError(f"bracket [{lo}, {hi}] does not contain p={p} (cdf: {f_lo}, {f_hi})")
    if abs(f_lo - p) <= tol:
        return lo
    if abs(f_hi - p) <= tol:
        return hi
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            return mid
        f_mid = cdf(mid)
        if abs(f_mid - p) <= tol:
            return mid
        if f_mid < p:
            lo = mid
        else:
            hi = mid
    raise NumericError(f"bisection did not reach tolerance {tol} for p={p}")
