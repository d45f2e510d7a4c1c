"""
Log-space modified Bessel function of the first kind.

``log I_nu(x)`` is needed for the von Mises-Fisher normalizer at orders up to a
few thousand, where ``I_nu`` itself under- or overflows double precision.
Three regimes are used, all evaluated directly in log space:

* ``nu >= DEBYE_MIN_ORDER``: Debye's uniform asymptotic expansion in ``1/nu``,
  with the ``u_k(t)`` polynomials generated exactly from their recurrence.
* small order, ``x <= SERIES_MAX_ARG``: the ascending power series, summed with
  log-sum-exp (all terms are positive, so there is no cancellation).
* small order, large argument: Hankel's large-argument expansion.
"""

import math
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

DEBYE_MIN_ORDER = 25.0
DEBYE_TERMS = 12
SERIES_MAX_ARG = 500.0
_LOG_2PI = math.log(2.0 * math.pi)


def _poly_derivative(c):
    return [i * c[i] for i in range(1, len(c))] or [Fraction(0)]


def _poly_mul(a, b):
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] += x * y
    return out


def _poly_add(a, b):
    n = max(len(a), len(b))
    a = a + [Fraction(0)] * (n - len(a))
    b = b + [Fraction(0)] * (n - len(b))
    return [x + y for x, y in zip(a, b)]


def _poly_integral(c):
    return [Fraction(0)] + [c[i] / (i + 1) for i in range(len(c))]


@lru_cache(maxsize=None)
def debye_polynomials(n_terms=DEBYE_TERMS):
    """Coefficients (ascending powers of t) of u_0 .. u_{n_terms-1}.

    u_{k+1}(t) = t^2 (1 - t^2) u_k'(t) / 2 + (1/8) int_0^t (1 - 5 s^2) u_k(s) ds
    """
    polys = [[Fraction(1)]]
    half_t2_1mt2 = [Fraction(0), Fraction(0), Fraction(1, 2), Fraction(0), Fraction(-1, 2)]
    one_m5s2 = [Fraction(1), Fraction(0), Fraction(-5)]
    for _ in range(n_terms - 1):
        u = polys[-1]
        a = _poly_mul(half_t2_1mt2, _poly_derivative(u))
        b = [x / 8 for x in _poly_integral(_poly_mul(one_m5s2, u))]
        polys.append(_poly_add(a, b))
    return tuple(tuple(float(c) for c in p) for p in polys)


def _log_ive_debye(nu, x):
    z = x / nu
    root = math.sqrt(1.0 + z * z)
    t = 1.0 / root
    # nu * eta - x, with sqrt(nu^2 + x^2) - x rewritten to avoid cancellation
    lead = nu * nu / (math.hypot(nu, x) + x) + nu * (math.log(z) - math.log1p(root))
    acc = 0.0
    inv_nu_k = 1.0
    for coeffs in debye_polynomials():
        acc += inv_nu_k * np.polynomial.polynomial.polyval(t, coeffs)
        inv_nu_k /= nu
    return lead - 0.5 * (_LOG_2PI + math.log(nu)) - 0.5 * math.log(root) + math.log(acc)


def _log_ive_series(nu, x):
    n_terms = int(x) + 60
    k = np.arange(n_terms, dtype=np.float64)
    log_half = math.log(0.5 * x)
    logs = (2.0 * k + nu) * log_half - gammaln(k + 1.0) - gammaln(k + nu + 1.0)
    peak = logs.max()
    return float(peak + math.log(np.exp(logs - peak).sum())) - x


def _log_ive_hankel(nu, x):
    mu4 = 4.0 * nu * nu
    term = 1.0
    acc = 1.0
    k = 1
    while True:
        nxt = -term * (mu4 - (2 * k - 1) ** 2) / (8.0 * k * x)
        if abs(nxt) >= abs(term) or abs(nxt) < 1e-17 * abs(acc):
            acc += nxt if abs(nxt) < abs(term) else 0.0
            break
        acc += nxt
        term = nxt
        k += 1
    return -0.5 * (_LOG_2PI + math.log(x)) + math.log(acc)


def log_ive_scalar(nu, x):
    """``log(I_nu(x) * exp(-x))`` for scalar ``nu >= 0`` and ``x >= 0``."""
    nu = float(nu)
    x = float(x)
    if nu < 0:
        raise ValueError(f"order must be nonnegative, got {nu}")
    if not x > 0:
        if x == 0:
            return 0.0 if nu == 0 else -math.inf
        raise ValueError(f"argument must be positive, got {x}")
    if math.isinf(x):
        return -0.5 * (_LOG_2PI + math.log(x))
    if nu >= DEBYE_MIN_ORDER:
        return _log_ive_debye(nu, x)
    if x <= SERIES_MAX_ARG:
        return _log_ive_series(nu, x)
    return _log_ive_hankel(nu, x)


def log_iv_scalar(nu, x):
    """``log I_nu(x)`` for scalar ``nu >= 0`` and ``x >= 0``."""
    x = float(x)
    if x == 0 or math.isinf(x):
        return log_ive_scalar(nu, x) if x == 0 else math.inf
    return log_ive_scalar(nu, x) + x


def log_iv(nu, x):
    """Vectorized ``log I_nu(x)``; broadcasts ``nu`` against ``x``."""
    nu_b, x_b = np.broadcast_arrays(np.asarray(nu, dtype=np.float64), np.asarray(x, dtype=np.float64))
    if nu_b.ndim == 0:
        return log_iv_scalar(nu_b, x_b)
    out = np.empty(nu_b.shape, dtype=np.float64)
    for idx in np.ndindex(nu_b.shape):
        out[idx] = log_iv_scalar(nu_b[idx], x_b[idx])
    return out


def iv_ratio(nu, x):
    """``I_{nu+1}(x) / I_nu(x)``; the scaled logs keep the ``x`` terms from cancelling."""
    nu_b, x_b = np.broadcast_arrays(np.asarray(nu, dtype=np.float64), np.asarray(x, dtype=np.float64))
    out = np.empty(nu_b.shape, dtype=np.float64)
    for idx in np.ndindex(nu_b.shape):
        n, v = float(nu_b[idx]), float(x_b[idx])
        out[idx] = math.exp(log_ive_scalar(n + 1.0, v) - log_ive_scalar(n, v))
    return out if out.ndim else float(out)
