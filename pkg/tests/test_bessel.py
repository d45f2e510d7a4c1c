from fractions import Fraction

import mpmath as mp
import numpy as np
import pytest
from scipy import special

from fouriervmf._bessel import debye_polynomials, iv_ratio, log_iv, log_iv_scalar, log_ive_scalar

mp.mp.dps = 30

NUS = [0.0, 0.5, 1.0, 2.5, 24.0, 24.5, 25.0, 31.0, 255.0, 1023.0, 2047.0]
XS = [1e-6, 1e-2, 0.5, 3.0, 20.0, 99.0, 480.0, 520.0, 5e3, 1e5]


@pytest.mark.parametrize("nu", NUS)
@pytest.mark.parametrize("x", XS)
def test_log_iv_against_mpmath(nu, x):
    ref = float(mp.log(mp.besseli(nu, x, maxterms=10**6)))
    assert log_iv_scalar(nu, x) == pytest.approx(ref, rel=1e-13, abs=1e-13)


@pytest.mark.parametrize("nu", [0.0, 3.0, 40.0])
def test_log_iv_against_scipy_ive(nu):
    x = np.array([0.1, 1.0, 10.0, 100.0])
    ref = np.log(special.ive(nu, x)) + x
    assert np.allclose(log_iv(nu, x), ref, rtol=1e-12)


def test_zero_argument():
    assert log_iv_scalar(0.0, 0.0) == 0.0
    assert log_iv_scalar(2.0, 0.0) == -np.inf


@pytest.mark.parametrize("nu,x", [(0.5, 2.0), (255.0, 50.0), (31.0, 0.5), (1.0, 3e4), (0.0, 1e5), (30.0, 1e5)])
def test_ratio(nu, x):
    ref = float(mp.besseli(nu + 1, x) / mp.besseli(nu, x))
    assert float(iv_ratio(nu, x)) == pytest.approx(ref, rel=1e-12)


def test_debye_first_polynomials():
    # u1 = (3t - 5t^3)/24, u2 = (81t^2 - 462t^4 + 385t^6)/1152
    u = debye_polynomials(3)
    u1 = [0, Fraction(3, 24), 0, Fraction(-5, 24)]
    u2 = [0, 0, Fraction(81, 1152), 0, Fraction(-462, 1152), 0, Fraction(385, 1152)]
    assert np.allclose(u[1][:4], [float(c) for c in u1], rtol=1e-15, atol=0)
    assert not any(u[1][4:])
    assert np.allclose(u[2][:7], [float(c) for c in u2], rtol=1e-15, atol=0)
    assert not any(u[2][7:])


@pytest.mark.parametrize("nu,x", [(0.0, 1e-3), (7.0, 400.0), (100.0, 1e5), (2.0, 9e4)])
def test_scaled_log(nu, x):
    ref = float(mp.log(mp.besseli(nu, x, maxterms=10**6)) - x)
    assert log_ive_scalar(nu, x) == pytest.approx(ref, rel=1e-13, abs=1e-13)
