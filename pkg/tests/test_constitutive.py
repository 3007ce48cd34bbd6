import math

import numpy as np
import pytest
from scipy.integrate import quad

from reactsettle.constitutive import (CompressionTable, SettlingParams, compression_primitive,
                                      diffusion_coefficient, effective_stress_derivative,
                                      hindered_settling_slope, hindered_settling_velocity,
                                      settling_bounds)

P = SettlingParams()


def test_vhs_reference_points():
    assert hindered_settling_velocity(0.0, P) == pytest.approx(1.76e-3, rel=1e-15)
    # at x = x_breve the denominator is exactly 2
    assert hindered_settling_velocity(3.87, P) == pytest.approx(8.8e-4, rel=1e-14)
    direct = 1.76e-3 / (1 + (5.0 / 3.87) ** 3.58)
    assert hindered_settling_velocity(5.0, P) == pytest.approx(direct, rel=1e-14)
    assert hindered_settling_velocity(5.0, P) == pytest.approx(5.02e-4, rel=5e-3)
    assert hindered_settling_velocity(P.x_hat, P) == 0.0
    assert hindered_settling_velocity(P.x_hat + 5, P) == 0.0


def test_vhs_is_nonincreasing():
    x = np.linspace(0, P.x_hat + 1, 5001)
    v = hindered_settling_velocity(x, P)
    assert np.all(np.diff(v) <= 0)


def test_slope_matches_finite_difference():
    for x in (0.5, 2.0, 3.87, 7.0, 20.0):
        e = 1e-6
        fd = (hindered_settling_velocity(x + e, P) - hindered_settling_velocity(x - e, P)) / (2 * e)
        assert hindered_settling_slope(x, P) == pytest.approx(fd, rel=1e-6)


def test_stress_derivative_branches():
    assert effective_stress_derivative(4.9, P) == 0.0
    assert effective_stress_derivative(P.x_c, P) == 0.0
    assert effective_stress_derivative(5.1, P) == 0.2


def test_diffusion_coefficient():
    assert diffusion_coefficient(3.0, P) == 0.0
    assert diffusion_coefficient(P.x_hat, P) == 0.0
    # hand evaluation at x = 6
    v = 1.76e-3 / (1 + (6 / 3.87) ** 3.58)
    hand = v * 1050 * 0.2 / (9.81 * 6 * 52)
    assert diffusion_coefficient(6.0, P) == pytest.approx(hand, rel=1e-14)
    assert diffusion_coefficient(6.0, P) == pytest.approx(2.08e-5, rel=1e-2)


def _simpson(f, a, b, tol=1e-15):
    # adaptive Simpson, independent of scipy's QUADPACK
    def s(a, b, fa, fm, fb):
        return (b - a) / 6 * (fa + 4 * fm + fb)

    def rec(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left, right = s(a, m, fa, flm, fm), s(m, b, fm, frm, fb)
        if depth > 40 or abs(left + right - whole) <= 15 * tol:
            return left + right + (left + right - whole) / 15
        return (rec(a, m, fa, flm, fm, left, tol / 2, depth + 1)
                + rec(m, b, fm, frm, fb, right, tol / 2, depth + 1))

    fa, fb, fm = f(a), f(b), f(0.5 * (a + b))
    return rec(a, b, fa, fm, fb, s(a, b, fa, fm, fb), tol, 0)


def test_primitive_against_simpson():
    assert compression_primitive(P.x_c, P) == 0.0
    assert compression_primitive(2.0, P) == 0.0
    ref = _simpson(lambda x: float(diffusion_coefficient(x, P)), 5.0, 7.0)
    assert compression_primitive(7.0, P) == pytest.approx(ref, rel=1e-10)


@pytest.mark.parametrize("x", [5.001, 5.3, 9.9, 17.25, 29.99])
def test_primitive_off_node(x):
    ref = quad(lambda s: float(diffusion_coefficient(s, P)), 5.0, x, epsrel=1e-13, limit=200)[0]
    assert compression_primitive(x, P) == pytest.approx(ref, rel=1e-10)


def test_primitive_saturates_and_is_monotone():
    x = np.linspace(0, 40, 4001)
    D = compression_primitive(x, P)
    assert np.all(np.diff(D) >= -1e-18)
    assert compression_primitive(35.0, P) == compression_primitive(P.x_hat, P)


def test_no_compression_gives_zero_table():
    p = SettlingParams(alpha_comp=0.0)
    t = CompressionTable(p, points=64)
    assert t.d_hat == 0.0
    assert float(t(12.0)) == 0.0


def test_bounds():
    b = settling_bounds(P)
    assert b.vhs_zero == P.v0
    xs = np.linspace(0, P.x_hat, 100001)
    assert b.vhs_slope_sup >= np.max(np.abs(hindered_settling_slope(xs, P))) * (1 - 1e-12)
    # |v'| is maximal where u = (eta-1)/(eta+1)
    x_star = 3.87 * ((3.58 - 1) / (3.58 + 1)) ** (1 / 3.58)
    assert b.vhs_slope_sup == pytest.approx(abs(hindered_settling_slope(x_star, P)), rel=1e-12)
    assert b.d_sup == pytest.approx(diffusion_coefficient(P.x_c + 1e-9, P), rel=1e-6)
    assert b.d_hat == compression_primitive(P.x_hat, P)


@pytest.mark.parametrize("bad", [dict(v0=0), dict(x_c=40), dict(rho_f=2000), dict(eps_r=0), dict(alpha_comp=-1)])
def test_params_validation(bad):
    with pytest.raises(ValueError):
        SettlingParams(**bad)


def test_delta_rho():
    assert math.isclose(P.delta_rho, 52.0)
