import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from fraclab.quadrature import polygon_tail_integral, tail_integral


@pytest.mark.parametrize("s", [0.1, 0.25, 0.5, 0.75, 0.9])
def test_tail_at_center(s):
    assert tail_integral(np.zeros(2), 1.0, s) == pytest.approx(math.pi / s, rel=1e-12)
    assert tail_integral(np.zeros(2), 2.0, s) == pytest.approx(math.pi / s * 2.0 ** (-2 * s), rel=1e-12)


def test_tail_against_direct_radial_quadrature():
    s, R, x = 0.4, 1.5, np.array([0.6, -0.3])

    def inner(theta):
        e = np.array([math.cos(theta), math.sin(theta)])
        b = x @ e
        rho0 = -b + math.sqrt(b * b + R * R - x @ x)
        return rho0 ** (-2 * s) / (2 * s)

    ref, _ = integrate.quad(inner, 0.0, 2 * math.pi, epsabs=1e-14, epsrel=1e-13, limit=200)
    assert tail_integral(x, R, s) == pytest.approx(ref, rel=1e-11)


def test_tail_outside_rejected():
    with pytest.raises(ValueError):
        tail_integral(np.array([1.0, 0.0]), 1.0, 0.5)
    with pytest.raises(ValueError):
        tail_integral(np.zeros(2), 1.0, 1.0)


@settings(max_examples=30, deadline=None)
@given(s=st.floats(0.05, 0.95), r=st.floats(0.0, 0.9), phi=st.floats(0, 2 * math.pi))
def test_polygon_tail_tends_to_circle(s, r, phi):
    x = r * np.array([math.cos(phi), math.sin(phi)])
    m = 4096
    th = 2 * math.pi * np.arange(m) / m
    # regular polygon circumscribing... inscribed in radius R: approaches the circle as m grows
    R = 1.0
    poly = R * np.stack([np.cos(th), np.sin(th)], 1)
    got = polygon_tail_integral(x, poly, s)
    ref = tail_integral(x, R, s)
    assert got == pytest.approx(ref, rel=1e-4)
    # the inscribed polygon is smaller, so its exterior mass is larger
    assert got > ref


def test_polygon_tail_square_center():
    # exterior of the square [-1,1]^2 seen from 0: 4 * (1/2s) * int_{-pi/4}^{pi/4} cos^{2s}
    s = 0.3
    val, _ = integrate.quad(lambda t: math.cos(t) ** (2 * s), -math.pi / 4, math.pi / 4)
    sq = np.array([[1, -1], [1, 1], [-1, 1], [-1, -1]], float)
    assert polygon_tail_integral(np.zeros(2), sq, s) == pytest.approx(4 * val / (2 * s), rel=1e-13)


def test_polygon_tail_rejects_outside_points():
    sq = np.array([[1, -1], [1, 1], [-1, 1], [-1, -1]], float)
    with pytest.raises(ValueError):
        polygon_tail_integral(np.array([[2.0, 0.0]]), sq, 0.5)


def test_tail_monotone_and_rotation_invariant():
    s = 0.6
    rs = np.linspace(0.0, 0.95, 12)
    vals = [tail_integral(np.array([r, 0.0]), 1.0, s) for r in rs]
    assert np.all(np.diff(vals) > 0)
    Rs = [1.2, 1.5, 2.0, 4.0]
    assert np.all(np.diff([tail_integral(np.array([0.3, 0.2]), R, s) for R in Rs]) < 0)
    x = np.array([0.5, 0.4])
    for phi in (0.3, 1.7, 4.0):
        c, sn = np.cos(phi), np.sin(phi)
        y = np.array([c * x[0] - sn * x[1], sn * x[0] + c * x[1]])
        assert tail_integral(y, 1.0, s) == pytest.approx(tail_integral(x, 1.0, s), rel=1e-12)


@pytest.mark.parametrize("r", [0.5, 0.9])
def test_tail_against_2d_integration(r):
    """Polar integration over the exterior, centred at the origin, as an independent check."""
    s, R = 0.35, 1.0
    x = np.array([r, 0.0])

    def integrand(rho, th):
        y = rho * np.array([np.cos(th), np.sin(th)])
        return rho * np.sum((x - y) ** 2) ** (-1 - s)

    # map rho in (R, inf) to t in (0, 1): rho = R / t
    ref, _ = integrate.dblquad(lambda t, th: integrand(R / t, th) * R / t**2, 0, 2 * np.pi, 0, 1,
                               epsabs=1e-12, epsrel=1e-10)
    assert tail_integral(x, R, s) == pytest.approx(ref, rel=1e-7)


def test_tail_blows_up_like_distance_power():
    s = 0.3
    d = np.array([1e-2, 1e-3, 1e-4])
    vals = np.array([tail_integral(np.array([1 - e, 0.0]), 1.0, s) for e in d])
    slopes = np.diff(np.log(vals)) / np.diff(np.log(d))
    assert slopes[-1] == pytest.approx(-2 * s, abs=0.02)
