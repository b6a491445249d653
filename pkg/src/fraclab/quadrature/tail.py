"""Kernel mass of the exterior of a circle or of a convex polygon.

For a star-shaped exterior the radial integral is exact:
    int_{E} |x-y|^{-2-2s} dy = (1/2s) int_0^{2pi} l(x, theta)^{-2s} dtheta,
with ``l`` the distance from x to the boundary along direction theta.
"""
import numpy as np
from scipy.special import beta, betainc


def _check_s(s):
    if not 0.0 < s < 1.0:
        raise ValueError(f"fractional order must lie in (0, 1), got {s}")


def tail_integral(x, R, s, tol=1e-14, max_points=1 << 16):
    """Exterior of the circle of radius R, by the periodic trapezoid rule."""
    _check_s(s)
    x = np.asarray(x, dtype=float)
    rho = float(np.hypot(x[0], x[1]))
    if rho >= R:
        raise ValueError(f"|x|={rho} must be smaller than R={R}")
    n = 16
    prev = None
    while n <= max_points:
        th = 2.0 * np.pi * np.arange(n) / n
        ell = -rho * np.cos(th) + np.sqrt(R * R - (rho * np.sin(th)) ** 2)
        val = (2.0 * np.pi / n) * np.sum(ell ** (-2.0 * s)) / (2.0 * s)
        if prev is not None and abs(val - prev) <= tol * abs(val):
            return val
        prev = val
        n *= 2
    return val


def _cos_power_primitive(phi, s):
    """int_0^phi cos(t)^{2s} dt for |phi| <= pi/2."""
    a, b = 0.5, s + 0.5
    return np.sign(phi) * 0.5 * beta(a, b) * betainc(a, b, np.sin(phi) ** 2)


def polygon_tail_integral(points, polygon, s):
    """Exterior of a convex CCW polygon, evaluated edge by edge in closed form.

    ``points`` (..., 2) must lie strictly inside ``polygon`` (m, 2).
    """
    _check_s(s)
    pts = np.asarray(points, dtype=float)
    shape = pts.shape[:-1]
    pts = pts.reshape(-1, 2)
    P = np.asarray(polygon, dtype=float)
    Q = np.roll(P, -1, axis=0)
    t = Q - P
    t /= np.linalg.norm(t, axis=1, keepdims=True)
    n = np.stack([t[:, 1], -t[:, 0]], 1)
    out = np.zeros(len(pts))
    for k in range(len(P)):
        vp = P[k] - pts
        vq = Q[k] - pts
        d = vp @ n[k]
        if np.any(d <= 0):
            raise ValueError("points must lie strictly inside the polygon")
        phi_p = np.arctan2(vp @ t[k], d)
        phi_q = np.arctan2(vq @ t[k], vq @ n[k])
        span = _cos_power_primitive(phi_q, s) - _cos_power_primitive(phi_p, s)
        out += d ** (-2.0 * s) * span
    return (out / (2.0 * s)).reshape(shape)
