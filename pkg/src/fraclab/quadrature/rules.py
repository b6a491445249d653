"""Quadrature rules on the reference triangle and on touching triangle pairs."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


@dataclass(frozen=True)
class GaussRule:
    """Quadrature on the reference triangle.

    ``nodes`` are barycentric coordinates (n, 3); ``weights`` are positive and
    sum to one, so ``area * sum(w * f(x))`` integrates ``f`` over a physical
    triangle.
    """

    nodes: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def size(self):
        return len(self.weights)

    def physical_points(self, verts):
        """Map the nodes onto the triangle(s) ``verts`` of shape (..., 3, 2)."""
        return np.einsum("qk,...kd->...qd", self.nodes, verts)


def _orbit3(a, w):
    b = 1.0 - 2.0 * a
    return [(a, a, b), (a, b, a), (b, a, a)], [w] * 3


def _symmetric_rule(orbits, centroid_weight=None):
    nodes, weights = [], []
    if centroid_weight is not None:
        nodes.append((1.0 / 3, 1.0 / 3, 1.0 / 3))
        weights.append(centroid_weight)
    for a, w in orbits:
        n, ww = _orbit3(a, w)
        nodes += n
        weights += ww
    return np.array(nodes), np.array(weights)


# Symmetric positive rules (Strang-Fix / Dunavant), weights normalized to 1.
_TABULATED = {
    1: _symmetric_rule([], centroid_weight=1.0),
    2: _symmetric_rule([(1.0 / 6.0, 1.0 / 3.0)]),
    4: _symmetric_rule([
        (0.445948490915965, 0.223381589678011),
        (0.091576213509771, 0.109951743655322),
    ]),
    5: _symmetric_rule([
        (0.470142064105115, 0.132394152788506),
        (0.101286507323456, 0.125939180544827),
    ], centroid_weight=0.225),
}

MAX_DEGREE = 41


def gauss_legendre01(n):
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def conical_product_rule(n):
    """Collapsed (Stroud) rule with n*n points, exact to degree 2n-1."""
    t, wj = roots_jacobi(n, 1.0, 0.0)
    u = 0.5 * (1.0 + t)
    wu = wj / 4.0
    x, wx = gauss_legendre01(n)
    U, X = np.meshgrid(u, x, indexing="ij")
    W = np.outer(wu, wx)
    V = (1.0 - U) * X
    nodes = np.stack([1.0 - U - V, U, V], axis=-1).reshape(-1, 3)
    weights = 2.0 * W.ravel()
    return nodes, weights


@lru_cache(maxsize=None)
def gauss_triangle(order):
    """Positive-weight rule exact for polynomials of total degree ``order``."""
    order = int(order)
    if order < 1 or order > MAX_DEGREE:
        raise ValueError(f"unsupported quadrature order {order} (1..{MAX_DEGREE})")
    if order == 3:
        order_key = 4
    else:
        order_key = order
    if order_key in _TABULATED:
        nodes, weights = _TABULATED[order_key]
        return GaussRule(nodes.copy(), weights.copy(), order_key)
    n = (order + 2) // 2
    nodes, weights = conical_product_rule(n)
    return GaussRule(nodes, weights, 2 * n - 1)


# ---------------------------------------------------------------------------
# Reduced relative-coordinate rules for touching pairs.
#
# The four-dimensional pair integral is split into Duffy-type subregions in
# which both points are (shared vertex) + xi * (...).  Every local shape
# difference and the separation x - y carry the same scaling factor, so the
# power of that factor is integrated in closed form and only the remaining
# directions are sampled.  Coordinates below live on the triangle
# {0 <= y <= x <= 1}, shared vertex at the origin, shared edge on y = 0.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TouchingRule:
    """Points (q, 2) for each triangle on the {y<=x} reference, plus weights.

    For the identical case ``x`` holds the separation vector only and ``y``
    is zero.
    """

    x: np.ndarray
    y: np.ndarray
    weights: np.ndarray


def _to_standard(p):
    # {0<=y<=x<=1} -> standard simplex (u, v)
    return np.stack([p[:, 0] - p[:, 1], p[:, 1]], axis=1)


@lru_cache(maxsize=None)
def identical_rule(n):
    t, w = gauss_legendre01(n)
    one = np.ones_like(t)
    # the six subregions pair up under x <-> y, which leaves the integrand unchanged
    d = np.concatenate([
        np.stack([t, one], 1),
        np.stack([one, t], 1),
        np.stack([-t, 1.0 - t], 1),
    ])
    weights = np.concatenate([w, w, w]) * 2.0
    return TouchingRule(_to_standard(d), np.zeros_like(d), weights)


@lru_cache(maxsize=None)
def edge_rule(n):
    t, w = gauss_legendre01(n)
    e2, e3 = (a.ravel() for a in np.meshgrid(t, t, indexing="ij"))
    ww = np.outer(w, w).ravel()
    one = np.ones_like(e2)
    regions = [
        ((one, e3), (1.0 - e2, 1.0 - e2), ww),
        ((one, one), (1.0 - e2 * e3, e2 * (1.0 - e3)), ww * e2),
        ((1.0 - e2, 1.0 - e2), (one, e2 * e3), ww * e2),
        ((1.0 - e2 * e3, e2 * (1.0 - e3)), (one, one), ww * e2),
        ((1.0 - e2 * e3, 1.0 - e2 * e3), (one, e2), ww * e2),
    ]
    x = np.concatenate([np.stack(r[0], 1) for r in regions])
    y = np.concatenate([np.stack(r[1], 1) for r in regions])
    weights = np.concatenate([r[2] for r in regions])
    return TouchingRule(_to_standard(x), _to_standard(y), weights)


@lru_cache(maxsize=None)
def vertex_rule(n):
    t, w = gauss_legendre01(n)
    e1, e2, e3 = (a.ravel() for a in np.meshgrid(t, t, t, indexing="ij"))
    ww = (w[:, None, None] * w[None, :, None] * w[None, None, :]).ravel() * e2
    p = np.stack([np.ones_like(e1), e1], 1)
    q = np.stack([e2, e2 * e3], 1)
    x = np.concatenate([p, q])
    y = np.concatenate([q, p])
    return TouchingRule(_to_standard(x), _to_standard(y), np.concatenate([ww, ww]))


def radial_factor(kind, s):
    """Closed-form integral of the scaling directions for a touching class."""
    if kind == 3:
        return 1.0 / ((4.0 - 2.0 * s) * (3.0 - 2.0 * s) * (2.0 - 2.0 * s))
    if kind == 2:
        return 1.0 / ((4.0 - 2.0 * s) * (3.0 - 2.0 * s))
    if kind == 1:
        return 1.0 / (4.0 - 2.0 * s)
    raise ValueError(f"no touching rule for {kind} shared vertices")
