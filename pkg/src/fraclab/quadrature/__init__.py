"""Pair quadrature for the kernel |x - y|^{-2-2s} on triangles."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..analytic import c_ds
from ..kernels import get_backend
from ..mesh import PairClass, PairKind, classify_triangles
from .rules import (GaussRule, edge_rule, gauss_legendre01, gauss_triangle,
                    identical_rule, radial_factor, vertex_rule)
from .tail import polygon_tail_integral, tail_integral

__all__ = [
    "GaussRule", "KernelParams", "QuadConfig", "gauss_triangle", "gauss_legendre01",
    "pair_interaction", "tail_integral", "polygon_tail_integral", "touching_args",
]

DEGENERATE_AREA = 1e-14


@dataclass(frozen=True)
class KernelParams:
    s: float
    d: int = 2

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise ValueError(f"fractional order must lie in (0, 1), got {self.s}")
        if self.d != 2:
            raise ValueError("only d = 2 is supported")

    @property
    def c_ds(self):
        return c_ds(self.d, self.s)


@dataclass(frozen=True)
class QuadConfig:
    """Quadrature knobs.

    Distances are gaps between bounding circles, relative to the larger
    diameter of the pair.

    far_degree: rule for pairs with gap >= mid_ratio (5 -> 7 points).
    near_degree: rule for pairs with far_ratio <= gap < mid_ratio, and for
        the sub-pairs produced when closer pairs are subdivided toward each
        other (up to near_max_depth levels).
    touching_points: Gauss points per reduced direction for touching pairs.
    vertex_points: the same for pairs sharing only a vertex (0 -> touching_points);
        that integrand is far less singular and it is the most numerous class.
    wide_degree, wide_ratio: near-field leaves whose exact gap is at least
        wide_ratio diameters use this cheaper rule (0 -> near_degree).
    tail_degree: rule for the closed-form exterior term.
    """

    far_degree: int = 5
    touching_points: int = 16
    far_ratio: float = 1.0
    mid_ratio: float = 3.0
    near_max_depth: int = 6
    near_degree: int = 9
    tail_degree: int = 12
    vertex_points: int = 10
    wide_degree: int = 6
    wide_ratio: float = 2.0

    @property
    def n_vertex(self):
        return self.vertex_points or self.touching_points

    def __post_init__(self):
        if self.wide_ratio < self.far_ratio:
            raise ValueError("wide_ratio must be at least far_ratio")
        if self.mid_ratio < self.far_ratio:
            raise ValueError("mid_ratio must be at least far_ratio")
        if min(self.far_degree, self.near_degree, self.tail_degree, self.touching_points) < 1 \
                or min(self.vertex_points, self.wide_degree) < 0:
            raise ValueError("quadrature orders must be positive")

    def label(self):
        wide = self.wide_degree or self.near_degree
        return f"f{self.far_degree}n{self.near_degree}w{wide}t{self.touching_points}v{self.n_vertex}"

    def near_rule_args(self):
        """Trailing rule arguments of the near_pairs kernels."""
        lo = gauss_triangle(self.near_degree)
        hi = gauss_triangle(self.near_degree + 4)
        wide = gauss_triangle(self.wide_degree or self.near_degree)
        return lo.nodes, lo.weights, hi.nodes, hi.weights, wide.nodes, wide.weights, self.wide_ratio


def touching_args(s, n, n_vertex=None):
    ir, er, vr = identical_rule(n), edge_rule(n), vertex_rule(n_vertex or n)
    return (s, radial_factor(3, s), radial_factor(2, s), radial_factor(1, s),
            ir.x, ir.weights, er.x, er.y, er.weights, vr.x, vr.y, vr.weights)


def _classify_geometry(Ta, Tb):
    ids_a = [0, 1, 2]
    ids_b = []
    for j in range(3):
        hit = [i for i in range(3) if np.array_equal(Ta[i], Tb[j])]
        ids_b.append(hit[0] if hit else 3 + j)
    return classify_triangles(ids_a, ids_b)


def union_layout(cls):
    """(slot of each a-vertex, slot of each b-vertex) in original local order."""
    k = cls.n_shared
    slot_a = [0, 0, 0]
    slot_b = [0, 0, 0]
    for pos, i in enumerate(cls.perm_a):
        slot_a[i] = pos
    for pos, j in enumerate(cls.perm_b):
        slot_b[j] = pos if pos < k else 3 + pos - k
    return slot_a, slot_b


def pair_interaction(Ta, Tb, cls=None, params=None, order=None, config=None, backend=None):
    """Local interaction matrix of the 3 + 3 hats of a triangle pair.

    Returns the integral of (phi_i(x)-phi_i(y))(phi_j(x)-phi_j(y))|x-y|^{-2-2s}
    over x in Ta, y in Tb, on the union of distinct vertices: slots follow
    ``cls.perm_a`` then the non-shared vertices of ``Tb`` in ``cls.perm_b``
    order (size 3, 4, 5 or 6).

    With ``order=None`` the rules of ``config`` are used, as in assembly:
    touching_points / vertex_points for touching pairs, near_degree for
    disjoint ones. An explicit ``order`` overrides all of them. The pair is
    evaluated in a canonical triangle order, so swapping Ta and Tb only
    permutes the result.
    """
    if params is None:
        raise ValueError("KernelParams required")
    cfg = config or QuadConfig()
    Ta = np.asarray(Ta, dtype=float)
    Tb = np.asarray(Tb, dtype=float)
    for T in (Ta, Tb):
        e1, e2 = T[1] - T[0], T[2] - T[0]
        if abs(e1[0] * e2[1] - e1[1] * e2[0]) < 2 * DEGENERATE_AREA:
            raise ValueError("degenerate triangle")
    if cls is None:
        cls = _classify_geometry(Ta, Tb)
    if _canonical_key(Tb) < _canonical_key(Ta):
        # evaluate in a fixed triangle order so swapping the pair is exact
        back = _classify_geometry(Tb, Ta)
        M = _pair_kernel(Tb, Ta, back, params, order, cfg, backend)
        src = _union_points(Tb, Ta, back)
        dst = _union_points(Ta, Tb, cls)
        perm = [int(np.flatnonzero(np.all(src == v, axis=1))[0]) for v in dst]
        return M[np.ix_(perm, perm)]
    return _pair_kernel(Ta, Tb, cls, params, order, cfg, backend)


def _canonical_key(T):
    # sorted side lengths: invariant under rigid motions, ordered under dilation
    return tuple(sorted(np.hypot(*(T - np.roll(T, 1, axis=0)).T)))


def _union_points(Ta, Tb, cls):
    k = cls.n_shared
    return np.array([Ta[i] for i in cls.perm_a] + [Tb[j] for j in cls.perm_b[k:]])


def _pair_kernel(Ta, Tb, cls, params, order, cfg, backend):
    kern = get_backend(backend)
    k = cls.n_shared
    if k > 0:
        coords = np.concatenate([Ta[list(cls.perm_a)], Tb[list(cls.perm_b)]])
        tri_a = np.array([[0, 1, 2]])
        tri_b = np.array([[3, 4, 5]])
        # shared vertices must carry identical ids
        tri_b[0, :k] = tri_a[0, :k]
        out = kern.touching_pairs(coords, tri_a, tri_b, np.array([k]),
                                  *touching_args(params.s, order or cfg.touching_points,
                                                 order or cfg.n_vertex))
        n = 6 - k
        return out[0, :n, :n]
    coords = np.concatenate([Ta, Tb])
    tris = np.array([[0, 1, 2], [3, 4, 5]])
    order = order or cfg.near_degree
    rule = gauss_triangle(order)
    hi = gauss_triangle(order + 4)
    out = kern.near_pairs(coords, tris, np.array([[0, 1]]), params.s, cfg.far_ratio,
                          cfg.near_max_depth, rule.nodes, rule.weights, hi.nodes, hi.weights,
                          rule.nodes, rule.weights, np.inf)
    return out[0]
