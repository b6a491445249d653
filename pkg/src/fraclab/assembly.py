"""Dense stiffness matrix, load vector and subdomain Gram matrices.

All pair integrals use the integrand (phi_i(x)-phi_i(y))(phi_j(x)-phi_j(y))
|x-y|^{-2-2s}. Every unordered triangle pair is visited once; pairs of
distinct triangles enter with weight 2 so the result equals the sum over
ordered pairs. Triangles of the auxiliary band carry no hats, so a pair
(mesh triangle, band triangle) only contributes the self part
int_T phi_i phi_j int_{T_b} k, which is how the exterior mass of the
polygonal domain is built near its boundary. Beyond the band the exterior of
the band's outer polygon is added in closed form.
"""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from .kernels import get_backend
from .mesh import build_aux_band, default_R_aux, triangle_diameters
from .quadrature import KernelParams, QuadConfig, gauss_triangle, polygon_tail_integral, touching_args

log = logging.getLogger(__name__)

CONVENTION_OPERATOR = "c_ds/2"
CONVENTION_PLAIN = "plain"
_MAGIC = b"FRACLAB1"


class AssemblyError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class StiffnessSystem:
    A: np.ndarray
    F: np.ndarray
    params: KernelParams
    fingerprint: str
    mu: float = float("nan")
    convention: str = CONVENTION_OPERATOR

    @property
    def n(self):
        return len(self.F)


@dataclass(frozen=True, eq=False)
class SubdomainGram:
    G: np.ndarray
    D: frozenset
    dofs: np.ndarray  # global dof ids, in local order
    convention: str = CONVENTION_PLAIN

    def restrict(self, coeffs):
        return np.asarray(coeffs, dtype=float)[self.dofs]


@dataclass
class _Geometry:
    coords: np.ndarray
    tris: np.ndarray
    active: np.ndarray
    dofs: np.ndarray
    n: int
    extra: dict = field(default_factory=dict)


def _triangle_data(coords, tris, rule):
    T = coords[tris]
    e1 = T[:, 1] - T[:, 0]
    e2 = T[:, 2] - T[:, 0]
    area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    if np.any(area <= 1e-14):
        bad = int(np.argmin(area))
        raise AssemblyError(f"degenerate triangle {bad} (area {area[bad]:.3e})")
    qpts = np.ascontiguousarray(np.einsum("qk,tkd->tqd", rule.nodes, T))
    qw = np.ascontiguousarray(area[:, None] * rule.weights[None, :])
    cen = T.mean(1)
    rad = np.linalg.norm(T - cen[:, None], axis=-1).max(1)
    return qpts, qw, cen, rad, triangle_diameters(T)


def _pair_sum(g, s, quad, backend=None):
    """Unnormalized sum over all unordered pairs (weight 2 off the diagonal)."""
    kern = get_backend(backend)
    rule = gauss_triangle(quad.far_degree)
    qpts, qw, cen, rad, diam = _triangle_data(g.coords, g.tris, rule)
    P = np.zeros((g.n, g.n))
    W = np.zeros(qw.shape)
    sel = np.arange(len(g.tris), dtype=np.int64)
    touch, near = kern.far_field(g.tris, g.active, g.dofs, sel, qpts, qw, rule.nodes,
                                 cen, rad, diam, s, quad.mid_ratio, P, W)
    kern.self_terms(g.tris, g.active, g.dofs, qw, rule.nodes, W, P)
    if len(touch):
        # the union-layout kernel needs shared vertices listed first
        tri_a, tri_b, ns = _touching_order(g.tris, touch)
        out = kern.touching_pairs(g.coords, tri_a, tri_b, ns, *touching_args(s, quad.touching_points, quad.n_vertex))
        _scatter_union(P, g.dofs, tri_a, tri_b, ns, out, touch)
    if len(near):
        out = kern.near_pairs(g.coords, g.tris, near, s, quad.far_ratio, quad.near_max_depth,
                              *quad.near_rule_args())
        ids = g.dofs[np.concatenate([g.tris[near[:, 0]], g.tris[near[:, 1]]], 1)]
        _scatter(P, ids, out, np.full(len(near), 2.0))
    if not np.all(np.isfinite(P)):
        raise AssemblyError("non-finite pair contribution")
    g.extra.update(n_touch=len(touch), n_near=len(near))
    return P


def _touching_order(tris, pairs):
    ta, tb = tris[pairs[:, 0]], tris[pairs[:, 1]]
    hit = ta[:, :, None] == tb[:, None, :]
    ns = hit.sum((1, 2)).astype(np.int64)
    tri_a = np.empty_like(ta)
    tri_b = np.empty_like(tb)
    for m in range(len(pairs)):
        sa = [i for i in range(3) if hit[m, i].any()]
        sb = [int(np.flatnonzero(hit[m, i])[0]) for i in sa]
        tri_a[m] = ta[m, sa + [i for i in range(3) if i not in sa]]
        tri_b[m] = tb[m, sb + [j for j in range(3) if j not in sb]]
    return tri_a, tri_b, ns


def _scatter_union(P, dofs, tri_a, tri_b, ns, out, pairs):
    ids = np.full((len(ns), 6), -1, dtype=np.int64)
    ids[:, :3] = dofs[tri_a]
    for k in (1, 2, 3):
        m = ns == k
        ids[m, 3:6 - k] = dofs[tri_b[m, k:]]
    wgt = np.where(pairs[:, 0] == pairs[:, 1], 1.0, 2.0)
    _scatter(P, ids, out, wgt)


def _scatter(P, ids, blocks, wgt):
    di = np.broadcast_to(ids[:, :, None], blocks.shape)
    dj = np.broadcast_to(ids[:, None, :], blocks.shape)
    ok = (di >= 0) & (dj >= 0)
    np.add.at(P, (di[ok], dj[ok]), (blocks * wgt[:, None, None])[ok])


def _outer_mass(mesh, polygon, s, degree):
    rule = gauss_triangle(degree)
    T = mesh.corners()
    pts = np.einsum("qk,tkd->tqd", rule.nodes, T)
    psi = polygon_tail_integral(pts, polygon, s)
    area = np.abs(mesh.areas())
    return np.einsum("q,tq,qi,qj->tij", rule.weights, psi * area[:, None], rule.nodes, rule.nodes)


def _mesh_geometry(mesh, band):
    coords = np.concatenate([mesh.vertices, band.vertices])
    tris = np.ascontiguousarray(np.concatenate([mesh.triangles, band.triangles]).astype(np.int64))
    active = np.zeros(len(tris), dtype=np.bool_)
    active[:mesh.n_triangles] = True
    dofs = np.concatenate([mesh.dof_index, np.full(len(band.vertices), -1)]).astype(np.int64)
    return _Geometry(coords, tris, active, dofs, mesh.n_dofs)


def exterior_weight_matrix(mesh, band, s, quad):
    """P-contribution of 2 * int phi_i phi_j psi with psi from beyond the band polygon."""
    poly = np.concatenate([mesh.vertices, band.vertices])[band.outer_polygon]
    mass = _outer_mass(mesh, poly, s, quad.tail_degree)
    out = np.zeros((mesh.n_dofs, mesh.n_dofs))
    _scatter(out, mesh.dof_index[mesh.triangles].astype(np.int64), mass,
             np.full(mesh.n_triangles, 2.0))
    return out


def assemble_pair_matrix(mesh, band, params, quad=None, backend=None):
    """Unnormalized form: pairs over (mesh + band) plus the outer exterior term."""
    quad = quad or QuadConfig()
    if band.n_mesh_vertices != len(mesh.vertices):
        raise AssemblyError("band was built for a different mesh")
    g = _mesh_geometry(mesh, band)
    P = _pair_sum(g, params.s, quad, backend)
    P += exterior_weight_matrix(mesh, band, params.s, quad)
    return 0.5 * (P + P.T)


def assemble_stiffness(mesh, band=None, params=None, quad=None, f=None, backend=None, mu=float("nan")):
    if params is None:
        raise ValueError("KernelParams required")
    if band is None:
        band = build_aux_band(mesh, default_R_aux(mesh))
    P = assemble_pair_matrix(mesh, band, params, quad, backend)
    A = 0.5 * params.c_ds * P
    F = assemble_load(mesh, f if f is not None else (lambda x: np.ones(len(x))))
    for arr in (A, F):
        arr.setflags(write=False)
    return StiffnessSystem(A, F, params, mesh.fingerprint(), mu, CONVENTION_OPERATOR)


def assemble_load(mesh, f, order=5):
    rule = gauss_triangle(order)
    T = mesh.corners()
    pts = np.einsum("qk,tkd->tqd", rule.nodes, T)
    vals = np.asarray(f(pts.reshape(-1, 2)), dtype=float).reshape(pts.shape[:2])
    area = np.abs(mesh.areas())
    loc = np.einsum("q,tq,qi->ti", rule.weights, vals * area[:, None], rule.nodes)
    F = np.zeros(mesh.n_dofs)
    ids = mesh.dof_index[mesh.triangles]
    ok = ids >= 0
    np.add.at(F, ids[ok], loc[ok])
    return F


def subdomain_dofs(mesh, D):
    verts = np.unique(mesh.triangles[sorted(D)])
    d = mesh.dof_index[verts]
    return np.sort(d[d >= 0])


def assemble_subdomain_gram(mesh, D, params, quad=None, backend=None):
    """Plain Gagliardo form over D x D (no operator constant, no exterior)."""
    D = frozenset(int(t) for t in D)
    if not D:
        raise ValueError("subdomain D is empty")
    quad = quad or QuadConfig()
    tri_ids = np.array(sorted(D))
    dofs = subdomain_dofs(mesh, D)
    local = np.full(len(mesh.vertices), -1, dtype=np.int64)
    gdof = mesh.dof_index
    pos = np.full(mesh.n_dofs, -1, dtype=np.int64)
    pos[dofs] = np.arange(len(dofs))
    inner = gdof >= 0
    local[inner] = pos[gdof[inner]]
    g = _Geometry(mesh.vertices, np.ascontiguousarray(mesh.triangles[tri_ids].astype(np.int64)),
                  np.ones(len(tri_ids), dtype=np.bool_), local, len(dofs))
    G = _pair_sum(g, params.s, quad, backend)
    G = 0.5 * (G + G.T)
    G.setflags(write=False)
    return SubdomainGram(G, D, dofs, CONVENTION_PLAIN)


# ---------------------------------------------------------------------------
# binary snapshots
# ---------------------------------------------------------------------------


def dump_system(system, path):
    n = system.n
    conv = 1 if system.convention == CONVENTION_OPERATOR else 0
    iu = np.triu_indices(n)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<qddq", n, system.params.s, system.mu, conv))
        fh.write(np.ascontiguousarray(system.A[iu], dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(system.F, dtype="<f8").tobytes())


def load_system(path):
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path}: not a stiffness snapshot")
        n, s, mu, conv = struct.unpack("<qddq", fh.read(32))
        m = n * (n + 1) // 2
        upper = np.frombuffer(fh.read(8 * m), dtype="<f8")
        F = np.frombuffer(fh.read(8 * n), dtype="<f8").astype(float)
    A = np.zeros((n, n))
    A[np.triu_indices(n)] = upper
    A = A + np.triu(A, 1).T
    conv = CONVENTION_OPERATOR if conv == 1 else CONVENTION_PLAIN
    return StiffnessSystem(A, F, KernelParams(s), "", mu, conv)


# ---------------------------------------------------------------------------
# localized decompositions of the form (used as consistency checks)
# ---------------------------------------------------------------------------


def _ordered_disjoint_blocks(g, s, quad, backend=None):
    """All ordered disjoint pairs (a, b) of active triangles with their 6x6 blocks."""
    kern = get_backend(backend)
    act = np.flatnonzero(g.active)
    tris = g.tris
    a, b = np.meshgrid(act, act, indexing="ij")
    a, b = a.ravel(), b.ravel()
    touch = (tris[a][:, :, None] == tris[b][:, None, :]).any((1, 2))
    pairs = np.stack([a[~touch], b[~touch]], 1).astype(np.int64)
    blocks = kern.near_pairs(g.coords, tris, pairs, s, quad.far_ratio, quad.near_max_depth,
                             *quad.near_rule_args())
    return pairs, blocks


def faermann_inner_product(mesh, band, params, v, w, quad=None, backend=None):
    """sum_T [ int_T int_{S_T} (dv)(dw) k + 2 int_T int_{S_T^c} v(x)(w(x)-w(y)) k ].

    S_T is the patch of triangles touching T; its complement includes the
    exterior of the polygonal domain, where v and w vanish. Returns the plain
    (unnormalized) value.
    """
    quad = quad or QuadConfig()
    kern = get_backend(backend)
    s = params.s
    g = _mesh_geometry(mesh, band)
    nt = mesh.n_triangles
    full_v = np.zeros(len(g.coords))
    full_w = np.zeros(len(g.coords))
    inner = np.flatnonzero(g.dofs >= 0)
    full_v[inner] = np.asarray(v)[g.dofs[inner]]
    full_w[inner] = np.asarray(w)[g.dofs[inner]]
    tris = g.tris
    # star part: every ordered touching pair inside the mesh
    a, b = np.meshgrid(np.arange(nt), np.arange(nt), indexing="ij")
    a, b = a.ravel(), b.ravel()
    touch = (tris[a][:, :, None] == tris[b][:, None, :]).any((1, 2))
    tp = np.stack([a[touch], b[touch]], 1)
    tri_a, tri_b, ns = _touching_order(tris, tp)
    out = kern.touching_pairs(g.coords, tri_a, tri_b, ns, *touching_args(s, quad.touching_points, quad.n_vertex))
    star = 0.0
    for m in range(len(tp)):
        k = ns[m]
        verts = np.concatenate([tri_a[m], tri_b[m, k:]])
        n = len(verts)
        star += full_v[verts] @ out[m, :n, :n] @ full_w[verts]
    # far part inside the mesh: rows of the block for T only
    pairs, blocks = _ordered_disjoint_blocks(_Geometry(g.coords, tris[:nt], np.ones(nt, bool),
                                                       g.dofs, g.n), s, quad, backend)
    va = full_v[tris[pairs[:, 0]]]
    wa = full_w[tris[pairs[:, 0]]]
    wb = full_w[tris[pairs[:, 1]]]
    far = np.einsum("ni,nij,nj->", va, blocks[:, :3, :3], wa)
    far += np.einsum("ni,nij,nj->", va, blocks[:, :3, 3:], wb)
    # exterior of the domain: band pairs plus the outer closed form
    ext = _exterior_psi_form(mesh, band, g, s, quad, backend)
    return star + 2.0 * far + 2.0 * float(np.asarray(v) @ ext @ np.asarray(w))


def _exterior_psi_form(mesh, band, g, s, quad, backend):
    """Matrix of int phi_i phi_j psi with psi the full exterior mass."""
    nt = mesh.n_triangles
    # a pair sum with no mesh-mesh pairs: mark band triangles as the only partners
    kern = get_backend(backend)
    rule = gauss_triangle(quad.far_degree)
    qpts, qw, cen, rad, diam = _triangle_data(g.coords, g.tris, rule)
    P = np.zeros((g.n, g.n))
    W = np.zeros(qw.shape)
    for t in range(nt):
        sel = np.concatenate([[t], np.arange(nt, len(g.tris))]).astype(np.int64)
        touch, near = kern.far_field(g.tris, g.active, g.dofs, sel, qpts, qw, rule.nodes,
                                     cen, rad, diam, s, quad.mid_ratio, P, W)
        touch = touch[touch[:, 0] != touch[:, 1]]
        if len(touch):
            tri_a, tri_b, ns = _touching_order(g.tris, touch)
            out = kern.touching_pairs(g.coords, tri_a, tri_b, ns, *touching_args(s, quad.touching_points, quad.n_vertex))
            _scatter_union(P, g.dofs, tri_a, tri_b, ns, out, touch)
        if len(near):
            out = kern.near_pairs(g.coords, g.tris, near, s, quad.far_ratio, quad.near_max_depth,
                                  *quad.near_rule_args())
            ids = g.dofs[np.concatenate([g.tris[near[:, 0]], g.tris[near[:, 1]]], 1)]
            _scatter(P, ids, out, np.full(len(near), 2.0))
    kern.self_terms(g.tris, g.active, g.dofs, qw, rule.nodes, W, P)
    P += exterior_weight_matrix(mesh, band, s, quad)
    # every contribution above was doubled (unordered-pair weight)
    return 0.25 * (P + P.T)


def symmetry_lemma_sides(mesh, v, w, params, quad=None, backend=None):
    """Both sides of  sum_T int_T int_{S_T^c} v(y) w(x) k  =  sum_T int_T int_{S_T^c} v(x) w(y) k
    for discrete v, w (they vanish outside the mesh, so S_T^c reduces to the
    non-touching triangles).  Every ordered pair is integrated separately, so
    the two sides come from independent quadratures of transposed pairs."""
    quad = quad or QuadConfig()
    g = _Geometry(mesh.vertices, np.ascontiguousarray(mesh.triangles.astype(np.int64)),
                  np.ones(mesh.n_triangles, dtype=np.bool_), mesh.dof_index.astype(np.int64),
                  mesh.n_dofs)
    fv = np.zeros(len(g.coords))
    fw = np.zeros(len(g.coords))
    inner = np.flatnonzero(g.dofs >= 0)
    fv[inner] = np.asarray(v)[g.dofs[inner]]
    fw[inner] = np.asarray(w)[g.dofs[inner]]
    pairs, blocks = _ordered_disjoint_blocks(g, params.s, quad, backend)
    # cross block of (a, b) is -int_a int_b lambda_a(x) lambda_b(y) k
    X = -blocks[:, :3, 3:]
    ta, tb = g.tris[pairs[:, 0]], g.tris[pairs[:, 1]]
    left = float(np.einsum("ni,nij,nj->", fw[ta], X, fv[tb]))
    right = float(np.einsum("ni,nij,nj->", fv[ta], X, fw[tb]))
    return left, right
