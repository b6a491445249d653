"""Layered polar triangulations of the unit disk, graded toward the boundary.

Rings of vertices are placed at radii whose spacing follows the local size
``h * dist**((mu-1)/mu)`` (floored at ``h**mu`` next to the circle); adjacent
rings are stitched by a shortest-diagonal zipper, and the innermost ring is
fanned around a center vertex.
"""
from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SQRT3_2 = math.sqrt(3.0) / 2.0


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class GradedFamilyConfig:
    mu: float = 1.0
    h: float = 0.25
    c_grading: float = 2.0
    sigma_max: float = 6.0
    # circles (centred at the origin) that must coincide with a vertex ring
    anchor_radii: tuple = ()

    def __post_init__(self):
        if not self.mu >= 1.0:
            raise ValueError(f"grading exponent mu must be >= 1, got {self.mu}")
        if not self.h > 0.0:
            raise ValueError(f"mesh size h must be positive, got {self.h}")
        if not all(0.0 < a < 1.0 for a in self.anchor_radii):
            raise ValueError(f"anchor radii must lie in (0, 1), got {self.anchor_radii}")

    def local_size(self, dist):
        """Target element size at distance ``dist`` from the boundary."""
        dist = np.maximum(np.asarray(dist, dtype=float), self.h ** self.mu)
        return self.h * dist ** ((self.mu - 1.0) / self.mu)


@dataclass(frozen=True, eq=False)
class TriMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_vertex: np.ndarray
    interior_h: float
    dof_index: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.dof_index is None:
            dof = np.full(len(self.vertices), -1, dtype=np.int64)
            inner = np.flatnonzero(~self.boundary_vertex)
            dof[inner] = np.arange(len(inner))
            object.__setattr__(self, "dof_index", dof)
        for arr in (self.vertices, self.triangles, self.boundary_vertex, self.dof_index):
            arr.setflags(write=False)

    @property
    def n_dofs(self):
        return int((self.dof_index >= 0).sum())

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def dof_vertices(self):
        """Vertex id of each dof, in dof order."""
        return np.flatnonzero(self.dof_index >= 0)

    def corners(self, ids=None):
        t = self.triangles if ids is None else self.triangles[ids]
        return self.vertices[t]

    def areas(self):
        return signed_areas(self.corners())

    def diameters(self):
        return triangle_diameters(self.corners())

    def fingerprint(self):
        h = hashlib.sha1()
        h.update(np.ascontiguousarray(self.vertices).tobytes())
        h.update(np.ascontiguousarray(self.triangles).tobytes())
        return h.hexdigest()[:16]

    def vertex_triangles(self):
        """List of triangle ids incident to each vertex."""
        order = np.argsort(self.triangles.ravel(), kind="stable")
        verts = self.triangles.ravel()[order]
        splits = np.searchsorted(verts, np.arange(1, len(self.vertices)))
        return np.split(order // 3, splits)


def signed_areas(T):
    e1 = T[..., 1, :] - T[..., 0, :]
    e2 = T[..., 2, :] - T[..., 0, :]
    return 0.5 * (e1[..., 0] * e2[..., 1] - e1[..., 1] * e2[..., 0])


def triangle_diameters(T):
    return np.linalg.norm(T - np.roll(T, 1, axis=-2), axis=-1).max(axis=-1)


def inball_diameters(T):
    perim = np.linalg.norm(T - np.roll(T, 1, axis=-2), axis=-1).sum(axis=-1)
    return 4.0 * np.abs(signed_areas(T)) / perim


# ---------------------------------------------------------------------------
# ring construction
# ---------------------------------------------------------------------------


def _ring(radius, count, offset):
    theta = 2.0 * np.pi * (np.arange(count) + offset) / count
    return radius * np.stack([np.cos(theta), np.sin(theta)], 1), theta


def _zip_rings(inner_ids, inner_pts, inner_theta, outer_ids, outer_pts, outer_theta):
    """Triangulate the strip between two concentric closed rings."""
    n_in, n_out = len(inner_ids), len(outer_ids)
    if n_in == 1:
        return [(inner_ids[0], outer_ids[j], outer_ids[(j + 1) % n_out]) for j in range(n_out)]
    # start the outer ring at the vertex angularly closest to inner vertex 0
    gap = np.angle(np.exp(1j * (outer_theta - inner_theta[0])))
    j0 = int(np.argmin(np.abs(gap)))
    tris = []
    i = j = 0
    while i < n_in or j < n_out:
        ci, ni = i % n_in, (i + 1) % n_in
        cj, nj = (j0 + j) % n_out, (j0 + j + 1) % n_out
        if i == n_in:
            advance_inner = False
        elif j == n_out:
            advance_inner = True
        else:
            d_in = np.sum((inner_pts[ni] - outer_pts[cj]) ** 2)
            d_out = np.sum((outer_pts[nj] - inner_pts[ci]) ** 2)
            advance_inner = d_in < d_out
        if advance_inner:
            tris.append((inner_ids[ci], outer_ids[cj], inner_ids[ni]))
            i += 1
        else:
            tris.append((inner_ids[ci], outer_ids[cj], outer_ids[nj]))
            j += 1
    return tris


def _graded_radii(cfg):
    """Ring radii from the circle inward; the last entry is the innermost ring."""
    if cfg.mu == 1.0:
        k = max(1, int(math.ceil(1.0 / (SQRT3_2 * cfg.h) - 1e-9)))
        return [1.0 - i / k for i in range(k)]
    # equidistribute rings: Phi(t) = int_0^t dtau / local_size(tau) in closed form,
    # so the ring count and placement vary smoothly with h
    h, mu = cfg.h, cfg.mu
    delta = h ** mu

    def phi(t):
        return t / delta if t <= delta else 1.0 + mu * (t ** (1.0 / mu) - h) / h

    def phi_inv(v):
        return v * delta if v <= 1.0 else (h + h * (v - 1.0) / mu) ** mu

    total = phi(1.0) / SQRT3_2
    k = max(1, int(round(total)))
    return [1.0 - phi_inv(SQRT3_2 * total * i / k) for i in range(k)]


def _anchor(radii, anchors):
    """Piecewise-linear radial stretch putting the nearest interior ring on each anchor.
    ``radii`` is ordered innermost first and ends with the boundary ring 1.0."""
    r = np.array(radii, dtype=float)
    for a in sorted(anchors):
        inner = np.flatnonzero(r < 1.0)
        if not len(inner):
            break
        i = inner[np.argmin(np.abs(r[inner] - a))]
        lo = r <= r[i]
        ri = r[i]
        r[lo] *= a / ri
        r[~lo] = a + (r[~lo] - ri) * (1.0 - a) / (1.0 - ri)
    return r.tolist()


def _stack_rings(radii, sizes, center, boundary_ring):
    """Vertices and triangles for rings ordered innermost first."""
    pts, theta_list, id_list = [], [], []
    n = 0
    if center:
        pts.append(np.zeros((1, 2)))
        theta_list.append(np.zeros(1))
        id_list.append(np.array([0]))
        n = 1
    for k, (r, hk) in enumerate(zip(radii, sizes)):
        count = max(6, int(round(2.0 * np.pi * r / hk)))
        p, th = _ring(r, count, 0.5 * (k % 2))
        pts.append(p)
        theta_list.append(th)
        id_list.append(np.arange(n, n + count))
        n += count
    tris, layer = [], []
    for k in range(1, len(id_list)):
        strip = _zip_rings(id_list[k - 1], pts[k - 1], theta_list[k - 1],
                           id_list[k], pts[k], theta_list[k])
        tris += strip
        layer += [k - 1] * len(strip)
    return np.concatenate(pts), np.array(tris, dtype=np.int64), np.array(layer), id_list


def _orient(vertices, tris):
    flip = signed_areas(vertices[tris]) < 0
    tris = tris.copy()
    tris[flip, 1], tris[flip, 2] = tris[flip, 2].copy(), tris[flip, 1].copy()
    return tris


def build_disk_mesh(cfg):
    """Polygonal unit disk with all boundary vertices on the circle."""
    radii = _graded_radii(cfg)[::-1]
    if cfg.anchor_radii:
        radii = _anchor(radii, cfg.anchor_radii)
    dist = 1.0 - np.array(radii)
    # ring spacing is sqrt(3)/2 of the arc spacing (near-equilateral triangles)
    sizes = cfg.local_size(dist)
    verts, tris, layer, _ = _stack_rings(radii, sizes, center=True, boundary_ring=True)
    tris = _orient(verts, tris)
    bnd = np.zeros(len(verts), dtype=bool)
    bnd[np.isclose(np.hypot(verts[:, 0], verts[:, 1]), 1.0, atol=1e-14)] = True
    mesh = TriMesh(verts, tris, bnd, cfg.h)
    ratio = shape_ratios(mesh)
    bad = np.flatnonzero(ratio > cfg.sigma_max)
    if len(bad):
        worst = bad[np.argmax(ratio[bad])]
        ring = len(radii) - 1 - layer[worst]
        raise MeshError(
            f"layer {ring} (counted from the boundary) violates sigma_max={cfg.sigma_max}: "
            f"triangle {worst} has h_T/rho_T={ratio[worst]:.3f}")
    return mesh


def shape_ratios(mesh):
    T = mesh.corners()
    return triangle_diameters(T) / inball_diameters(T)


# ---------------------------------------------------------------------------
# validation and queries
# ---------------------------------------------------------------------------


@dataclass
class ValidationReport:
    sigma: float
    grading_residual: float
    n_dofs: int
    n_triangles: int
    sigma_max: float
    worst_shape_triangle: int
    worst_grading_triangle: int
    min_area: float

    @property
    def shape_ok(self):
        return self.sigma <= self.sigma_max

    @property
    def grading_ok(self):
        return self.grading_residual <= 1.0

    @property
    def passed(self):
        return self.shape_ok and self.grading_ok and self.min_area > 0.0

    def summary(self):
        return (f"N={self.n_dofs} M={self.n_triangles} sigma={self.sigma:.3f} "
                f"(max {self.sigma_max}) grading_residual={self.grading_residual:.3f} "
                f"{'PASS' if self.passed else 'FAIL'}")


def grading_bound(mesh, cfg):
    T = mesh.corners()
    touches = mesh.boundary_vertex[mesh.triangles].any(axis=1)
    dist = np.clip(1.0 - np.hypot(T[..., 0], T[..., 1]).max(axis=1), 0.0, None)
    interior = cfg.c_grading * cfg.h * dist ** ((cfg.mu - 1.0) / cfg.mu)
    return np.where(touches, cfg.c_grading * cfg.h ** cfg.mu, interior)


def validate_mesh(mesh, cfg):
    ratio = shape_ratios(mesh)
    resid = mesh.diameters() / grading_bound(mesh, cfg)
    return ValidationReport(
        sigma=float(ratio.max()),
        grading_residual=float(resid.max()),
        n_dofs=mesh.n_dofs,
        n_triangles=mesh.n_triangles,
        sigma_max=cfg.sigma_max,
        worst_shape_triangle=int(np.argmax(ratio)),
        worst_grading_triangle=int(np.argmax(resid)),
        min_area=float(mesh.areas().min()),
    )


class PairKind(enum.IntEnum):
    DISJOINT = 0
    SHARED_VERTEX = 1
    SHARED_EDGE = 2
    IDENTICAL = 3


@dataclass(frozen=True)
class PairClass:
    """Contact class of two triangles plus local orders listing shared vertices first.

    ``perm_a[k]`` and ``perm_b[k]`` address the same global vertex for
    ``k < n_shared``.
    """

    kind: PairKind
    perm_a: tuple
    perm_b: tuple

    @property
    def n_shared(self):
        return int(self.kind)


def classify_triangles(ta, tb):
    ta, tb = list(ta), list(tb)
    shared = [v for v in ta if v in tb]
    perm_a = [ta.index(v) for v in shared] + [i for i, v in enumerate(ta) if v not in shared]
    perm_b = [tb.index(v) for v in shared] + [i for i, v in enumerate(tb) if v not in shared]
    return PairClass(PairKind(len(shared)), tuple(perm_a), tuple(perm_b))


def classify_pair(mesh, ta, tb):
    return classify_triangles(mesh.triangles[ta], mesh.triangles[tb])


def star(mesh, t):
    """Ids of all triangles sharing at least a vertex with ``t`` (``t`` included)."""
    hit = np.isin(mesh.triangles, mesh.triangles[t]).any(axis=1)
    return set(np.flatnonzero(hit).tolist())


def ball_submesh(mesh, center, radius):
    """Triangles whose closure lies in the closed ball (whole-element selection)."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    d = np.linalg.norm(mesh.vertices - np.asarray(center, dtype=float), axis=1)
    inside = (d <= radius * (1.0 + 1e-12))[mesh.triangles].all(axis=1)
    return set(np.flatnonzero(inside).tolist())


def refine_uniform(mesh):
    """Red refinement: every triangle split into four; new boundary midpoints stay on chords."""
    tris = mesh.triangles
    edges = np.sort(np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]]), axis=1)
    uniq, inv = np.unique(edges, axis=0, return_inverse=True)
    inv = inv.reshape(3, -1).T
    nv = len(mesh.vertices)
    mids = 0.5 * (mesh.vertices[uniq[:, 0]] + mesh.vertices[uniq[:, 1]])
    verts = np.concatenate([mesh.vertices, mids])
    bnd_edge = mesh.boundary_vertex[uniq].all(axis=1)
    # an edge joining two boundary vertices is a boundary edge only if it has one triangle
    counts = np.bincount(inv.ravel(), minlength=len(uniq))
    bnd_edge &= counts == 1
    bnd = np.concatenate([mesh.boundary_vertex, bnd_edge])
    m01, m12, m20 = nv + inv[:, 0], nv + inv[:, 1], nv + inv[:, 2]
    v0, v1, v2 = tris.T
    new = np.concatenate([
        np.stack([v0, m01, m20], 1),
        np.stack([m01, v1, m12], 1),
        np.stack([m20, m12, v2], 1),
        np.stack([m12, m20, m01], 1),
    ])
    return TriMesh(verts, new, bnd, mesh.interior_h / 2.0)


# ---------------------------------------------------------------------------
# auxiliary band between the polygon and an outer circle
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AuxBand:
    """Annular triangulation between the boundary of a disk mesh and radius ``R_aux``.

    ``vertices`` are the band's own (non-boundary) vertices; ``triangles``
    index the combined array ``[mesh.vertices; vertices]``.
    ``outer_polygon`` lists combined vertex ids of the outer ring, CCW.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    R_aux: float
    outer_polygon: np.ndarray
    n_mesh_vertices: int

    def combined_vertices(self, mesh):
        return np.concatenate([mesh.vertices, self.vertices])

    def areas(self, mesh):
        return signed_areas(self.combined_vertices(mesh)[self.triangles])


def boundary_cycle(mesh):
    """Boundary vertex ids in CCW order."""
    ids = np.flatnonzero(mesh.boundary_vertex)
    ang = np.arctan2(mesh.vertices[ids, 1], mesh.vertices[ids, 0])
    return ids[np.argsort(ang)]


def boundary_edge_lengths(mesh):
    cyc = boundary_cycle(mesh)
    p = mesh.vertices[cyc]
    return np.linalg.norm(p - np.roll(p, -1, axis=0), axis=1)


def default_R_aux(mesh):
    hb = boundary_max_diameter(mesh)
    return 1.0 + max(0.25, 4.0 * hb)


def boundary_max_diameter(mesh):
    touches = mesh.boundary_vertex[mesh.triangles].any(axis=1)
    return float(mesh.diameters()[touches].max())


def build_aux_band(mesh, R_aux, growth=1.6):
    hb = boundary_max_diameter(mesh)
    if R_aux < 1.0 + 2.0 * hb - 1e-12:
        raise MeshError(
            f"R_aux={R_aux:.4g} too small: needs at least 1 + 2*{hb:.4g} = {1 + 2 * hb:.4g}")
    cyc = boundary_cycle(mesh)
    bpts = mesh.vertices[cyc]
    btheta = np.arctan2(bpts[:, 1], bpts[:, 0])
    h0 = float(np.linalg.norm(bpts - np.roll(bpts, -1, axis=0), axis=1).mean())
    # ring thicknesses grow geometrically, then are rescaled to land on R_aux
    steps = []
    total = 0.0
    step = SQRT3_2 * h0
    while total + step < (R_aux - 1.0) - 0.3 * step:
        steps.append(step)
        total += step
        step *= growth
    steps.append(step)
    total += step
    steps = np.array(steps) * ((R_aux - 1.0) / total)
    radii = 1.0 + np.cumsum(steps)
    nv = len(mesh.vertices)
    pts, tris = [], []
    prev_ids, prev_pts, prev_theta = cyc, bpts, btheta
    n = nv
    size = h0
    for k, r in enumerate(radii):
        size = max(size, steps[k] / SQRT3_2)
        count = max(len(prev_ids) // 2, 6, int(round(2.0 * np.pi * r / size)))
        count = min(count, len(prev_ids))
        p, th = _ring(r, count, 0.5 * ((k + 1) % 2) + 0.25)
        ids = np.arange(n, n + count)
        tris += _zip_rings(prev_ids, prev_pts, prev_theta, ids, p, th)
        pts.append(p)
        n += count
        prev_ids, prev_pts, prev_theta = ids, p, th
    verts = np.concatenate(pts)
    tris = _orient(np.concatenate([mesh.vertices, verts]), np.array(tris, dtype=np.int64))
    return AuxBand(verts, tris, float(R_aux), prev_ids.copy(), nv)


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------


def write_mesh(mesh, path):
    lines = ["dim 2", f"nv {len(mesh.vertices)}"]
    for (x, y), b in zip(mesh.vertices, mesh.boundary_vertex):
        lines.append(f"v {x:.17g} {y:.17g} {int(b)}")
    lines.append(f"nt {len(mesh.triangles)}")
    for i, j, k in mesh.triangles:
        lines.append(f"t {i} {j} {k}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path, interior_h=float("nan")):
    verts, flags, tris = [], [], []
    nv = nt = None
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        parts = line.split()
        if not parts:
            continue
        tag = parts[0]
        try:
            if tag == "dim":
                if parts[1] != "2":
                    raise MeshError(f"{path}:{lineno}: only dim 2 is supported")
            elif tag == "nv":
                nv = int(parts[1])
            elif tag == "v":
                verts.append((float(parts[1]), float(parts[2])))
                flags.append(parts[3] == "1")
            elif tag == "nt":
                nt = int(parts[1])
            elif tag == "t":
                tris.append((int(parts[1]), int(parts[2]), int(parts[3])))
            else:
                raise MeshError(f"{path}:{lineno}: unknown record {tag!r}")
        except (IndexError, ValueError) as exc:
            raise MeshError(f"{path}:{lineno}: malformed line {line!r}") from exc
    if nv != len(verts) or nt != len(tris):
        raise MeshError(f"{path}: counts do not match header (nv={nv}, nt={nt})")
    return TriMesh(np.array(verts, dtype=float).reshape(-1, 2),
                   np.array(tris, dtype=np.int64).reshape(-1, 3),
                   np.array(flags, dtype=bool), interior_h)
