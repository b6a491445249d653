"""Error functionals and log-log rate fits."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .analytic import getoor_l2_quantities
from .quadrature import gauss_triangle

FIELDS = ("err_l2", "err_energy", "err_local_hs")


@dataclass
class StudyRecord:
    study: str
    preset: str
    s: float
    mu: float
    level: int
    h: float
    N: int
    err_l2: float = float("nan")
    err_energy: float = float("nan")
    err_local_hs: float = float("nan")
    convention: str = "c_ds/2"
    quad_order: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in FIELDS:
            v = getattr(self, name)
            if v < 0:
                raise ValueError(f"{name} must be nonnegative, got {v}")


@dataclass(frozen=True)
class RateFit:
    slope: float
    stderr: float
    n_used: int
    dropped: tuple = ()


def _refine(T):
    m01 = 0.5 * (T[:, 0] + T[:, 1])
    m12 = 0.5 * (T[:, 1] + T[:, 2])
    m20 = 0.5 * (T[:, 2] + T[:, 0])
    kids = [np.stack(k, 1) for k in ((T[:, 0], m01, m20), (m01, T[:, 1], m12),
                                     (m20, m12, T[:, 2]), (m12, m20, m01))]
    return np.stack(kids, 1)


def l2_error(mesh, uh, u_exact, order=8, boundary_levels=1):
    """sqrt(sum_T int_T (u - u_h)^2); triangles touching the boundary get
    ``boundary_levels`` extra levels of red refinement (u ~ dist^s there)."""
    coeffs = uh.coeffs if hasattr(uh, "coeffs") else np.asarray(uh, dtype=float)
    if len(coeffs) != mesh.n_dofs:
        raise ValueError("coefficient vector does not match the mesh")
    rule = gauss_triangle(order)
    nodal = np.zeros(len(mesh.vertices))
    nodal[mesh.dof_vertices] = coeffs
    T = mesh.corners()
    vals = nodal[mesh.triangles]
    touches = mesh.boundary_vertex[mesh.triangles].any(axis=1)
    total = 0.0
    for sel, levels in ((~touches, 0), (touches, boundary_levels)):
        if not sel.any():
            continue
        sub, nv = T[sel], vals[sel]
        # barycentric corners of the sub-cells inside each parent triangle
        ref = np.eye(3)[None]
        for _ in range(levels):
            ref = _refine(ref).reshape(-1, 3, 3)
        bary = np.einsum("qk,ckj->cqj", rule.nodes, ref).reshape(-1, 3)
        w = np.tile(rule.weights, len(ref)) * 0.25 ** levels
        pts = np.einsum("qk,tkd->tqd", bary, sub)
        area = np.abs(mesh.areas()[sel])
        ue = np.asarray(u_exact(pts.reshape(-1, 2)), dtype=float).reshape(pts.shape[:2])
        diff = ue - nv @ bary.T
        total += float(np.einsum("q,tq,t->", w, diff * diff, area))
    return math.sqrt(total)


def energy_error(system, U, s):
    """sqrt(int u - F^T U), exact for f = 1 by Galerkin orthogonality."""
    coeffs = U.coeffs if hasattr(U, "coeffs") else np.asarray(U, dtype=float)
    gap = getoor_l2_quantities(s)["integral_u"] - float(system.F @ coeffs)
    if gap < 0:
        warnings.warn(f"energy identity negative ({gap:.3e}); clamped to 0", RuntimeWarning,
                      stacklevel=2)
        gap = 0.0
    return math.sqrt(gap)


def local_hs_error(gram, e):
    coeffs = e.coeffs if hasattr(e, "coeffs") else np.asarray(e, dtype=float)
    n = len(gram.dofs)
    if len(coeffs) != n:
        if len(coeffs) > int(gram.dofs.max(initial=-1)):
            coeffs = coeffs[gram.dofs]
        else:
            raise ValueError(f"dof-set mismatch: {len(coeffs)} values for {n} gram dofs")
    val = float(coeffs @ gram.G @ coeffs)
    return math.sqrt(max(val, 0.0))


def _ols(x, y):
    n = len(x)
    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    slope = float(((x - xm) * (y - ym)).sum()) / sxx
    resid = y - (ym + slope * (x - xm))
    if n > 2:
        stderr = math.sqrt(float((resid ** 2).sum()) / (n - 2) / sxx)
    else:
        stderr = float("nan")
    return slope, stderr, resid


def fit_rate(records, field, drop_coarse=True):
    """OLS slope of log(err) versus log(N), reported as the exponent of N."""
    if len(records) < 3:
        raise ValueError("rate fit needs at least three records")
    recs = sorted(records, key=lambda r: r.N)
    err = np.array([getattr(r, field) for r in recs], dtype=float)
    if not np.all(np.isfinite(err)) or np.any(err <= 0):
        raise ValueError(f"{field}: errors must be positive and finite")
    x = np.log([float(r.N) for r in recs])
    y = np.log(err)
    slope, stderr, resid = _ols(x, y)
    dropped = ()
    if drop_coarse and len(recs) >= 4 and abs(resid[0]) > max(3.0 * stderr, 1e-12):
        dropped = (recs[0].level,)
        slope, stderr, _ = _ols(x[1:], y[1:])
    return RateFit(slope, stderr, len(recs) - len(dropped), dropped)
