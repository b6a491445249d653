"""Pure-numpy versions of the pair kernels (same contracts as ``_numba``)."""
import numpy as np

TIE = 1e-9  # same tie slack as the numba kernels


def _n_shared_rows(tris, a, bs):
    return (tris[bs][:, :, None] == tris[a][None, None, :]).sum(axis=(1, 2))


def far_field(tris, active, dofs, sel, qpts, qw, lam, cen, rad, diam, s, far_ratio, P, W):
    expo = -(1.0 + s)
    touch, near = [], []
    tri_dofs = dofs[tris]
    for ii, a in enumerate(sel):
        bs = sel[ii:]
        keep = active[a] | active[bs]
        bs = bs[keep]
        shared = _n_shared_rows(tris, a, bs) > 0
        touch.append(np.stack([np.full(shared.sum(), a), bs[shared]], 1))
        bs = bs[~shared]
        gap = np.hypot(*(cen[a] - cen[bs]).T) - rad[a] - rad[bs]
        is_near = gap < far_ratio * np.maximum(diam[a], diam[bs]) * (1.0 + TIE)
        near.append(np.stack([np.full(is_near.sum(), a), bs[is_near]], 1))
        bs = bs[~is_near]
        if len(bs) == 0:
            continue
        d = qpts[a][None, :, None, :] - qpts[bs][:, None, :, :]
        K = np.einsum("bpqd,bpqd->bpq", d, d) ** expo
        if active[a]:
            W[a] += 2.0 * np.einsum("bpq,bq->p", K, qw[bs])
        act_b = active[bs]
        if act_b.any():
            W[bs[act_b]] += 2.0 * np.einsum("bpq,p->bq", K[act_b], qw[a])
        if active[a] and act_b.any():
            bb = bs[act_b]
            X = np.einsum("p,pi,bpq,bq,qj->bij", qw[a], lam, K[act_b], qw[bb], lam)
            di = np.broadcast_to(tri_dofs[a][None, :, None], X.shape)
            dj = np.broadcast_to(tri_dofs[bb][:, None, :], X.shape)
            ok = (di >= 0) & (dj >= 0)
            np.add.at(P, (di[ok], dj[ok]), -2.0 * X[ok])
            np.add.at(P, (dj[ok], di[ok]), -2.0 * X[ok])
    return (np.concatenate(touch).astype(np.int64).reshape(-1, 2),
            np.concatenate(near).astype(np.int64).reshape(-1, 2))


def self_terms(tris, active, dofs, qw, lam, W, P):
    act = np.flatnonzero(active)
    S = np.einsum("ap,ap,pi,pj->aij", qw[act], W[act], lam, lam)
    td = dofs[tris[act]]
    di = np.broadcast_to(td[:, :, None], S.shape)
    dj = np.broadcast_to(td[:, None, :], S.shape)
    ok = (di >= 0) & (dj >= 0)
    np.add.at(P, (di[ok], dj[ok]), S[ok])


def _outer_accumulate(phi, val, nslot):
    phi = phi[..., :nslot]
    return np.einsum("mq,mqi,mqj->mij", val, phi, phi)


def touching_pairs(coords, tri_a, tri_b, ns, s, rad3, rad2, rad1,
                   ix, iw, ex, ey, ew, vx, vy, vw):
    expo = -(1.0 + s)
    out = np.zeros((len(tri_a), 6, 6))
    A = coords[tri_a]
    B = coords[tri_b]
    e1 = A[:, 1] - A[:, 0]
    e2 = A[:, 2] - A[:, 0]
    ja = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    f1 = B[:, 1] - B[:, 0]
    f2 = B[:, 2] - B[:, 0]
    jb = np.abs(f1[:, 0] * f2[:, 1] - f1[:, 1] * f2[:, 0])

    m = np.flatnonzero(ns == 3)
    if len(m):
        r = ix[None, :, 0, None] * e1[m, None, :] + ix[None, :, 1, None] * e2[m, None, :]
        val = iw[None, :] * np.einsum("mqd,mqd->mq", r, r) ** expo
        phi = np.stack([-ix[:, 0] - ix[:, 1], ix[:, 0], ix[:, 1]], 1)
        loc = np.einsum("mq,qi,qj->mij", val, phi, phi)
        out[m, :3, :3] = loc * (rad3 * ja[m] ** 2)[:, None, None]

    for k, px, py, pw, rad in ((2, ex, ey, ew, rad2), (1, vx, vy, vw, rad1)):
        m = np.flatnonzero(ns == k)
        if not len(m):
            continue
        x = A[m, 0, None, :] + px[None, :, 0, None] * e1[m, None, :] + px[None, :, 1, None] * e2[m, None, :]
        y = B[m, 0, None, :] + py[None, :, 0, None] * f1[m, None, :] + py[None, :, 1, None] * f2[m, None, :]
        r = x - y
        val = pw[None, :] * np.einsum("mqd,mqd->mq", r, r) ** expo
        nq = len(pw)
        phi = np.zeros((nq, 6))
        phi[:, 0] = 1.0 - px[:, 0] - px[:, 1] - (1.0 - py[:, 0] - py[:, 1])
        if k == 2:
            phi[:, 1] = px[:, 0] - py[:, 0]
            phi[:, 2] = px[:, 1]
            phi[:, 3] = -py[:, 1]
        else:
            phi[:, 1] = px[:, 0]
            phi[:, 2] = px[:, 1]
            phi[:, 3] = -py[:, 0]
            phi[:, 4] = -py[:, 1]
        nslot = 6 - k
        loc = np.einsum("mq,qi,qj->mij", val, phi[:, :nslot], phi[:, :nslot])
        out[m, :nslot, :nslot] = loc * (rad * ja[m] * jb[m])[:, None, None]
    return out


def _subdivide(T):
    """Red refinement of triangles (n, 3, 2) -> (n, 4, 3, 2)."""
    m01 = 0.5 * (T[:, 0] + T[:, 1])
    m12 = 0.5 * (T[:, 1] + T[:, 2])
    m20 = 0.5 * (T[:, 2] + T[:, 0])
    return np.stack([
        np.stack([T[:, 0], m01, m20], 1),
        np.stack([m01, T[:, 1], m12], 1),
        np.stack([m20, m12, T[:, 2]], 1),
        np.stack([m12, m20, m01], 1),
    ], 1)


def _bary(T, pts):
    """Barycentric coordinates of pts (n, q, 2) w.r.t. triangles T (n, 3, 2)."""
    J = np.stack([T[:, 1] - T[:, 0], T[:, 2] - T[:, 0]], -1)
    uv = np.linalg.solve(J[:, None], (pts - T[:, None, 0])[..., None])[..., 0]
    return np.concatenate([1.0 - uv.sum(-1, keepdims=True), uv], -1)


def _tri_size(T):
    c = T.mean(1)
    rad = np.linalg.norm(T - c[:, None], axis=-1).max(1)
    diam = np.linalg.norm(T - np.roll(T, 1, axis=1), axis=-1).max(1)
    e1 = T[:, 1] - T[:, 0]
    e2 = T[:, 2] - T[:, 0]
    area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    return c, rad, diam, area


def _seg_dist2(P, A, B):
    e = B - A
    t = np.clip(np.einsum("nd,nd->n", P - A, e) / np.einsum("nd,nd->n", e, e), 0.0, 1.0)
    d = P - A - t[:, None] * e
    return np.einsum("nd,nd->n", d, d)


def _tri_gap(SA, SB):
    """Exact distance between disjoint triangles (n, 3, 2) x (n, 3, 2)."""
    d = np.full(len(SA), np.inf)
    for i in range(3):
        for j in range(3):
            j2 = (j + 1) % 3
            d = np.minimum(d, _seg_dist2(SA[:, i], SB[:, j], SB[:, j2]))
            d = np.minimum(d, _seg_dist2(SB[:, i], SA[:, j], SA[:, j2]))
    return np.sqrt(d)


def near_pairs(coords, tris, pairs, s, far_ratio, max_depth, nodes, wts, nodes_hi, wts_hi,
               nodes_mid, wts_mid, mid_split):
    expo = -(1.0 + s)
    out = np.zeros((len(pairs), 6, 6))
    if len(pairs) == 0:
        return out
    PA = coords[tris[pairs[:, 0]]]
    PB = coords[tris[pairs[:, 1]]]
    owner = np.arange(len(pairs))
    SA, SB = PA.copy(), PB.copy()
    depth = 0
    while len(owner):
        ca, ra, da, aa = _tri_size(SA)
        cb, rb, db, ab = _tri_size(SB)
        gap = np.linalg.norm(ca - cb, axis=1) - ra - rb
        close = gap < far_ratio * np.maximum(da, db) * (1.0 + TIE)
        if close.any():
            gap[close] = _tri_gap(SA[close], SB[close])
        admissible = gap >= far_ratio * np.maximum(da, db) * (1.0 + TIE)
        done = admissible | (depth >= max_depth)
        if depth >= max_depth:
            groups = ((done, nodes_hi, wts_hi),)
        else:
            wide = gap >= mid_split * np.maximum(da, db) * (1.0 + TIE)
            groups = ((done & ~wide, nodes, wts), (done & wide, nodes_mid, wts_mid))
        for sel, nd, wt in groups:
            if not sel.any():
                continue
            o = owner[sel]
            xa = np.einsum("qk,nkd->nqd", nd, SA[sel])
            xb = np.einsum("qk,nkd->nqd", nd, SB[sel])
            la = _bary(PA[o], xa)
            lb = _bary(PB[o], xb)
            d = xa[:, :, None, :] - xb[:, None, :, :]
            K = np.einsum("npqd,npqd->npq", d, d) ** expo
            K *= (aa[sel] * ab[sel])[:, None, None] * wt[None, :, None] * wt[None, None, :]
            blk = np.empty((len(o), 6, 6))
            blk[:, :3, :3] = np.einsum("npq,npi,npj->nij", K, la, la)
            blk[:, 3:, 3:] = np.einsum("npq,nqi,nqj->nij", K, lb, lb)
            blk[:, :3, 3:] = -np.einsum("npq,npi,nqj->nij", K, la, lb)
            blk[:, 3:, :3] = np.transpose(blk[:, :3, 3:], (0, 2, 1))
            np.add.at(out, o, blk)
        keep = ~done
        if not keep.any():
            break
        SA, SB, owner = SA[keep], SB[keep], owner[keep]
        split_a = da[keep] >= db[keep] * (1.0 - TIE)
        kids_a = _subdivide(SA)
        kids_b = _subdivide(SB)
        newA = np.where(split_a[:, None, None, None], kids_a, SA[:, None])
        newB = np.where(split_a[:, None, None, None], SB[:, None], kids_b)
        SA = newA.reshape(-1, 3, 2)
        SB = newB.reshape(-1, 3, 2)
        owner = np.repeat(owner, 4)
        depth += 1
    return out
