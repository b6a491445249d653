"""numba kernels for the O(M^2) pair traversal and the pair quadratures."""
import math

import numpy as np
from numba import njit

# Relative slack on the scale-free comparisons below. Symmetric meshes produce
# exact ties (equal diameters, gaps equal to a threshold); the slack makes them
# resolve the same way after a dilation, where rounding differs.
TIE = 1e-9


@njit(cache=True)
def _grow(buf, n):
    out = np.empty((2 * buf.shape[0] + 16, buf.shape[1]), dtype=buf.dtype)
    out[:n] = buf[:n]
    return out


@njit(cache=True)
def _n_shared(tris, a, b):
    n = 0
    for i in range(3):
        va = tris[a, i]
        for j in range(3):
            if tris[b, j] == va:
                n += 1
    return n


@njit(cache=True)
def far_field(tris, active, dofs, sel, qpts, qw, lam, cen, rad, diam, s, far_ratio, P, W):
    """Traverse unordered pairs of ``sel``; integrate well-separated ones.

    Far pairs add their cross blocks to ``P`` and their self-interaction
    densities to ``W`` (already doubled for the two orderings).  Pairs that
    touch or are too close are returned for the specialised quadratures.
    """
    nq = lam.shape[0]
    expo = -(1.0 + s)
    touch = np.empty((1024, 2), dtype=np.int64)
    near = np.empty((1024, 2), dtype=np.int64)
    nt = 0
    nn = 0
    kbuf = np.empty((nq, nq))
    wa = np.empty(nq)
    wb = np.empty(nq)
    R = np.empty(3)
    X = np.empty((3, 3))
    n = sel.shape[0]
    for ii in range(n):
        a = sel[ii]
        for jj in range(ii, n):
            b = sel[jj]
            act_a = active[a]
            act_b = active[b]
            if not act_a and not act_b:
                continue
            if _n_shared(tris, a, b) > 0:
                if nt == touch.shape[0]:
                    touch = _grow(touch, nt)
                touch[nt, 0] = a
                touch[nt, 1] = b
                nt += 1
                continue
            dx = cen[a, 0] - cen[b, 0]
            dy = cen[a, 1] - cen[b, 1]
            gap = math.sqrt(dx * dx + dy * dy) - rad[a] - rad[b]
            if gap < far_ratio * max(diam[a], diam[b]) * (1.0 + TIE):
                if nn == near.shape[0]:
                    near = _grow(near, nn)
                near[nn, 0] = a
                near[nn, 1] = b
                nn += 1
                continue
            for p in range(nq):
                wa[p] = 0.0
            for q in range(nq):
                wb[q] = 0.0
            for i in range(3):
                for j in range(3):
                    X[i, j] = 0.0
            for p in range(nq):
                xp = qpts[a, p, 0]
                yp = qpts[a, p, 1]
                R[0] = 0.0
                R[1] = 0.0
                R[2] = 0.0
                acc = 0.0
                for q in range(nq):
                    ex = xp - qpts[b, q, 0]
                    ey = yp - qpts[b, q, 1]
                    k = (ex * ex + ey * ey) ** expo
                    kbuf[p, q] = k
                    t = qw[b, q] * k
                    acc += t
                    R[0] += t * lam[q, 0]
                    R[1] += t * lam[q, 1]
                    R[2] += t * lam[q, 2]
                wa[p] = acc
                c = qw[a, p]
                for i in range(3):
                    li = c * lam[p, i]
                    for j in range(3):
                        X[i, j] += li * R[j]
            if act_a:
                for p in range(nq):
                    W[a, p] += 2.0 * wa[p]
            if act_b:
                for q in range(nq):
                    acc = 0.0
                    for p in range(nq):
                        acc += qw[a, p] * kbuf[p, q]
                    W[b, q] += 2.0 * acc
            if act_a and act_b:
                for i in range(3):
                    di = dofs[tris[a, i]]
                    if di < 0:
                        continue
                    for j in range(3):
                        dj = dofs[tris[b, j]]
                        if dj < 0:
                            continue
                        v = 2.0 * X[i, j]
                        P[di, dj] -= v
                        P[dj, di] -= v
    return touch[:nt].copy(), near[:nn].copy()


@njit(cache=True)
def self_terms(tris, active, dofs, qw, lam, W, P):
    nq = lam.shape[0]
    for a in range(tris.shape[0]):
        if not active[a]:
            continue
        for i in range(3):
            di = dofs[tris[a, i]]
            if di < 0:
                continue
            for j in range(3):
                dj = dofs[tris[a, j]]
                if dj < 0:
                    continue
                acc = 0.0
                for p in range(nq):
                    acc += qw[a, p] * W[a, p] * lam[p, i] * lam[p, j]
                P[di, dj] += acc


@njit(cache=True)
def touching_pairs(coords, tri_a, tri_b, ns, s, rad3, rad2, rad1,
                   ix, iw, ex, ey, ew, vx, vy, vw):
    """Union-layout interaction matrices for pairs that share vertices.

    ``tri_a``/``tri_b`` hold the permuted vertex ids (shared ones first, in
    matching order).  Slots 0..2 are the vertices of ``a``; the non-shared
    vertices of ``b`` follow.
    """
    npairs = tri_a.shape[0]
    out = np.zeros((npairs, 6, 6))
    expo = -(1.0 + s)
    phi = np.empty(6)
    for m in range(npairs):
        a0x = coords[tri_a[m, 0], 0]
        a0y = coords[tri_a[m, 0], 1]
        e1x = coords[tri_a[m, 1], 0] - a0x
        e1y = coords[tri_a[m, 1], 1] - a0y
        e2x = coords[tri_a[m, 2], 0] - a0x
        e2y = coords[tri_a[m, 2], 1] - a0y
        ja = abs(e1x * e2y - e1y * e2x)
        k = ns[m]
        loc = out[m]
        if k == 3:
            for q in range(iw.shape[0]):
                du = ix[q, 0]
                dv = ix[q, 1]
                rx = du * e1x + dv * e2x
                ry = du * e1y + dv * e2y
                val = iw[q] * (rx * rx + ry * ry) ** expo
                phi[0] = -du - dv
                phi[1] = du
                phi[2] = dv
                for i in range(3):
                    for j in range(i, 3):
                        loc[i, j] += val * phi[i] * phi[j]
            scale = rad3 * ja * ja
            nslot = 3
        else:
            b0x = coords[tri_b[m, 0], 0]
            b0y = coords[tri_b[m, 0], 1]
            f1x = coords[tri_b[m, 1], 0] - b0x
            f1y = coords[tri_b[m, 1], 1] - b0y
            f2x = coords[tri_b[m, 2], 0] - b0x
            f2y = coords[tri_b[m, 2], 1] - b0y
            jb = abs(f1x * f2y - f1y * f2x)
            if k == 2:
                px = ex
                py = ey
                pw = ew
                scale = rad2 * ja * jb
            else:
                px = vx
                py = vy
                pw = vw
                scale = rad1 * ja * jb
            nslot = 6 - k
            for q in range(pw.shape[0]):
                u = px[q, 0]
                v = px[q, 1]
                up = py[q, 0]
                vp = py[q, 1]
                rx = a0x + u * e1x + v * e2x - (b0x + up * f1x + vp * f2x)
                ry = a0y + u * e1y + v * e2y - (b0y + up * f1y + vp * f2y)
                val = pw[q] * (rx * rx + ry * ry) ** expo
                phi[0] = 1.0 - u - v
                phi[1] = u
                phi[2] = v
                for i in range(3, 6):
                    phi[i] = 0.0
                lb0 = 1.0 - up - vp
                # b-slots: shared ones coincide with a-slots
                if k == 2:
                    phi[0] -= lb0
                    phi[1] -= up
                    phi[3] = -vp
                else:
                    phi[0] -= lb0
                    phi[3] = -up
                    phi[4] = -vp
                for i in range(nslot):
                    for j in range(i, nslot):
                        loc[i, j] += val * phi[i] * phi[j]
        for i in range(nslot):
            for j in range(i, nslot):
                loc[i, j] *= scale
                loc[j, i] = loc[i, j]
    return out


@njit(cache=True)
def _seg_dist2(px, py, ax, ay, bx, by):
    ex = bx - ax
    ey = by - ay
    L2 = ex * ex + ey * ey
    t = ((px - ax) * ex + (py - ay) * ey) / L2
    t = min(1.0, max(0.0, t))
    dx = px - ax - t * ex
    dy = py - ay - t * ey
    return dx * dx + dy * dy


@njit(cache=True)
def _tri_gap(e):
    """Distance between two disjoint triangles packed as e[0:6], e[6:12]."""
    d = np.inf
    for i in range(3):
        for j in range(3):
            j2 = (j + 1) % 3
            d = min(d, _seg_dist2(e[2 * i], e[2 * i + 1], e[6 + 2 * j], e[7 + 2 * j],
                                  e[6 + 2 * j2], e[7 + 2 * j2]))
            d = min(d, _seg_dist2(e[6 + 2 * i], e[7 + 2 * i], e[2 * j], e[2 * j + 1],
                                  e[2 * j2], e[2 * j2 + 1]))
    return math.sqrt(d)


@njit(cache=True)
def _affine_inverse(x0, y0, x1, y1, x2, y2):
    j11 = x1 - x0
    j12 = x2 - x0
    j21 = y1 - y0
    j22 = y2 - y0
    det = j11 * j22 - j12 * j21
    return j22 / det, -j12 / det, -j21 / det, j11 / det


@njit(cache=True)
def near_pairs(coords, tris, pairs, s, far_ratio, max_depth, nodes, wts, nodes_hi, wts_hi,
               nodes_mid, wts_mid, mid_split):
    """Disjoint but close pairs by recursive subdivision toward each other.

    Sub-pairs are split (larger triangle first) until they are admissible
    for the regular rule; at ``max_depth`` the higher-order rule is used, and
    admissible leaves with gap >= mid_split * diameter get the cheaper mid rule.
    Returned matrices use slots 0..2 for ``a`` and 3..5 for ``b``.
    """
    npairs = pairs.shape[0]
    out = np.zeros((npairs, 6, 6))
    expo = -(1.0 + s)
    cap = 64
    stack = np.empty((cap, 13))
    phi = np.empty(6)
    nmax = max(wts.shape[0], wts_hi.shape[0], wts_mid.shape[0])
    qx = np.empty(nmax)
    qy = np.empty(nmax)
    lb = np.empty((nmax, 3))
    kq = np.zeros(nmax)
    for m in range(npairs):
        a = pairs[m, 0]
        b = pairs[m, 1]
        A = np.empty((3, 2))
        B = np.empty((3, 2))
        for i in range(3):
            A[i, 0] = coords[tris[a, i], 0]
            A[i, 1] = coords[tris[a, i], 1]
            B[i, 0] = coords[tris[b, i], 0]
            B[i, 1] = coords[tris[b, i], 1]
        ga = _affine_inverse(A[0, 0], A[0, 1], A[1, 0], A[1, 1], A[2, 0], A[2, 1])
        gb = _affine_inverse(B[0, 0], B[0, 1], B[1, 0], B[1, 1], B[2, 0], B[2, 1])
        loc = out[m]
        top = 0
        for i in range(3):
            stack[0, 2 * i] = A[i, 0]
            stack[0, 2 * i + 1] = A[i, 1]
            stack[0, 6 + 2 * i] = B[i, 0]
            stack[0, 6 + 2 * i + 1] = B[i, 1]
        stack[0, 12] = 0
        top = 1
        while top > 0:
            top -= 1
            e = stack[top].copy()
            depth = int(e[12])
            cax = (e[0] + e[2] + e[4]) / 3.0
            cay = (e[1] + e[3] + e[5]) / 3.0
            cbx = (e[6] + e[8] + e[10]) / 3.0
            cby = (e[7] + e[9] + e[11]) / 3.0
            ra = 0.0
            rb = 0.0
            da = 0.0
            db = 0.0
            for i in range(3):
                ra = max(ra, math.hypot(e[2 * i] - cax, e[2 * i + 1] - cay))
                rb = max(rb, math.hypot(e[6 + 2 * i] - cbx, e[6 + 2 * i + 1] - cby))
                i2 = (i + 1) % 3
                da = max(da, math.hypot(e[2 * i] - e[2 * i2], e[2 * i + 1] - e[2 * i2 + 1]))
                db = max(db, math.hypot(e[6 + 2 * i] - e[6 + 2 * i2], e[7 + 2 * i] - e[7 + 2 * i2]))
            gap = math.hypot(cax - cbx, cay - cby) - ra - rb
            if gap < far_ratio * max(da, db) * (1.0 + TIE):
                gap = _tri_gap(e)
            if gap >= far_ratio * max(da, db) * (1.0 + TIE) or depth >= max_depth:
                if depth >= max_depth:
                    nd = nodes_hi
                    wt = wts_hi
                elif gap >= mid_split * max(da, db) * (1.0 + TIE):
                    nd = nodes_mid
                    wt = wts_mid
                else:
                    nd = nodes
                    wt = wts
                area_a = 0.5 * abs((e[2] - e[0]) * (e[5] - e[1]) - (e[4] - e[0]) * (e[3] - e[1]))
                area_b = 0.5 * abs((e[8] - e[6]) * (e[11] - e[7]) - (e[10] - e[6]) * (e[9] - e[7]))
                nq = wt.shape[0]
                # hats of the parent b at the nodes of the current sub-triangle
                for q in range(nq):
                    xq = nd[q, 0] * e[6] + nd[q, 1] * e[8] + nd[q, 2] * e[10]
                    yq = nd[q, 0] * e[7] + nd[q, 1] * e[9] + nd[q, 2] * e[11]
                    up = gb[0] * (xq - B[0, 0]) + gb[1] * (yq - B[0, 1])
                    vp = gb[2] * (xq - B[0, 0]) + gb[3] * (yq - B[0, 1])
                    qx[q] = xq
                    qy[q] = yq
                    lb[q, 0] = 1.0 - up - vp
                    lb[q, 1] = up
                    lb[q, 2] = vp
                for p in range(nq):
                    xp = nd[p, 0] * e[0] + nd[p, 1] * e[2] + nd[p, 2] * e[4]
                    yp = nd[p, 0] * e[1] + nd[p, 1] * e[3] + nd[p, 2] * e[5]
                    u = ga[0] * (xp - A[0, 0]) + ga[1] * (yp - A[0, 1])
                    v = ga[2] * (xp - A[0, 0]) + ga[3] * (yp - A[0, 1])
                    phi[0] = 1.0 - u - v
                    phi[1] = u
                    phi[2] = v
                    s0 = 0.0
                    s1a = 0.0
                    s1b = 0.0
                    s1c = 0.0
                    for q in range(nq):
                        dx = xp - qx[q]
                        dy = yp - qy[q]
                        k = wt[q] * (dx * dx + dy * dy) ** expo
                        s0 += k
                        s1a += k * lb[q, 0]
                        s1b += k * lb[q, 1]
                        s1c += k * lb[q, 2]
                        kq[q] += wt[p] * k
                    c = area_a * area_b * wt[p]
                    for i in range(3):
                        ci = c * phi[i]
                        for j in range(i, 3):
                            loc[i, j] += ci * phi[j] * s0
                        loc[i, 3] -= ci * s1a
                        loc[i, 4] -= ci * s1b
                        loc[i, 5] -= ci * s1c
                c = area_a * area_b
                for q in range(nq):
                    cq = c * kq[q]
                    kq[q] = 0.0
                    for i in range(3):
                        for j in range(i, 3):
                            loc[3 + i, 3 + j] += cq * lb[q, i] * lb[q, j]
                continue
            # split the larger triangle into four
            off = 0 if da >= db * (1.0 - TIE) else 6
            if top + 4 >= stack.shape[0]:
                bigger = np.empty((2 * stack.shape[0], 13))
                bigger[:top] = stack[:top]
                stack = bigger
            x0 = e[off + 0]
            y0 = e[off + 1]
            x1 = e[off + 2]
            y1 = e[off + 3]
            x2 = e[off + 4]
            y2 = e[off + 5]
            m01x = 0.5 * (x0 + x1)
            m01y = 0.5 * (y0 + y1)
            m12x = 0.5 * (x1 + x2)
            m12y = 0.5 * (y1 + y2)
            m20x = 0.5 * (x2 + x0)
            m20y = 0.5 * (y2 + y0)
            kids = ((x0, y0, m01x, m01y, m20x, m20y),
                    (m01x, m01y, x1, y1, m12x, m12y),
                    (m20x, m20y, m12x, m12y, x2, y2),
                    (m12x, m12y, m20x, m20y, m01x, m01y))
            for kid in kids:
                for i in range(13):
                    stack[top, i] = e[i]
                for i in range(6):
                    stack[top, off + i] = kid[i]
                stack[top, 12] = depth + 1
                top += 1
        for i in range(6):
            for j in range(i, 6):
                loc[j, i] = loc[i, j]
    return out
