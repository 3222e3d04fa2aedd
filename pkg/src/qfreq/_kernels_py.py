"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``.

Both modules expose the same functions with the same semantics; the
compiled one loops node by node, this one vectorises over a colour class
(nodes of one colour never neighbour each other, so the result is the same
Gauss-Seidel iterate).
"""
import numpy as np


def relax_nodes(values, signs, nbr, nodes, tol):
    """Replace each node in ``nodes`` by the minimiser of its local edge energy.

    ``values`` (n, q) float64 and ``signs`` (n,) int8 are updated in place.
    ``nbr`` is the (n, k) padded neighbour table (-1 = absent). The caller
    guarantees that no two entries of ``nodes`` are neighbours.
    """
    if nodes.size == 0:
        return
    q = values.shape[1]
    nb = nbr[nodes]
    valid = nb >= 0
    nbc = np.where(valid, nb, 0)
    NV = values[nbc]
    NS = signs[nbc]
    w = valid.astype(np.float64)
    cnt = w.sum(axis=1)
    Neta = NV.mean(axis=2)
    Ncoll = (NV[:, :, q - 1] - NV[:, :, 0]) <= tol
    Ncen = np.sum((NV - Neta[:, :, None]) ** 2, axis=2)

    cand_v = []
    cand_e = []
    for s in (1, -1):
        same = (NS == s) | Ncoll
        T = np.where(same[:, :, None], NV, Neta[:, :, None])
        V = np.sum(T * w[:, :, None], axis=1) / cnt[:, None]
        Veta = V.mean(axis=1)
        Vcen = np.sum((V - Veta[:, None]) ** 2, axis=1)
        e_same = np.sum((V[:, None, :] - NV) ** 2, axis=2)
        e_cross = Vcen[:, None] + Ncen + q * (Veta[:, None] - Neta) ** 2
        e = np.where(NS == s, e_same, e_cross)
        cand_v.append(V)
        cand_e.append(np.sum(e * w, axis=1))

    cur = signs[nodes]
    e_cur = np.where(cur > 0, cand_e[0], cand_e[1])
    e_oth = np.where(cur > 0, cand_e[1], cand_e[0])
    new_sign = np.where(e_oth < e_cur, -cur, cur).astype(np.int8)
    V = np.where((new_sign > 0)[:, None], cand_v[0], cand_v[1])
    coll = (V[:, q - 1] - V[:, 0]) <= tol
    new_sign[coll] = 1
    values[nodes] = V
    signs[nodes] = new_sign


def edge_energy(values, signs, ea, eb):
    """Sum over the edges ``(ea[t], eb[t])`` of the squared special distance."""
    va, vb = values[ea], values[eb]
    q = values.shape[1]
    same = np.sum((va - vb) ** 2, axis=1)
    ma = va.mean(axis=1)
    mb = vb.mean(axis=1)
    cross = (
        np.sum((va - ma[:, None]) ** 2, axis=1)
        + np.sum((vb - mb[:, None]) ** 2, axis=1)
        + q * (ma - mb) ** 2
    )
    return float(np.sum(np.where(signs[ea] == signs[eb], same, cross)))


def _too_far(da, db, reach):
    # the ball centre sits within half a cell of the node it rounds to
    ex = max(abs(da) - 0.5, 0.0)
    ey = max(abs(db) - 0.5, 0.0)
    return ex * ex + ey * ey > reach * reach


def ball_moments(px, py, pz, heights, gx, gy, xs0, ys0, hg, radius, out):
    """Mass-weighted normal tensor of a graph current inside 3D balls.

    The current is ``Q`` graphs over a uniform grid (node ``(a, b)`` at
    ``(xs0 + a*hg, ys0 + b*hg)``), with ``heights[k, a, b]`` and gradients
    ``gx, gy`` of the same shape. For each ball centre ``(px, py, pz)`` and
    the common ``radius``, accumulate into ``out[c]`` the 7 moments
    ``[mass, Nxx, Nxy, Nxz, Nyy, Nyz, Nzz]`` with ``N = sum mass * n n^T``
    (``n`` the unit upward normal), and return the number of graph points hit.
    """
    nq, na, nb = heights.shape
    r2 = radius * radius
    reach = int(np.ceil(radius / hg)) + 1
    ca = np.rint((px - xs0) / hg).astype(np.int64)
    cb = np.rint((py - ys0) / hg).astype(np.int64)
    area = hg * hg
    out[:] = 0.0
    hits = np.zeros(px.shape[0], dtype=np.int64)
    for da in range(-reach, reach + 1):
        for db in range(-reach, reach + 1):
            if _too_far(da, db, radius / hg):
                continue
            a = ca + da
            b = cb + db
            inside = (a >= 0) & (a < na) & (b >= 0) & (b < nb)
            if not inside.any():
                continue
            sel = np.nonzero(inside)[0]
            aa, bb = a[sel], b[sel]
            dx = xs0 + aa * hg - px[sel]
            dy = ys0 + bb * hg - py[sel]
            dxy = dx * dx + dy * dy
            for k in range(nq):
                z = heights[k, aa, bb]
                dz = z - pz[sel]
                hit = dxy + dz * dz <= r2
                if not hit.any():
                    continue
                s = sel[hit]
                ux = gx[k, aa[hit], bb[hit]]
                uy = gy[k, aa[hit], bb[hit]]
                g2 = 1.0 + ux * ux + uy * uy
                mass = np.sqrt(g2) * area
                # n = (-ux, -uy, 1) / sqrt(g2); mass * n n^T = area * (...) / sqrt(g2)
                f = area / np.sqrt(g2)
                # one node per ball per (offset, sheet): indices in s are unique
                out[s, 0] += mass
                out[s, 1] += f * ux * ux
                out[s, 2] += f * ux * uy
                out[s, 3] -= f * ux
                out[s, 4] += f * uy * uy
                out[s, 5] -= f * uy
                out[s, 6] += f
                hits[s] += 1
    return hits


def ball_extent(px, py, pz, heights, xs0, ys0, hg, radius, nx, ny, nz):
    """Max and min of ``n . (p - centre)`` over graph points inside each ball.

    ``(nx, ny, nz)`` are per-ball unit normals. Returns ``(hi, lo, hits)``;
    balls without points get ``hi = lo = 0``.
    """
    nq, na, nb = heights.shape
    r2 = radius * radius
    reach = int(np.ceil(radius / hg)) + 1
    ca = np.rint((px - xs0) / hg).astype(np.int64)
    cb = np.rint((py - ys0) / hg).astype(np.int64)
    m = px.shape[0]
    hi = np.full(m, -np.inf)
    lo = np.full(m, np.inf)
    for da in range(-reach, reach + 1):
        for db in range(-reach, reach + 1):
            if _too_far(da, db, radius / hg):
                continue
            a = ca + da
            b = cb + db
            inside = (a >= 0) & (a < na) & (b >= 0) & (b < nb)
            if not inside.any():
                continue
            sel = np.nonzero(inside)[0]
            aa, bb = a[sel], b[sel]
            dx = xs0 + aa * hg - px[sel]
            dy = ys0 + bb * hg - py[sel]
            dxy = dx * dx + dy * dy
            for k in range(nq):
                dz = heights[k, aa, bb] - pz[sel]
                hit = dxy + dz * dz <= r2
                if not hit.any():
                    continue
                s = sel[hit]
                proj = nx[s] * dx[hit] + ny[s] * dy[hit] + nz[s] * dz[hit]
                hi[s] = np.maximum(hi[s], proj)
                lo[s] = np.minimum(lo[s], proj)
    hits = np.isfinite(hi)
    hi = np.where(hits, hi, 0.0)
    lo = np.where(hits, lo, 0.0)
    return hi, lo, hits
