# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels. Semantics match ``_kernels_py`` function for function."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, ceil, fabs, INFINITY, lrint

cnp.import_array()


def relax_nodes(double[:, ::1] values, signed char[::1] signs,
                cnp.int64_t[:, ::1] nbr, cnp.int64_t[::1] nodes, double tol):
    cdef Py_ssize_t q = values.shape[1]
    cdef Py_ssize_t k = nbr.shape[1]
    cdef Py_ssize_t t, j, i, node, nb, cnt, si
    cdef double s, neta, ncen, vsum, veta, vcen, e, d, e_cur, e_oth
    cdef signed char cur, new_sign
    cdef double[:, ::1] cand = np.empty((2, q))
    cdef double[2] cand_e
    cdef double[::1] neta_buf = np.empty(k)
    cdef double[::1] ncen_buf = np.empty(k)
    cdef signed char[::1] ncoll_buf = np.empty(k, dtype=np.int8)

    for t in range(nodes.shape[0]):
        node = nodes[t]
        cnt = 0
        for j in range(k):
            nb = nbr[node, j]
            if nb < 0:
                continue
            cnt += 1
            neta = 0.0
            for i in range(q):
                neta += values[nb, i]
            neta = neta / q
            ncen = 0.0
            for i in range(q):
                d = values[nb, i] - neta
                ncen += d * d
            neta_buf[j] = neta
            ncen_buf[j] = ncen
            ncoll_buf[j] = (values[nb, q - 1] - values[nb, 0]) <= tol
        if cnt == 0:
            continue
        for si in range(2):
            s = 1.0 if si == 0 else -1.0
            for i in range(q):
                vsum = 0.0
                for j in range(k):
                    nb = nbr[node, j]
                    if nb < 0:
                        continue
                    if signs[nb] == s or ncoll_buf[j]:
                        vsum += values[nb, i]
                    else:
                        vsum += neta_buf[j]
                cand[si, i] = vsum / cnt
            veta = 0.0
            for i in range(q):
                veta += cand[si, i]
            veta = veta / q
            vcen = 0.0
            for i in range(q):
                d = cand[si, i] - veta
                vcen += d * d
            e = 0.0
            for j in range(k):
                nb = nbr[node, j]
                if nb < 0:
                    continue
                if signs[nb] == s:
                    for i in range(q):
                        d = cand[si, i] - values[nb, i]
                        e += d * d
                else:
                    d = veta - neta_buf[j]
                    e += vcen + ncen_buf[j] + q * d * d
            cand_e[si] = e
        cur = signs[node]
        if cur > 0:
            e_cur = cand_e[0]
            e_oth = cand_e[1]
        else:
            e_cur = cand_e[1]
            e_oth = cand_e[0]
        new_sign = -cur if e_oth < e_cur else cur
        si = 0 if new_sign > 0 else 1
        for i in range(q):
            values[node, i] = cand[si, i]
        if (values[node, q - 1] - values[node, 0]) <= tol:
            new_sign = 1
        signs[node] = new_sign


cdef inline bint _too_far(long da, long db, double reach) nogil:
    cdef double ex = fabs(<double>da) - 0.5
    cdef double ey = fabs(<double>db) - 0.5
    if ex < 0:
        ex = 0
    if ey < 0:
        ey = 0
    return ex * ex + ey * ey > reach * reach


def ball_moments(double[::1] px, double[::1] py, double[::1] pz,
                 double[:, :, ::1] heights, double[:, :, ::1] gx, double[:, :, ::1] gy,
                 double xs0, double ys0, double hg, double radius, double[:, ::1] out):
    cdef Py_ssize_t nq = heights.shape[0], na = heights.shape[1], nb = heights.shape[2]
    cdef Py_ssize_t m = px.shape[0]
    cdef double r2 = radius * radius
    cdef long reach = <long>ceil(radius / hg) + 1
    cdef double rr = radius / hg
    cdef double area = hg * hg
    cdef Py_ssize_t c, kk, a, b, ca, cb
    cdef long da, db
    cdef double dx, dy, dxy, dz, ux, uy, g2, f
    cdef cnp.int64_t[::1] hits = np.zeros(m, dtype=np.int64)
    out[:, :] = 0.0
    with nogil:
        for c in range(m):
            ca = lrint((px[c] - xs0) / hg)
            cb = lrint((py[c] - ys0) / hg)
            for da in range(-reach, reach + 1):
                for db in range(-reach, reach + 1):
                    if _too_far(da, db, rr):
                        continue
                    a = ca + da
                    b = cb + db
                    if a < 0 or a >= na or b < 0 or b >= nb:
                        continue
                    dx = xs0 + a * hg - px[c]
                    dy = ys0 + b * hg - py[c]
                    dxy = dx * dx + dy * dy
                    for kk in range(nq):
                        dz = heights[kk, a, b] - pz[c]
                        if dxy + dz * dz > r2:
                            continue
                        ux = gx[kk, a, b]
                        uy = gy[kk, a, b]
                        g2 = 1.0 + ux * ux + uy * uy
                        f = area / sqrt(g2)
                        out[c, 0] += sqrt(g2) * area
                        out[c, 1] += f * ux * ux
                        out[c, 2] += f * ux * uy
                        out[c, 3] -= f * ux
                        out[c, 4] += f * uy * uy
                        out[c, 5] -= f * uy
                        out[c, 6] += f
                        hits[c] += 1
    return np.asarray(hits)


def ball_extent(double[::1] px, double[::1] py, double[::1] pz,
                double[:, :, ::1] heights, double xs0, double ys0, double hg,
                double radius, double[::1] nx, double[::1] ny, double[::1] nz):
    cdef Py_ssize_t nq = heights.shape[0], na = heights.shape[1], nb = heights.shape[2]
    cdef Py_ssize_t m = px.shape[0]
    cdef double r2 = radius * radius
    cdef long reach = <long>ceil(radius / hg) + 1
    cdef double rr = radius / hg
    cdef Py_ssize_t c, kk, a, b, ca, cb
    cdef long da, db
    cdef double dx, dy, dxy, dz, proj
    hi_arr = np.full(m, -np.inf)
    lo_arr = np.full(m, np.inf)
    cdef double[::1] hi = hi_arr
    cdef double[::1] lo = lo_arr
    with nogil:
        for c in range(m):
            ca = lrint((px[c] - xs0) / hg)
            cb = lrint((py[c] - ys0) / hg)
            for da in range(-reach, reach + 1):
                for db in range(-reach, reach + 1):
                    if _too_far(da, db, rr):
                        continue
                    a = ca + da
                    b = cb + db
                    if a < 0 or a >= na or b < 0 or b >= nb:
                        continue
                    dx = xs0 + a * hg - px[c]
                    dy = ys0 + b * hg - py[c]
                    dxy = dx * dx + dy * dy
                    for kk in range(nq):
                        dz = heights[kk, a, b] - pz[c]
                        if dxy + dz * dz > r2:
                            continue
                        proj = nx[c] * dx + ny[c] * dy + nz[c] * dz
                        if proj > hi[c]:
                            hi[c] = proj
                        if proj < lo[c]:
                            lo[c] = proj
    hits = np.isfinite(hi_arr)
    return np.where(hits, hi_arr, 0.0), np.where(hits, lo_arr, 0.0), hits


def edge_energy(double[:, ::1] values, signed char[::1] signs,
                cnp.int64_t[::1] ea, cnp.int64_t[::1] eb):
    cdef Py_ssize_t q = values.shape[1]
    cdef Py_ssize_t t, i, a, b
    cdef double total = 0.0, acc, ma, mb, d, ca, cb
    with nogil:
        for t in range(ea.shape[0]):
            a = ea[t]
            b = eb[t]
            acc = 0.0
            if signs[a] == signs[b]:
                for i in range(q):
                    d = values[a, i] - values[b, i]
                    acc += d * d
            else:
                ma = 0.0
                mb = 0.0
                for i in range(q):
                    ma += values[a, i]
                    mb += values[b, i]
                ma = ma / q
                mb = mb / q
                ca = 0.0
                cb = 0.0
                for i in range(q):
                    d = values[a, i] - ma
                    ca += d * d
                    d = values[b, i] - mb
                    cb += d * d
                acc = ca + cb + q * (ma - mb) * (ma - mb)
            total += acc
    return total
