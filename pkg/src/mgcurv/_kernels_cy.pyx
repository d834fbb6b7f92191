# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; same contract as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs

cnp.import_array()

cdef double VTOL = 1e-14


cdef inline bint lex_less(double v1, double e1, double v2, double e2) nogil:
    if v1 < v2 - VTOL:
        return True
    if v1 > v2 + VTOL:
        return False
    return e1 < e2


cdef inline void link(Py_ssize_t h, Py_ssize_t node, Py_ssize_t[::1] first,
                      Py_ssize_t[::1] nxt, Py_ssize_t[::1] prv) nogil:
    nxt[h] = first[node]
    prv[h] = -1
    if first[node] >= 0:
        prv[first[node]] = h
    first[node] = h


cdef inline void unlink(Py_ssize_t h, Py_ssize_t node, Py_ssize_t[::1] first,
                        Py_ssize_t[::1] nxt, Py_ssize_t[::1] prv) nogil:
    if prv[h] >= 0:
        nxt[prv[h]] = nxt[h]
    else:
        first[node] = nxt[h]
    if nxt[h] >= 0:
        prv[nxt[h]] = prv[h]


def transport_simplex(a, b, C, Py_ssize_t max_iter=0):
    cdef const double[::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef const double[:, ::1] Cv = np.ascontiguousarray(C, dtype=np.float64)
    cdef Py_ssize_t m = Cv.shape[0], n = Cv.shape[1]
    if av.shape[0] != m or bv.shape[0] != n or m == 0 or n == 0:
        raise ValueError(f"marginals ({av.shape[0]},), ({bv.shape[0]},) do not fit cost ({m}, {n})")
    cdef Py_ssize_t nn = m + n, nb = m + n - 1
    if max_iter <= 0:
        max_iter = 50 * nn * nn + 1000

    be_np = np.zeros(n)
    be_np[n - 1] = m
    cdef double[::1] be = be_np

    bi_np = np.zeros(nb, dtype=np.intp)
    bj_np = np.zeros(nb, dtype=np.intp)
    xv_np = np.zeros(nb)
    xe_np = np.zeros(nb)
    cdef Py_ssize_t[::1] bi = bi_np
    cdef Py_ssize_t[::1] bj = bj_np
    cdef double[::1] xv = xv_np
    cdef double[::1] xe = xe_np

    cdef Py_ssize_t i = 0, j = 0, k = 0, kk, h, node, other
    cdef double sv = av[0], se = 1.0, dv = bv[0], de = be[0], tv, te
    cdef bint move_row

    with nogil:
        while True:
            if lex_less(sv, se, dv, de) or (i < m - 1 and j == n - 1):
                tv = sv; te = se; move_row = True
            else:
                tv = dv; te = de; move_row = False
            bi[k] = i; bj[k] = j; xv[k] = tv; xe[k] = te
            k += 1
            if i == m - 1 and j == n - 1:
                break
            if move_row and i < m - 1:
                dv -= tv; de -= te
                i += 1
                sv = av[i]; se = 1.0
            else:
                sv -= tv; se -= te
                j += 1
                dv = bv[j]; de = be[j]

    first_np = np.full(nn, -1, dtype=np.intp)
    nxt_np = np.full(2 * nb, -1, dtype=np.intp)
    prv_np = np.full(2 * nb, -1, dtype=np.intp)
    cdef Py_ssize_t[::1] first = first_np
    cdef Py_ssize_t[::1] nxt = nxt_np
    cdef Py_ssize_t[::1] prv = prv_np

    u_np = np.zeros(m)
    v_np = np.zeros(n)
    cdef double[::1] u = u_np
    cdef double[::1] v = v_np
    cdef Py_ssize_t[::1] parent = np.full(nn, -1, dtype=np.intp)
    cdef Py_ssize_t[::1] pedge = np.full(nn, -1, dtype=np.intp)
    cdef Py_ssize_t[::1] depth = np.zeros(nn, dtype=np.intp)
    cdef Py_ssize_t[::1] queue = np.zeros(nn, dtype=np.intp)
    cdef char[::1] seen = np.zeros(nn, dtype=np.int8)
    cdef Py_ssize_t[::1] path_a = np.zeros(nn, dtype=np.intp)
    cdef Py_ssize_t[::1] path_b = np.zeros(nn, dtype=np.intp)
    cdef Py_ssize_t[::1] cycle = np.zeros(nn, dtype=np.intp)

    cdef double cmax = float(np.abs(np.asarray(Cv)).max()) if m * n > 0 else 0.0
    cdef double rc_tol = 1e-12 * (cmax if cmax > 1.0 else 1.0)
    cdef Py_ssize_t total = m * n
    cdef Py_ssize_t block = <Py_ssize_t>sqrt(<double>total)
    if block < 10:
        block = 10
    cdef Py_ssize_t pos = 0, scanned, best, cnt, qh, qt
    cdef Py_ssize_t it = 0, ei, ej, pa, pb, na, nbp, L, leave, c
    cdef double r, bestr

    with nogil:
        for kk in range(nb):
            link(2 * kk, bi[kk], first, nxt, prv)
            link(2 * kk + 1, m + bj[kk], first, nxt, prv)

        while True:
            # potentials and tree structure
            for node in range(nn):
                seen[node] = 0
            seen[0] = 1
            u[0] = 0.0
            parent[0] = -1
            depth[0] = 0
            queue[0] = 0
            qh = 0
            qt = 1
            while qh < qt:
                node = queue[qh]
                qh += 1
                h = first[node]
                while h >= 0:
                    kk = h >> 1
                    if node < m:
                        other = m + bj[kk]
                    else:
                        other = bi[kk]
                    if not seen[other]:
                        seen[other] = 1
                        if node < m:
                            v[bj[kk]] = Cv[bi[kk], bj[kk]] - u[node]
                        else:
                            u[bi[kk]] = Cv[bi[kk], bj[kk]] - v[node - m]
                        parent[other] = node
                        pedge[other] = kk
                        depth[other] = depth[node] + 1
                        queue[qt] = other
                        qt += 1
                    h = nxt[h]

            # block search pricing
            best = -1
            bestr = -rc_tol
            scanned = 0
            cnt = 0
            while scanned < total:
                i = pos // n
                j = pos - i * n
                r = Cv[i, j] - u[i] - v[j]
                if r < bestr:
                    bestr = r
                    best = pos
                pos += 1
                if pos == total:
                    pos = 0
                scanned += 1
                cnt += 1
                if cnt == block:
                    if best >= 0:
                        break
                    cnt = 0
            if best < 0:
                break
            it += 1
            if it > max_iter:
                break
            ei = best // n
            ej = best - ei * n

            pa = ei
            pb = m + ej
            na = 0
            nbp = 0
            while pa != pb:
                if depth[pa] >= depth[pb]:
                    path_a[na] = pedge[pa]
                    na += 1
                    pa = parent[pa]
                else:
                    path_b[nbp] = pedge[pb]
                    nbp += 1
                    pb = parent[pb]
            L = 0
            for c in range(nbp):
                cycle[L] = path_b[c]
                L += 1
            for c in range(na - 1, -1, -1):
                cycle[L] = path_a[c]
                L += 1

            leave = cycle[0]
            for c in range(2, L, 2):
                kk = cycle[c]
                if lex_less(xv[kk], xe[kk], xv[leave], xe[leave]):
                    leave = kk
            tv = xv[leave]
            te = xe[leave]
            for c in range(L):
                kk = cycle[c]
                if c % 2 == 0:
                    xv[kk] -= tv
                    xe[kk] -= te
                else:
                    xv[kk] += tv
                    xe[kk] += te

            unlink(2 * leave, bi[leave], first, nxt, prv)
            unlink(2 * leave + 1, m + bj[leave], first, nxt, prv)
            bi[leave] = ei
            bj[leave] = ej
            xv[leave] = tv
            xe[leave] = te
            link(2 * leave, ei, first, nxt, prv)
            link(2 * leave + 1, m + ej, first, nxt, prv)

    if it > max_iter:
        raise RuntimeError("transportation simplex exceeded its pivot budget")
    plan = np.zeros((m, n))
    plan[bi_np, bj_np] = np.maximum(xv_np, 0.0)
    return plan, u_np, v_np, it


def hopf_lax_min(phi, D, double scale, int power):
    cdef const double[::1] ph = np.ascontiguousarray(phi, dtype=np.float64)
    cdef const double[:, ::1] Dv = np.ascontiguousarray(D, dtype=np.float64)
    cdef Py_ssize_t n = Dv.shape[0], p = Dv.shape[1], i, j
    if ph.shape[0] != p:
        raise ValueError(f"values ({ph.shape[0]},) do not fit distances ({n}, {p})")
    out_np = np.empty(n)
    cdef double[::1] out = out_np
    cdef double best, val, d
    with nogil:
        for i in range(n):
            best = 1e308
            for j in range(p):
                d = Dv[i, j]
                if power == 2:
                    val = ph[j] + scale * d * d
                else:
                    val = ph[j] + scale * d
                if val < best:
                    best = val
            out[i] = best
    return out_np
