"""Pure-Python reference implementation of the hot kernels.

The compiled module ``_kernels_cy`` implements the same functions with the
same signatures; :mod:`mgcurv._backend` picks one at import time.

Transportation simplex
----------------------
Spanning-tree (MODI) simplex on the bipartite transportation network.
Degeneracy is removed by the classical perturbation ``a_i + e`` for every
supply and ``b_n + m e`` for the last demand, carried symbolically: every
flow is a pair ``(value, coefficient of e)`` compared lexicographically.
Every basis of the perturbed problem is then nondegenerate, so each pivot
strictly improves the objective and the method cannot cycle.
"""

from __future__ import annotations

import numpy as np

VTOL = 1e-14


def _lex_less(v1: float, e1: float, v2: float, e2: float) -> bool:
    if v1 < v2 - VTOL:
        return True
    if v1 > v2 + VTOL:
        return False
    return e1 < e2


def transport_simplex(a, b, C, max_iter: int = 0):
    """Solve ``min <C, P>`` over couplings of ``a`` and ``b``.

    Returns ``(plan, u, v, iterations)`` where ``u, v`` are optimal dual
    potentials (``u_i + v_j <= C_ij`` with equality on the basis).
    Raises ``RuntimeError`` when ``max_iter`` pivots are exceeded.
    """
    a = np.ascontiguousarray(a, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    C = np.ascontiguousarray(C, dtype=float)
    m, n = C.shape
    if a.shape != (m,) or b.shape != (n,) or m == 0 or n == 0:
        raise ValueError(f"marginals {a.shape}, {b.shape} do not fit cost {C.shape}")
    if max_iter <= 0:
        max_iter = 50 * (m + n) * (m + n) + 1000
    be = np.zeros(n)
    be[n - 1] = m

    # north-west corner start
    bi, bj, xv, xe = [], [], [], []
    i = j = 0
    sv, se = a[0], 1.0
    dv, de = b[0], be[0]
    while True:
        if _lex_less(sv, se, dv, de) or (i < m - 1 and j == n - 1):
            tv, te, move_row = sv, se, True
        else:
            tv, te, move_row = dv, de, False
        bi.append(i)
        bj.append(j)
        xv.append(tv)
        xe.append(te)
        if i == m - 1 and j == n - 1:
            break
        if move_row and i < m - 1:
            dv, de = dv - tv, de - te
            i += 1
            sv, se = a[i], 1.0
        else:
            sv, se = sv - tv, se - te
            j += 1
            dv, de = b[j], be[j]
    nb = len(bi)
    bi = np.array(bi)
    bj = np.array(bj)
    xv = np.array(xv)
    xe = np.array(xe)

    nn = m + n
    adj: list[set[int]] = [set() for _ in range(nn)]
    for k in range(nb):
        adj[bi[k]].add(k)
        adj[m + bj[k]].add(k)

    u = np.zeros(m)
    v = np.zeros(n)
    parent = np.full(nn, -1)
    pedge = np.full(nn, -1)
    depth = np.zeros(nn, dtype=int)
    rc_tol = 1e-12 * max(1.0, float(np.abs(C).max()))

    it = 0
    while True:
        # potentials and tree structure by BFS from source 0
        seen = np.zeros(nn, dtype=bool)
        seen[0] = True
        u[0] = 0.0
        parent[0] = -1
        depth[0] = 0
        queue = [0]
        for node in queue:
            for k in adj[node]:
                other = m + bj[k] if node < m else bi[k]
                if seen[other]:
                    continue
                seen[other] = True
                if node < m:
                    v[bj[k]] = C[bi[k], bj[k]] - u[node]
                else:
                    u[bi[k]] = C[bi[k], bj[k]] - v[node - m]
                parent[other] = node
                pedge[other] = k
                depth[other] = depth[node] + 1
                queue.append(other)

        red = C - u[:, None] - v[None, :]
        flat = int(np.argmin(red))
        if red.flat[flat] >= -rc_tol:
            break
        it += 1
        if it > max_iter:
            raise RuntimeError("transportation simplex exceeded its pivot budget")
        ei, ej = divmod(flat, n)

        # cycle: tree path from sink ej to source ei
        pa, pb = ei, m + ej
        up_a, up_b = [], []
        while pa != pb:
            if depth[pa] >= depth[pb]:
                up_a.append(pedge[pa])
                pa = parent[pa]
            else:
                up_b.append(pedge[pb])
                pb = parent[pb]
        cycle = up_b + up_a[::-1]
        minus = cycle[0::2]
        plus = cycle[1::2]

        leave = minus[0]
        for k in minus[1:]:
            if _lex_less(xv[k], xe[k], xv[leave], xe[leave]):
                leave = k
        tv, te = xv[leave], xe[leave]
        for k in minus:
            xv[k] -= tv
            xe[k] -= te
        for k in plus:
            xv[k] += tv
            xe[k] += te

        adj[bi[leave]].discard(leave)
        adj[m + bj[leave]].discard(leave)
        bi[leave], bj[leave] = ei, ej
        xv[leave], xe[leave] = tv, te
        adj[ei].add(leave)
        adj[m + ej].add(leave)

    plan = np.zeros((m, n))
    plan[bi, bj] = np.maximum(xv, 0.0)
    return plan, u.copy(), v.copy(), it


def hopf_lax_min(phi, D, scale: float, power: int):
    """``Q_i = min_j phi_j + scale * D_ij**power`` for ``power`` in {1, 2}."""
    phi = np.asarray(phi, dtype=float)
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[1] != phi.size:
        raise ValueError(f"values {phi.shape} do not fit distances {D.shape}")
    cost = D * D if power == 2 else D
    return (phi[None, :] + scale * cost).min(axis=1)
