# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled transportation kernel.

Same algorithm as _transport_py (successive shortest paths with node
potentials, dense Dijkstra); kept line-for-line comparable so the two
backends can be cross-checked.
"""

import numpy as np

DEF INF = 1e300


def solve_transport(cost, supply, demand, double eps=1e-12):
    cost_arr = np.ascontiguousarray(cost, dtype=np.float64)
    a_arr = np.array(supply, dtype=np.float64)
    b_arr = np.array(demand, dtype=np.float64)
    cdef const double[:, ::1] C = cost_arr
    cdef int ns = C.shape[0]
    cdef int nt = C.shape[1]
    if a_arr.shape[0] != ns or b_arr.shape[0] != nt:
        raise ValueError("shape mismatch between cost matrix and marginals")
    cdef double tot_a = a_arr.sum()
    cdef double tot_b = b_arr.sum()
    if abs(tot_a - tot_b) > 1e-6 * max(1.0, tot_a, tot_b):
        raise ValueError("unbalanced problem")

    cdef int nv = ns + nt
    flow_arr = np.zeros((ns, nt), dtype=np.float64)
    pi_arr = np.zeros(nv, dtype=np.float64)
    rs_arr = a_arr.copy()
    rd_arr = b_arr.copy()
    dist_arr = np.empty(nv, dtype=np.float64)
    parent_arr = np.empty(nv, dtype=np.int64)
    done_arr = np.empty(nv, dtype=np.uint8)

    cdef double[:, ::1] flow = flow_arr
    cdef double[::1] pi = pi_arr
    cdef double[::1] rs = rs_arr
    cdef double[::1] rd = rd_arr
    cdef double[::1] dist = dist_arr
    cdef long long[::1] parent = parent_arr
    cdef unsigned char[::1] done = done_arr

    cdef int guard = 50 * (nv + 1) + 1000
    cdef int i, j, v, u, t
    cdef double remaining, best, base, rc, w, dt, bott, dust

    # scale-relative zero threshold: marginals summed by the caller carry
    # cancellation error around one ulp of the totals
    if eps < 1e-12 * max(1.0, tot_a, tot_b):
        eps = 1e-12 * max(1.0, tot_a, tot_b)

    while True:
        remaining = 0.0
        for i in range(ns):
            if rs[i] > remaining:
                remaining = rs[i]
        if remaining <= eps:
            break
        remaining = 0.0
        for j in range(nt):
            if rd[j] > remaining:
                remaining = rd[j]
        if remaining <= eps:
            break
        guard -= 1
        if guard < 0:
            raise RuntimeError("transportation solver did not converge")

        for v in range(nv):
            dist[v] = INF
            parent[v] = -1
            done[v] = 0
        for i in range(ns):
            if rs[i] > eps:
                dist[i] = 0.0

        while True:
            u = -1
            best = INF
            for v in range(nv):
                if not done[v] and dist[v] < best:
                    best = dist[v]
                    u = v
            if u < 0:
                break
            done[u] = 1
            base = dist[u] + pi[u]
            if u < ns:
                for j in range(nt):
                    if done[ns + j]:
                        continue
                    rc = base + C[u, j] - pi[ns + j]
                    if rc < 0.0:
                        rc = 0.0
                    if rc < dist[ns + j]:
                        dist[ns + j] = rc
                        parent[ns + j] = u
            else:
                j = u - ns
                for i in range(ns):
                    if not done[i] and flow[i, j] > eps:
                        rc = base - C[i, j] - pi[i]
                        if rc < 0.0:
                            rc = 0.0
                        if rc < dist[i]:
                            dist[i] = rc
                            parent[i] = u

        t = -1
        best = INF
        for j in range(nt):
            if rd[j] > eps and dist[ns + j] < best:
                best = dist[ns + j]
                t = ns + j
        if t < 0:
            dust = 0.0
            for i in range(ns):
                dust += rs[i]
            for j in range(nt):
                dust += rd[j]
            if dust <= 100 * nv * eps:
                break  # residual dust from imbalanced inputs
            raise RuntimeError("no augmenting path (numerically infeasible instance)")

        dt = dist[t]
        for v in range(nv):
            if dist[v] < INF:
                pi[v] += dist[v] if dist[v] < dt else dt

        bott = rd[t - ns]
        v = t
        while parent[v] >= 0:
            u = <int> parent[v]
            if u >= ns:
                if flow[v, u - ns] < bott:
                    bott = flow[v, u - ns]
            v = u
        if rs[v] < bott:
            bott = rs[v]

        v = t
        while parent[v] >= 0:
            u = <int> parent[v]
            if u < ns:
                flow[u, v - ns] += bott
            else:
                flow[v, u - ns] -= bott
            v = u
        rs[v] -= bott
        rd[t - ns] -= bott

    return flow_arr, pi_arr[:ns].copy(), pi_arr[ns:].copy()
