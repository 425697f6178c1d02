"""Pure-Python transportation solver (fallback for the compiled kernel).

Successive shortest augmenting paths with node potentials on the complete
bipartite (supply x demand) graph.  Supplies and demands must balance.
Returns the optimal flow matrix plus dual prices for both sides; the duals
satisfy beta[j] - alpha[i] <= cost[i][j] with equality on used arcs, which
is what the planner uses for subgradients.
"""

import numpy as np

INF = float("inf")


def solve_transport(cost, supply, demand, eps=1e-12):
    cost = np.ascontiguousarray(cost, dtype=float)
    a = np.array(supply, dtype=float)
    b = np.array(demand, dtype=float)
    ns, nt = cost.shape
    if a.shape != (ns,) or b.shape != (nt,):
        raise ValueError("shape mismatch between cost matrix and marginals")
    if abs(a.sum() - b.sum()) > 1e-6 * max(1.0, a.sum(), b.sum()):
        raise ValueError(f"unbalanced problem: supply {a.sum()} vs demand {b.sum()}")

    nv = ns + nt
    flow = np.zeros((ns, nt))
    pi = np.zeros(nv)
    rs = a.copy()
    rd = b.copy()
    # scale-relative zero threshold: marginals summed by the caller carry
    # cancellation error around one ulp of the totals
    eps = max(eps, 1e-12 * max(1.0, a.sum(), b.sum()))

    dist = np.empty(nv)
    parent = np.empty(nv, dtype=np.int64)
    done = np.empty(nv, dtype=bool)

    guard = 50 * (nv + 1) + 1000
    while rs.max() > eps and rd.max() > eps:
        guard -= 1
        if guard < 0:
            raise RuntimeError("transportation solver did not converge")

        # multi-source dense Dijkstra on reduced costs
        dist.fill(INF)
        parent.fill(-1)
        done.fill(False)
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
            done[u] = True
            if u < ns:
                base = dist[u] + pi[u]
                for j in range(nt):
                    if done[ns + j]:
                        continue
                    rc = base + cost[u, j] - pi[ns + j]
                    if rc < 0.0:
                        rc = 0.0
                    if rc < dist[ns + j]:
                        dist[ns + j] = rc
                        parent[ns + j] = u
            else:
                j = u - ns
                base = dist[u] + pi[u]
                for i in range(ns):
                    if not done[i] and flow[i, j] > eps:
                        rc = base - cost[i, j] - pi[i]
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
            if max(rs.sum(), rd.sum()) <= 100 * nv * eps:
                break  # residual dust from imbalanced inputs
            raise RuntimeError("no augmenting path (numerically infeasible instance)")

        dt = dist[t]
        for v in range(nv):
            if dist[v] < INF:
                pi[v] += min(dist[v], dt)

        # bottleneck along the path
        bott = rd[t - ns]
        v = t
        while parent[v] >= 0:
            u = parent[v]
            if u >= ns:  # backward arc v(source) <- u(sink)
                bott = min(bott, flow[v, u - ns])
            v = u
        bott = min(bott, rs[v])

        v = t
        while parent[v] >= 0:
            u = parent[v]
            if u < ns:
                flow[u, v - ns] += bott
            else:
                flow[v, u - ns] -= bott
            v = u
        rs[v] -= bott
        rd[t - ns] -= bott

    alpha = pi[:ns].copy()
    beta = pi[ns:].copy()
    return flow, alpha, beta
