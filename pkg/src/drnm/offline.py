"""Offline fulfillment cost and its hierarchical surrogates.

The exact cost of serving demand d from inventory q is

    C(q, d) = h (q_X - d_X)^+ + b (d_X - q_X)^+ + Theta(q, d),

where Theta ships min(q_X, d_X) units at minimum distance-weighted cost.
Distances are capped at b + h before solving (a longer shipment is never
cheaper than eating the underage and overage), which leaves the optimal
value unchanged and guarantees a plan that either fulfills all demand or
consumes all inventory.

Also here: the level-by-level greedy fulfillment, the cluster upper bound

    C^H(q, d) = h (q_X-d_X)^+ + b (d_X-q_X)^+
                + sum_{r<R} sum_{C in P_r} diam_p(C) (d_C - q_C)^+
                + (diam(X)/n) sum_i (d_i - q_i)^+,

which dominates C(q, d) whenever q >= mu, and the closed-form cost on tree
metrics used as an independent oracle for the transportation solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .metric import CostParams, MetricSpace, TreeStructure, truncate_metric
from .partition import Wshp
from .transport import solve_transport

FLOW_EPS = 1e-12


class OfflineError(ValueError):
    pass


@dataclass
class FulfillmentPlan:
    """Shipments plus the cost split.  Either underage or overage is zero."""

    shipments: list  # (from, to, quantity)
    overage: float
    underage: float
    shipping_cost: float
    total_cost: float
    meta: dict = field(default_factory=dict)


def _check_vectors(M, q, d):
    q = np.asarray(q, dtype=float)
    d = np.asarray(d, dtype=float)
    if q.shape != (M.n,) or d.shape != (M.n,):
        raise OfflineError(f"expected vectors of length {M.n}")
    if (q < 0).any() or (d < 0).any():
        raise OfflineError("inventory and demand must be nonnegative")
    return q, d


def _transport_with_slack(ell, q, d):
    """Balanced transportation shipping min(q_X, d_X) real units.

    Returns (real flow matrix, duals dict).  A zero-cost slack column or
    row absorbs the imbalance.
    """
    n = ell.shape[0]
    qx, dx = q.sum(), d.sum()
    if min(qx, dx) <= FLOW_EPS:
        return np.zeros((n, n)), {"alpha": np.zeros(n), "beta": np.zeros(n), "slack": 0.0, "side": "none"}
    if qx >= dx:
        cost = np.hstack([ell, np.zeros((n, 1))])
        flow, alpha, beta = solve_transport(cost, q, np.append(d, qx - dx))
        return flow[:, :n], {"alpha": alpha, "beta": beta[:n], "slack": float(beta[n]), "side": "demand"}
    cost = np.vstack([ell, np.zeros((1, n))])
    flow, alpha, beta = solve_transport(cost, np.append(q, dx - qx), d)
    return flow[:n, :], {"alpha": alpha[:n], "beta": beta, "slack": float(alpha[n]), "side": "supply"}


def offline_cost(M: MetricSpace, p: CostParams, q, d) -> FulfillmentPlan:
    """Optimal fulfillment of demand d from inventory q."""
    q, d = _check_vectors(M, q, d)
    ell = truncate_metric(M, p).dist
    flow, _ = _transport_with_slack(ell, q, d)
    return _plan_from_flow(M, p, ell, flow, q, d)


def offline_cost_and_duals(M: MetricSpace, p: CostParams, q, d):
    """(total cost, subgradient of q -> C(q, d)) via transportation duals."""
    q, d = _check_vectors(M, q, d)
    return make_cost_evaluator(M, p)(q, d)


def make_cost_evaluator(M: MetricSpace, p: CostParams):
    """Precompiled closure (q, d) -> (total cost, subgradient in q).

    Avoids per-call metric truncation and matrix padding; meant for inner
    loops (the sample-average optimizer calls it millions of times).
    """
    n = M.n
    ell = np.minimum(M.dist, p.b + p.h)
    cost_over = np.ascontiguousarray(np.hstack([ell, np.zeros((n, 1))]))
    cost_under = np.ascontiguousarray(np.vstack([ell, np.zeros((1, n))]))
    b, h = p.b, p.h

    def evaluate(q, d):
        q = np.asarray(q, dtype=float)
        d = np.asarray(d, dtype=float)
        qx = q.sum()
        dx = d.sum()
        if min(qx, dx) <= FLOW_EPS:
            if qx >= dx:
                return h * (qx - dx) + b * dx, np.full(n, h)
            return b * (dx - qx) + h * qx, np.full(n, -b)
        if qx >= dx:
            flow, alpha, beta = solve_transport(cost_over, q, np.append(d, qx - dx))
            shipping = float((flow[:, :n] * ell).sum())
            return h * (qx - dx) + shipping, h - alpha + beta[n]
        flow, alpha, beta = solve_transport(cost_under, np.append(q, dx - qx), d)
        shipping = float((flow[:n, :] * ell).sum())
        return b * (dx - qx) + shipping, -b - alpha[:n] + alpha[n]

    return evaluate


def _plan_from_flow(M, p, ell, flow, q, d) -> FulfillmentPlan:
    shipments = [
        (i, j, float(flow[i, j]))
        for i in range(M.n)
        for j in range(M.n)
        if flow[i, j] > FLOW_EPS
    ]
    shipped = float(flow.sum())
    over = max(float(q.sum()) - float(d.sum()), 0.0)
    under = max(float(d.sum()) - float(q.sum()), 0.0)
    shipping = float((flow * ell).sum())
    total = p.h * over + p.b * under + shipping
    return FulfillmentPlan(
        shipments=shipments,
        overage=over,
        underage=under,
        shipping_cost=shipping,
        total_cost=total,
        meta={"shipped": shipped},
    )


def raw_distance_view(plan: FulfillmentPlan, M: MetricSpace, p: CostParams) -> FulfillmentPlan:
    """Re-express a truncated-metric plan with raw distances.

    Flows on edges longer than b + h are dropped; their quantity turns into
    simultaneous overage and underage.  The total is unchanged.
    """
    cap = p.b + p.h
    kept = []
    dropped = 0.0
    shipping = 0.0
    for i, j, x in plan.shipments:
        if i != j and M.dist[i, j] > cap:
            dropped += x
        else:
            kept.append((i, j, x))
            shipping += M.dist[i, j] * x
    over = plan.overage + dropped
    under = plan.underage + dropped
    return FulfillmentPlan(
        shipments=kept,
        overage=over,
        underage=under,
        shipping_cost=shipping,
        total_cost=p.h * over + p.b * under + shipping,
        meta={"dropped_truncated_flow": dropped},
    )


def theta_shipping(M: MetricSpace, supply, demand) -> float:
    """Pure shipping cost between equal totals (no truncation, no slack)."""
    supply = np.asarray(supply, dtype=float)
    demand = np.asarray(demand, dtype=float)
    if abs(supply.sum() - demand.sum()) > 1e-9 * max(1.0, supply.sum()):
        raise OfflineError("theta_shipping needs equal totals")
    if supply.sum() <= FLOW_EPS:
        return 0.0
    flow, _, _ = solve_transport(M.dist, supply, demand)
    return float((flow * M.dist).sum())


def hierarchical_fulfillment(H: Wshp, M: MetricSpace, p: CostParams, q, d) -> FulfillmentPlan:
    """Greedy level-by-level fulfillment.

    Demand is first served in place, then each level's clusters match as
    much remaining demand to remaining inventory as possible (saturating in
    location-index order; on the complete within-cluster graph any maximal
    matching moves the same quantity).  Costs use the true metric.
    """
    q, d = _check_vectors(M, q, d)
    q_rem = q.copy()
    d_rem = d.copy()
    flow = np.zeros((M.n, M.n))
    inplace = np.minimum(q_rem, d_rem)
    for i in range(M.n):
        flow[i, i] = inplace[i]
    q_rem -= inplace
    d_rem -= inplace
    for r in range(1, H.R + 1):
        for cid in H.level_clusters(r):
            members = H.clusters[cid].members
            srcs = [i for i in members if q_rem[i] > FLOW_EPS]
            dsts = [j for j in members if d_rem[j] > FLOW_EPS]
            si, di = 0, 0
            while si < len(srcs) and di < len(dsts):
                i, j = srcs[si], dsts[di]
                x = min(q_rem[i], d_rem[j])
                flow[i, j] += x
                q_rem[i] -= x
                d_rem[j] -= x
                if q_rem[i] <= FLOW_EPS:
                    si += 1
                if d_rem[j] <= FLOW_EPS:
                    di += 1
    return _plan_from_flow(M, p, M.dist, flow, q, d)


def cost_upper_bound_CH(H: Wshp, M: MetricSpace, p: CostParams, q, d, mu=None):
    """C^H(q, d); returns (value, warned) where warned flags q < mu."""
    q, d = _check_vectors(M, q, d)
    warned = False
    if mu is not None and (q < np.asarray(mu) - 1e-12).any():
        warned = True
    qx, dx = q.sum(), d.sum()
    total = p.h * max(qx - dx, 0.0) + p.b * max(dx - qx, 0.0)
    for r in range(1, H.R):
        for cid in H.level_clusters(r):
            members = np.asarray(H.clusters[cid].members, dtype=int)
            excess = d[members].sum() - q[members].sum()
            if excess > 0:
                total += H.diam_parent(M, cid) * excess
    total += M.diam() / M.n * np.maximum(d - q, 0.0).sum()
    return float(total), warned


def tree_closed_form_cost(struct: TreeStructure, p: CostParams, q, d) -> float:
    """Exact offline cost on a tree metric.

    Aggregating leaves under each node v, the cost telescopes to

        h (q_X - d_X)^+ + b (d_X - q_X)^+
        + 2 c sum_{r=1}^{K-1} lam^r (sum_{v in L_r} (d_v - q_v)^+
                                     - sum_{w in L_{r+1}} (d_w - q_w)^+).
    """
    q = np.asarray(q, dtype=float)
    d = np.asarray(d, dtype=float)
    spec = struct.spec
    n = len(struct.level_nodes[0])
    if q.shape != (n,) or d.shape != (n,):
        raise OfflineError(f"expected vectors of length {n}")
    qx, dx = q.sum(), d.sum()
    total = p.h * max(qx - dx, 0.0) + p.b * max(dx - qx, 0.0)

    def level_excess(r):
        acc = 0.0
        for v in struct.level_nodes[r - 1]:
            idx = np.asarray(struct.leaves_under[v], dtype=int)
            acc += max(d[idx].sum() - q[idx].sum(), 0.0)
        return acc

    for r in range(1, spec.K):
        total += 2.0 * spec.c * spec.lam**r * (level_excess(r) - level_excess(r + 1))
    return float(total)
