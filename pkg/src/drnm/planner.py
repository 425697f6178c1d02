"""Inventory planning: the covering LP over the cluster hierarchy and the
sample-average baseline.

The covering LP minimizes total safety stock h (q_X - mu_X) subject to

    q_C - mu_C >= (sigma_C / 2) (sqrt(b_C/h) - sqrt(h/b_C))   for priced C,
    q_i - mu_i >= (sigma_i / sum sigma) (sigma_X / 2) (sqrt(b/h) - sqrt(h/b)),

i.e. every priced cluster holds at least the robust single-point safety
stock under its virtual underage cost, and the global stock is spread over
locations proportionally to sigma.  Because the priced clusters form a
laminar family, a bottom-up greedy that tops up each deficient cluster is
exactly optimal; a generic LP solve cross-checks it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .demand import DemandModel
from .metric import CostParams, MetricSpace
from .partition import GammaSet, Wshp


class PlannerError(ValueError):
    pass


@dataclass
class InventoryPlan:
    q: np.ndarray
    objective: float | None = None
    binding_constraints: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        if (self.q < 0).any():
            raise PlannerError("inventory must be nonnegative")

    def total(self) -> float:
        return float(self.q.sum())


@dataclass(frozen=True)
class CoveringRhs:
    cluster_rhs: dict  # cluster id -> safety-stock lower bound
    location_rhs: np.ndarray


def _scarf_term(sigma: float, num: float, den: float) -> float:
    return 0.5 * sigma * (math.sqrt(num / den) - math.sqrt(den / num))


def gsm_rhs(H: Wshp, G: GammaSet, model: DemandModel, p: CostParams) -> CoveringRhs:
    """Right-hand sides of the covering LP."""
    cluster_rhs = {}
    for cid in sorted(G.members):
        members = list(H.clusters[cid].members)
        sigma_C = model.sigma_subset(members)
        b_C = G.virtual_underage[cid]
        if b_C < p.h:
            raise PlannerError(f"virtual underage below h for cluster {cid}")
        cluster_rhs[cid] = _scarf_term(sigma_C, b_C, p.h)
    sigma_X = model.sigma_subset(range(model.n))
    share = model.sigma / model.sigma.sum()
    location_rhs = share * _scarf_term(sigma_X, p.b, p.h)
    return CoveringRhs(cluster_rhs=cluster_rhs, location_rhs=location_rhs)


def solve_gsm(H: Wshp, G: GammaSet, model: DemandModel, p: CostParams) -> InventoryPlan:
    """Greedy optimal solution of the covering LP.

    Start from q = mu + location floor, then sweep priced clusters from the
    finest level up; any remaining deficit of a cluster is added inside it,
    split over its members proportionally to sigma.  Adding stock never
    breaks finer constraints, and the resulting total matches the LP
    optimum because the deficits of disjoint maximal units are additive.
    """
    rhs = gsm_rhs(H, G, model, p)
    y = np.array(rhs.location_rhs, dtype=float)
    ordered = sorted(G.members, key=lambda cid: (H.clusters[cid].level, cid))
    for cid in ordered:
        members = np.asarray(H.clusters[cid].members, dtype=int)
        deficit = rhs.cluster_rhs[cid] - y[members].sum()
        if deficit > 0:
            w = model.sigma[members]
            y[members] += deficit * w / w.sum()
    q = model.mu + y

    binding = []
    for cid in ordered:
        members = np.asarray(H.clusters[cid].members, dtype=int)
        slack = y[members].sum() - rhs.cluster_rhs[cid]
        if slack <= 1e-9 * max(1.0, rhs.cluster_rhs[cid]):
            binding.append({"type": "cluster", "cluster": int(cid), "slack": float(slack)})
    for i in range(model.n):
        slack = y[i] - rhs.location_rhs[i]
        if slack <= 1e-9 * max(1.0, rhs.location_rhs[i]):
            binding.append({"type": "location", "location": i, "slack": float(slack)})

    objective = p.h * float(y.sum())
    return InventoryPlan(q=q, objective=objective, binding_constraints=binding)


def lp_oracle_gsm(H: Wshp, G: GammaSet, model: DemandModel, p: CostParams) -> InventoryPlan:
    """Covering LP solved by an off-the-shelf dense LP (independent oracle)."""
    n = model.n
    if n > 50:
        raise PlannerError("oracle limited to n <= 50")
    rhs = gsm_rhs(H, G, model, p)
    ordered = sorted(G.members)
    rows = len(ordered)
    A_ub = np.zeros((rows, n))
    b_ub = np.zeros(rows)
    for k, cid in enumerate(ordered):
        A_ub[k, np.asarray(H.clusters[cid].members, dtype=int)] = -1.0
        b_ub[k] = -rhs.cluster_rhs[cid]
    bounds = [(float(rhs.location_rhs[i]), None) for i in range(n)]
    res = linprog(
        c=np.ones(n),
        A_ub=A_ub if rows else None,
        b_ub=b_ub if rows else None,
        bounds=bounds,
        method="highs",
    )
    if not res.success:
        raise PlannerError(f"LP oracle failed: {res.message}")
    q = model.mu + res.x
    return InventoryPlan(q=q, objective=p.h * float(res.x.sum()))


def check_gsm_feasibility(q, H: Wshp, G: GammaSet, model: DemandModel, p: CostParams) -> float:
    """Smallest constraint slack of q for the covering LP (>= -1e-9 means
    feasible)."""
    rhs = gsm_rhs(H, G, model, p)
    y = np.asarray(q, dtype=float) - model.mu
    worst = float("inf")
    for cid, bound in rhs.cluster_rhs.items():
        members = np.asarray(H.clusters[cid].members, dtype=int)
        worst = min(worst, y[members].sum() - bound)
    worst = min(worst, float((y - rhs.location_rhs).min()))
    return worst


# ---------------------------------------------------------------------------
# Sample-average baseline
# ---------------------------------------------------------------------------


def saa_optimal_baseline(
    M: MetricSpace,
    p: CostParams,
    samples,
    iters: int = 2000,
    step_scale: float = 0.1,
    tol_warn: float = 1e-3,
) -> InventoryPlan:
    """Minimize the empirical mean offline cost by projected subgradient.

    Steps follow c / sqrt(t) with c = step_scale * grand mean of the
    samples, projecting onto q >= 0; the best iterate (by periodic full
    evaluation) is returned.  A warning flag is set when the last two
    checkpoints still differ materially.
    """
    from .offline import make_cost_evaluator

    samples = np.asarray(samples, dtype=float)
    m, n = samples.shape
    evaluate = make_cost_evaluator(M, p)
    q = samples.mean(axis=0)
    c = step_scale * float(samples.mean())

    def objective(qv):
        return sum(evaluate(qv, d)[0] for d in samples) / m

    best_q = q.copy()
    best_f = objective(q)
    prev_check = best_f
    warn = False
    check_every = max(1, iters // 40)
    for t in range(1, iters + 1):
        g = np.zeros(n)
        for d in samples:
            g += evaluate(q, d)[1]
        g /= m
        q = np.maximum(q - (c / math.sqrt(t)) * g, 0.0)
        if t % check_every == 0 or t == iters:
            f = objective(q)
            if f < best_f:
                best_f = f
                best_q = q.copy()
            if t == iters:
                warn = abs(prev_check - f) > tol_warn * max(1.0, abs(f))
            prev_check = f

    return InventoryPlan(
        q=best_q, objective=best_f, meta={"warning_not_converged": bool(warn)}
    )


def coupled_saa_lp(M: MetricSpace, p: CostParams, samples) -> InventoryPlan:
    """Joint LP over (q, per-sample shipments): oracle for the baseline.

    Only for tiny instances; variables grow as n^2 * m.
    """
    samples = np.asarray(samples, dtype=float)
    m, n = samples.shape
    if n > 10 or m > 200:
        raise PlannerError("coupled LP oracle limited to tiny instances")
    ell = M.dist
    nq = n
    nx = n * n
    nvars = nq + m * nx

    def xoff(k, i, j):
        return nq + k * nx + i * n + j

    c = np.zeros(nvars)
    c[:nq] = p.h
    for k in range(m):
        for i in range(n):
            for j in range(n):
                c[xoff(k, i, j)] = (ell[i, j] - p.h - p.b) / m
    const = p.b * samples.sum() / m

    rows = []
    rhs = []
    for k in range(m):
        for i in range(n):  # sum_j x_ij - q_i <= 0
            row = np.zeros(nvars)
            row[xoff(k, i, 0) : xoff(k, i, 0) + n] = 1.0
            row[i] = -1.0
            rows.append(row)
            rhs.append(0.0)
        for j in range(n):  # sum_i x_ij <= d_j
            row = np.zeros(nvars)
            for i in range(n):
                row[xoff(k, i, j)] = 1.0
            rows.append(row)
            rhs.append(samples[k, j])
    res = linprog(
        c=c,
        A_ub=np.asarray(rows),
        b_ub=np.asarray(rhs),
        bounds=[(0, None)] * nvars,
        method="highs",
    )
    if not res.success:
        raise PlannerError(f"coupled LP failed: {res.message}")
    return InventoryPlan(q=res.x[:nq], objective=float(res.fun + const))


def plan_to_json(plan: InventoryPlan) -> dict:
    return {
        "q": plan.q.tolist(),
        "objective": plan.objective,
        "binding_constraints": plan.binding_constraints,
        "meta": plan.meta,
    }


def load_plan(path) -> InventoryPlan:
    import json

    with open(path) as fh:
        doc = json.load(fh)
    return InventoryPlan(
        q=np.asarray(doc["q"], dtype=float),
        objective=doc.get("objective"),
        binding_constraints=doc.get("binding_constraints", []),
        meta=doc.get("meta", {}),
    )
