"""Well-separated hierarchical partitions (WSHPs).

A WSHP of a metric space is a ladder of partitions P_1 .. P_R.  Level r is
split into at most beta families; within a family any two clusters are more
than Delta_r apart while every cluster has diameter below alpha * Delta_r;
each level coarsens the one below, and level R is the whole space.  The
margins follow the fixed schedule

    Delta_1 = (1/alpha) * max(min_{i!=j} l_ij, max_{i!=j} l_ij / n),
    Delta_r = gamma^(r-1) * Delta_1,
    R = ceil(log(max l / Delta_1) / log(gamma)) + 1.

Four constructions are provided: uniform metrics (singletons then the whole
space), Euclidean point sets (nested parity grids), general metrics (greedy
ball growing with boundary marking), and the natural partition of a tree
metric.  The tree partition is the limit of a construction whose parameters
approach (alpha, gamma) = (1, lam) from above, so its separation holds
non-strictly; such hierarchies carry eps_limit=True and are verified with
non-strict margins.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .metric import CostParams, MetricSpace, TreeStructure


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class Cluster:
    id: int
    level: int
    family: int
    members: tuple
    parent: int | None = None
    children: tuple = ()


@dataclass
class Wshp:
    """Hierarchy of well-separated partitions.

    levels[r-1] is the list of families at level r, each family a list of
    cluster ids.  clusters maps id -> Cluster.  eps_limit marks hierarchies
    whose parameters are limits (tree metrics), where separation is >= (not
    strictly >) the margin.
    """

    alpha: float
    beta: float
    gamma: float
    R: int
    delta: list
    levels: list
    clusters: dict
    n: int
    eps_limit: bool = False
    meta: dict = field(default_factory=dict)

    def level_clusters(self, r: int) -> list:
        return [cid for fam in self.levels[r - 1] for cid in fam]

    def __post_init__(self):
        self._chains = None

    def chains(self) -> list:
        """chains()[i][r-1] = id of the level-r cluster containing i."""
        if self._chains is None:
            ch = [[None] * self.R for _ in range(self.n)]
            for cid, c in self.clusters.items():
                for i in c.members:
                    ch[i][c.level - 1] = cid
            self._chains = ch
        return self._chains

    def diam(self, M: MetricSpace, cid: int) -> float:
        return M.diam(self.clusters[cid].members)

    def diam_parent(self, M: MetricSpace, cid: int) -> float:
        pid = self.clusters[cid].parent
        if pid is None:
            raise PartitionError(f"cluster {cid} has no parent")
        return M.diam(self.clusters[pid].members)

    def hier_distance_matrix(self, M: MetricSpace) -> np.ndarray:
        """l^H[i][j] = diameter of the smallest cluster containing both."""
        ch = self.chains()
        out = np.zeros((self.n, self.n))
        diam_cache = {cid: self.diam(M, cid) for cid in self.clusters}
        for i in range(self.n):
            for j in range(i + 1, self.n):
                for r in range(self.R):
                    if ch[i][r] == ch[j][r]:
                        out[i, j] = out[j, i] = diam_cache[ch[i][r]]
                        break
        return out


@dataclass(frozen=True)
class GammaSet:
    """Clusters whose parent diameter is at least 2h, with virtual underage
    costs b_C = diam_p(C) - h."""

    members: frozenset
    virtual_underage: dict


def delta_schedule(M: MetricSpace, alpha: float, gamma: float):
    """Margin schedule (Delta_1 .. Delta_R, R) for the given parameters."""
    if M.n < 2:
        raise PartitionError("margin schedule needs n >= 2")
    if not alpha >= 1:
        raise PartitionError(f"alpha must be >= 1, got {alpha}")
    if not gamma > 1:
        raise PartitionError(f"gamma must be > 1, got {gamma}")
    max_l = M.diam()
    if max_l <= 0:
        raise PartitionError("degenerate metric: all distances zero")
    min_l = M.min_positive()
    delta1 = max(min_l, max_l / M.n) / alpha
    # guard against ratios that are exact powers of gamma up to roundoff
    R = math.ceil(math.log(max_l / delta1) / math.log(gamma) - 1e-12) + 1
    R = max(R, 2)
    deltas = [delta1 * gamma**r for r in range(R)]
    return deltas, R


def _build(M, alpha, beta, gamma, raw_levels, eps_limit=False, delta=None, R=None, meta=None):
    """Assemble a Wshp from per-level families of member tuples and link
    parents by containment."""
    if delta is None or R is None:
        delta, R = delta_schedule(M, alpha, gamma)
    if len(raw_levels) != R:
        raise PartitionError(f"expected {R} levels, got {len(raw_levels)}")
    clusters = {}
    levels = []
    next_id = 0
    for r, families in enumerate(raw_levels, start=1):
        fam_ids = []
        families = [sorted(fam, key=min) for fam in families if fam]
        families.sort(key=lambda fam: min(min(c) for c in fam))
        for f, fam in enumerate(families):
            ids = []
            for members in fam:
                cl = Cluster(id=next_id, level=r, family=f, members=tuple(sorted(members)))
                clusters[next_id] = cl
                ids.append(next_id)
                next_id += 1
            fam_ids.append(ids)
        levels.append(fam_ids)

    # parent/children links by member containment
    by_level = [[clusters[cid] for fam in lv for cid in fam] for lv in levels]
    for r in range(R - 1):
        for child in by_level[r]:
            probe = child.members[0]
            parent = None
            for cand in by_level[r + 1]:
                if probe in cand.members:
                    parent = cand
                    break
            if parent is None or not set(child.members) <= set(parent.members):
                raise PartitionError(
                    f"level {r + 1} cluster {child.id} is not contained in a level "
                    f"{r + 2} cluster"
                )
            object.__setattr__(child, "parent", parent.id)
            object.__setattr__(parent, "children", parent.children + (child.id,))

    return Wshp(
        alpha=alpha,
        beta=beta,
        gamma=gamma,
        R=R,
        delta=list(delta),
        levels=levels,
        clusters=clusters,
        n=M.n,
        eps_limit=eps_limit,
        meta=meta or {},
    )


def wshp_uniform(M: MetricSpace, alpha: float, gamma: float) -> Wshp:
    """WSHP of a uniform metric: singletons, then the whole space.

    Valid for every alpha > 1, beta = 1, gamma > alpha.
    """
    if not M.is_uniform():
        raise PartitionError("wshp_uniform needs a uniform metric")
    if M.n < 2:
        raise PartitionError("wshp_uniform needs n >= 2")
    if not alpha > 1:
        raise PartitionError(f"alpha must be > 1, got {alpha}")
    if not gamma > alpha:
        raise PartitionError(f"gamma must exceed alpha, got gamma={gamma} alpha={alpha}")
    raw = [[[(i,) for i in range(M.n)]], [[tuple(range(M.n))]]]
    return _build(M, alpha, 1.0, gamma, raw)


def wshp_euclidean(points, alpha: float, gamma: float) -> Wshp:
    """WSHP of a Euclidean point set via nested parity grids.

    The top level is one cell of side Delta_R containing all points.  Going
    down, each side is split into gamma^(R-r)/2 segments, giving cells of
    side 2*Delta_r; cells whose index parities match a fixed label
    b in {0,1}^d form one family (at most 2^d families), and same-family
    cells are a full cell apart.  Needs alpha > 2*sqrt(d) and an even
    integer gamma >= 2.
    """
    from .metric import euclidean_metric

    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    d = pts.shape[1]
    if not alpha > 2 * math.sqrt(d):
        raise PartitionError(f"alpha must exceed 2*sqrt(d)={2 * math.sqrt(d):.4f}")
    g = int(gamma)
    if g != gamma or g < 2 or g % 2 != 0:
        raise PartitionError(f"gamma must be an even integer >= 2, got {gamma}")
    M = euclidean_metric(pts)
    delta, R = delta_schedule(M, alpha, g)
    side = delta[R - 1]
    corner = pts.min(axis=0)

    raw_levels = []
    for r in range(1, R):
        segs = g ** (R - r) // 2
        cell = side / segs
        idx = np.floor((pts - corner) / cell).astype(int)
        np.clip(idx, 0, segs - 1, out=idx)
        cells = {}
        for loc in range(M.n):
            cells.setdefault(tuple(idx[loc]), []).append(loc)
        families = {}
        for key, members in cells.items():
            parity = tuple(k % 2 for k in key)
            families.setdefault(parity, []).append(tuple(members))
        raw_levels.append(list(families.values()))
    raw_levels.append([[tuple(range(M.n))]])
    H = _build(M, alpha, float(2**d), float(g), raw_levels, meta={"dim": d})
    return H


def wshp_general(M: MetricSpace, alpha=None, beta=None, gamma=None) -> Wshp:
    """WSHP of an arbitrary metric by greedy ball growing.

    Level 1 repeatedly grows a ball around a point, doubling its radius in
    steps of Delta_1 until the point count stops doubling; the ball becomes
    a cluster, the annulus just outside is marked and deferred to the next
    family.  Higher levels run the same procedure over cluster
    representatives with radius steps of 3*Delta_{r+1}.  Achieves
    alpha = 6*log2(n) + 1, beta = log2(n), gamma = ceil(12*log2(n) + 3).
    """
    n = M.n
    if n < 2:
        raise PartitionError("wshp_general needs n >= 2")
    log2n = math.log2(n)
    if alpha is None:
        alpha = 6 * log2n + 1
    if beta is None:
        beta = max(1.0, log2n)
    if gamma is None:
        gamma = float(math.ceil(12 * log2n + 3))
    delta, R = delta_schedule(M, alpha, gamma)
    dist = M.dist

    def grow(active, radius_step, ball_size, max_phases):
        """Phase/ball-growing common to all levels.

        active: list of representative indices; ball_size(x, rad) counts
        representatives within rad of x.  Returns families of clusters,
        each cluster a list of representative indices.
        """
        families = []
        pool = list(active)
        phases = 0
        while pool:
            phases += 1
            if phases > max_phases + 1:
                raise PartitionError("phase bound exceeded in greedy construction")
            fam = []
            marked = []
            avail = list(pool)
            while avail:
                x = avail[0]  # lowest index: deterministic tie break
                s = 0
                while ball_size(x, (s + 1) * radius_step, avail) >= 2 * ball_size(
                    x, s * radius_step, avail
                ):
                    s += 1
                inner = [y for y in avail if dist[x, y] <= s * radius_step]
                ring = [
                    y
                    for y in avail
                    if s * radius_step < dist[x, y] <= (s + 1) * radius_step
                ]
                fam.append(inner)
                marked.extend(ring)
                removed = set(inner) | set(ring)
                avail = [y for y in avail if y not in removed]
            families.append(fam)
            pool = sorted(marked)
        return families, phases

    def rep_ball(x, rad, avail):
        return sum(1 for y in avail if dist[x, y] <= rad)

    max_phases = max(1, math.ceil(log2n))
    fams1, phases1 = grow(list(range(n)), delta[0], rep_ball, max_phases)
    raw_levels = [[[tuple(sorted(c)) for c in fam] for fam in fams1]]
    phase_counts = [phases1]

    prev = [tuple(sorted(c)) for fam in fams1 for c in fam]
    for r in range(2, R + 1):
        reps = [min(c) for c in prev]
        members_of = {min(c): c for c in prev}
        if len(reps) == 1:
            raw_levels.append([[tuple(sorted(members_of[reps[0]]))]])
            phase_counts.append(1)
            prev = [tuple(sorted(members_of[reps[0]]))]
            continue
        fams, phases = grow(reps, 3 * delta[r - 1], rep_ball, max_phases)
        phase_counts.append(phases)
        expanded = [
            [tuple(sorted(i for rep in c for i in members_of[rep])) for c in fam]
            for fam in fams
        ]
        raw_levels.append(expanded)
        prev = [c for fam in expanded for c in fam]

    return _build(
        M, alpha, beta, gamma, raw_levels, meta={"phase_counts": phase_counts}
    )


def wshp_tree(struct: TreeStructure, M: MetricSpace) -> Wshp:
    """Natural WSHP of a tree metric.

    With r0 the deepest level down to which the tree is a chain (every node
    at levels 2..r0 has a single child), level r of the hierarchy consists
    of one family with a cluster per node v at tree level r + r0 - 1,
    holding the leaves under v.  The parameters are the limits alpha = 1,
    beta = 1, gamma = lam with Delta_r = 2*c*lam^(r0+r-1); separation is
    then exactly Delta_r, so the hierarchy is flagged eps_limit.
    """
    spec = struct.spec
    K, c, lam = spec.K, spec.c, spec.lam
    n = M.n

    # deepest level below which the tree is a chain
    r0 = 1
    for r in range(2, K + 1):
        nodes = struct.level_nodes[r - 1]
        if all(
            sum(1 for w in struct.parent if struct.parent[w] == v) == 1 for v in nodes
        ):
            r0 = r
        else:
            break

    R = K - r0 + 1
    if R < 2:
        raise PartitionError("tree metric collapses to a single point hierarchy")
    min_l = 2.0 * c * lam**r0
    max_l = M.diam()
    if min_l < max_l / n - 1e-12 * max_l:
        raise PartitionError(
            "tree too small for its natural partition: max distance / n exceeds "
            "the minimum leaf distance, so the margin schedule cannot start at "
            "the minimum distance"
        )
    delta = [min_l * lam ** (r - 1) for r in range(1, R + 1)]
    raw_levels = []
    for r in range(1, R + 1):
        nodes = struct.level_nodes[r + r0 - 2]
        fam = [tuple(sorted(struct.leaves_under[v])) for v in nodes]
        raw_levels.append([fam])
    return _build(
        M,
        1.0,
        1.0,
        lam,
        raw_levels,
        eps_limit=True,
        delta=delta,
        R=R,
        meta={"r0": r0, "tree_K": K},
    )


def verify_wshp(M: MetricSpace, H: Wshp, alpha=None, beta=None, gamma=None) -> list:
    """Check a hierarchy against the WSHP definition; returns violations.

    Under H.eps_limit the margin test is non-strict and the schedule test
    accepts the limit bookkeeping (R one above the formula value, margins
    given as limits).
    """
    alpha = H.alpha if alpha is None else alpha
    beta = H.beta if beta is None else beta
    gamma = H.gamma if gamma is None else gamma
    report = []

    # structural checks first; bail out if the shape is broken
    seen = set()
    for r in range(1, H.R + 1):
        if r - 1 >= len(H.levels):
            report.append(f"missing level {r}")
            return report
        for fam in H.levels[r - 1]:
            for cid in fam:
                if cid not in H.clusters:
                    report.append(f"dangling cluster reference {cid} at level {r}")
                    return report
                if cid in seen:
                    report.append(f"cluster {cid} appears twice")
                seen.add(cid)
                cl = H.clusters[cid]
                if not cl.members:
                    report.append(f"cluster {cid} is empty")
                if cl.level != r:
                    report.append(f"cluster {cid} stored at level {r} claims level {cl.level}")
    for cid, cl in H.clusters.items():
        for ch in cl.children:
            if ch not in H.clusters:
                report.append(f"dangling child reference {ch} in cluster {cid}")
                return report
    if report:
        return report

    scale = max(M.diam(), 1.0)
    tol = 1e-9 * scale

    # margin schedule
    try:
        deltas, R = delta_schedule(M, alpha, gamma)
    except PartitionError as exc:
        return [str(exc)]
    if H.eps_limit:
        if H.R not in (R, R + 1):
            report.append(f"level count {H.R} incompatible with schedule R={R} (limit mode)")
        for r in range(min(H.R, len(H.delta))):
            want = H.delta[0] * gamma**r
            if abs(H.delta[r] - want) > tol:
                report.append(f"Delta_{r + 1}={H.delta[r]} is not gamma^r * Delta_1")
    else:
        if H.R != R:
            report.append(f"level count {H.R} differs from schedule R={R}")
        for r in range(min(H.R, R)):
            if abs(H.delta[r] - deltas[r]) > tol:
                report.append(f"Delta_{r + 1}={H.delta[r]} differs from schedule {deltas[r]}")

    # per-level partition, family count, margins, diameters
    for r in range(1, H.R + 1):
        fams = H.levels[r - 1]
        if len(fams) > beta + 1e-9:
            report.append(f"level {r} has {len(fams)} families > beta={beta}")
        covered = []
        for fam in fams:
            for cid in fam:
                covered.extend(H.clusters[cid].members)
        if sorted(covered) != list(range(H.n)):
            report.append(f"level {r} clusters do not partition the space")
        dr = H.delta[r - 1] if r - 1 < len(H.delta) else None
        if dr is None:
            continue
        for fam in fams:
            for a_pos in range(len(fam)):
                for b_pos in range(a_pos + 1, len(fam)):
                    ca, cb = H.clusters[fam[a_pos]], H.clusters[fam[b_pos]]
                    gap = M.set_distance(ca.members, cb.members)
                    ok = gap >= dr - tol if H.eps_limit else gap > dr - tol
                    if not ok:
                        report.append(
                            f"margin violation at level {r}: clusters {ca.id},{cb.id} "
                            f"at distance {gap} <= Delta_r={dr}"
                        )
            for cid in fam:
                dm = M.diam(H.clusters[cid].members)
                ok = dm <= alpha * dr + tol if H.eps_limit else dm < alpha * dr + tol
                if not ok:
                    report.append(
                        f"diameter violation at level {r}: cluster {cid} has "
                        f"diam {dm} >= alpha*Delta_r={alpha * dr}"
                    )

    # top level is the whole space
    top = H.levels[H.R - 1]
    if not (len(top) == 1 and len(top[0]) == 1 and
            set(H.clusters[top[0][0]].members) == set(range(H.n))):
        report.append("level R is not a single family with the single cluster X")

    # coarsening
    for r in range(1, H.R):
        for cid in H.level_clusters(r):
            cl = H.clusters[cid]
            if cl.parent is None:
                report.append(f"cluster {cid} at level {r} has no parent")
                continue
            par = H.clusters[cl.parent]
            if par.level != r + 1 or not set(cl.members) <= set(par.members):
                report.append(f"coarsening violation: cluster {cid} not inside parent {par.id}")
    for cid in H.level_clusters(H.R):
        if H.clusters[cid].parent is not None:
            report.append(f"top cluster {cid} must not have a parent")

    return report


def gamma_set(H: Wshp, p: CostParams, M: MetricSpace) -> GammaSet:
    """Priced clusters: those below the top whose parent diameter is >= 2h."""
    members = set()
    bc = {}
    for r in range(1, H.R):
        for cid in H.level_clusters(r):
            dp = H.diam_parent(M, cid)
            if dp >= 2 * p.h:
                members.add(cid)
                bc[cid] = dp - p.h
    return GammaSet(members=frozenset(members), virtual_underage=bc)


# ---------------------------------------------------------------------------
# JSON round trip
# ---------------------------------------------------------------------------


def wshp_to_json(H: Wshp) -> dict:
    return {
        "alpha": H.alpha,
        "beta": H.beta,
        "gamma": H.gamma,
        "R": H.R,
        "n": H.n,
        "delta": list(H.delta),
        "eps_limit": H.eps_limit,
        "levels": [
            [[list(H.clusters[cid].members) for cid in fam] for fam in H.levels[r]]
            for r in range(H.R)
        ],
        "meta": H.meta,
    }


def wshp_from_json(doc: dict, M: MetricSpace) -> Wshp:
    raw = [
        [[tuple(members) for members in fam] for fam in level]
        for level in doc["levels"]
    ]
    return _build(
        M,
        doc["alpha"],
        doc["beta"],
        doc["gamma"],
        raw,
        eps_limit=doc.get("eps_limit", False),
        delta=doc["delta"],
        R=doc["R"],
        meta=doc.get("meta", {}),
    )


def save_wshp(H: Wshp, path):
    with open(path, "w") as fh:
        json.dump(wshp_to_json(H), fh, indent=1)


def load_wshp(path, M: MetricSpace) -> Wshp:
    with open(path) as fh:
        return wshp_from_json(json.load(fh), M)
