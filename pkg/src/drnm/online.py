"""Online fulfillment: the hierarchical balance policy as a state machine.

Demand arrives in parts.  Each location's demand is served in place while
its own inventory lasts; once empty, the policy finds the smallest cluster
containing the location that still holds inventory and draws from it in a
balanced way: equally across its inventory-bearing child clusters, equally
across each child's bearing children, and so on down to locations.  With
k_j the product of bearing-child counts along location j's cluster chain,
one fulfillment step moves

    delta = min(remaining demand, min_j k_j * q_j)

and takes delta / k_j from each bearing location j, so the step empties a
location or finishes the location's demand.  State is kept in exact
rational arithmetic by default (each k_j divides n!, so after l steps all
denominators divide (n!)^(l n) times the input denominator lcm); a float
mode with a zero threshold serves large experiments.

Per-cluster tallies: for a cluster C, every moved amount that used
inventory inside C is attributed to the member of V_C = {virtual} u
children(C) where it arrived (the virtual slot collects demand arriving
outside C); theta_online counts what the policy served from outside the
arrival child, theta_offline the unavoidable part (arrivals minus initial
inventory, clipped at zero).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .metric import MetricSpace
from .partition import Wshp

VIRTUAL = "virtual"


class OnlineError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimStep:
    part: int
    location: int
    delta: object  # Fraction in exact mode, float otherwise
    level: int  # 0 = in place
    cluster: int | None
    sources: tuple  # ((location, amount), ...)


@dataclass(frozen=True)
class ArrivalSequence:
    parts: tuple

    def total(self):
        acc = list(self.parts[0])
        for part in self.parts[1:]:
            for i, x in enumerate(part):
                acc[i] = acc[i] + x
        return acc


@dataclass
class SimSummary:
    underage_units: object
    overage_units: object
    underage_cost: float
    overage_cost: float
    shipping_true: float
    shipping_hier: float
    total_true: float
    total_hier: float


class SimSession:
    """Mutable policy state; single owner, not thread safe."""

    def __init__(self, H: Wshp, M: MetricSpace, q, b: float, h: float, mode: str = "exact"):
        if mode not in ("exact", "float"):
            raise OnlineError(f"unknown mode {mode!r}")
        self.H = H
        self.M = M
        self.b = b
        self.h = h
        self.mode = mode
        self.n = H.n
        self.chains = H.chains()
        if mode == "exact":
            self.q = [Fraction(x) for x in q]
            self.zero = Fraction(0)
        else:
            self.q = [float(x) for x in q]
            self.zero = 0.0
        if any(x < 0 for x in self.q):
            raise OnlineError("initial inventory must be nonnegative")
        self.q0 = list(self.q)
        self.eps = 0.0 if mode == "exact" else 1e-9 * max(1.0, float(sum(self.q)))
        # running per-cluster inventory sums
        self.cluster_q = {}
        for cid, cl in H.clusters.items():
            self.cluster_q[cid] = sum((self.q[i] for i in cl.members), self.zero)
        self.children_of = {
            cid: (list(cl.children) if cl.level >= 2 else list(cl.members))
            for cid, cl in H.clusters.items()
        }
        self.ledger: list[SimStep] = []
        self.step_count = 0
        self.part_count = 0
        self.underage_units = self.zero
        self.finalized = False

    # -- state helpers ------------------------------------------------------

    def _bearing(self, x) -> bool:
        return x > self.eps

    def _total_q(self):
        top = self.H.level_clusters(self.H.R)[0]
        return self.cluster_q[top]

    def _active_count(self, cid) -> int:
        cl = self.H.clusters[cid]
        if cl.level == 1:
            return sum(1 for j in cl.members if self._bearing(self.q[j]))
        return sum(1 for ch in cl.children if self._bearing(self.cluster_q[ch]))

    def _draw(self, j, amount):
        self.q[j] -= amount
        for cid in self.chains[j]:
            self.cluster_q[cid] -= amount
        if self.mode == "float":
            if self.q[j] < self.eps:
                resid = self.q[j]
                self.q[j] = 0.0
                for cid in self.chains[j]:
                    self.cluster_q[cid] = max(self.cluster_q[cid] - resid, 0.0)

    # -- policy -------------------------------------------------------------

    def arrive(self, d_t) -> list:
        """Process one demand part; returns the fulfillment steps taken."""
        if self.finalized:
            raise OnlineError("session already finalized")
        if self.mode == "exact":
            d_curr = [Fraction(x) for x in d_t]
        else:
            d_curr = [float(x) for x in d_t]
        if len(d_curr) != self.n:
            raise OnlineError(f"expected demand vector of length {self.n}")
        if any(x < 0 for x in d_curr):
            raise OnlineError("demand must be nonnegative")

        part = self.part_count
        self.part_count += 1
        new_steps = []
        for i in range(self.n):
            while d_curr[i] > self.eps and self._bearing(self._total_q()):
                if self._bearing(self.q[i]):
                    delta = min(d_curr[i], self.q[i])
                    self._draw(i, delta)
                    d_curr[i] -= delta
                    step = SimStep(part, i, delta, 0, None, ((i, delta),))
                else:
                    # None means fp residue was flushed; re-check and retry
                    step = self._balanced_step(part, i, d_curr)
                    if step is None:
                        continue
                self.ledger.append(step)
                new_steps.append(step)
                self.step_count += 1
        unmet = sum(d_curr, self.zero)
        if unmet > self.eps:
            self.underage_units += unmet
        return new_steps

    def _balanced_step(self, part, i, d_curr):
        chain = self.chains[i]
        r = None
        for level in range(1, self.H.R + 1):
            if self._bearing(self.cluster_q[chain[level - 1]]):
                r = level
                break
        if r is None:
            return None
        cid = chain[r - 1]
        members = self.H.clusters[cid].members
        srcs = [j for j in members if self._bearing(self.q[j])]
        if not srcs:
            # fp drift left a positive cluster sum over empty locations
            self.cluster_q[cid] = self.zero
            return None
        kcache = {}
        kj = {}
        for j in srcs:
            prod = 1
            for level in range(1, r + 1):
                c = self.chains[j][level - 1]
                if c not in kcache:
                    kcache[c] = self._active_count(c)
                prod *= kcache[c]
            kj[j] = prod
        limit = min(kj[j] * self.q[j] for j in srcs)
        delta = min(d_curr[i], limit)
        if self.mode == "float" and delta <= self.eps:
            # fp residue: flush the binding sources and retry next iteration
            for j in srcs:
                if kj[j] * self.q[j] <= self.eps:
                    self._draw(j, self.q[j])
            return None
        sources = []
        for j in srcs:
            amount = delta / kj[j]
            self._draw(j, amount)
            sources.append((j, amount))
        d_curr[i] -= delta
        if self.mode == "float" and d_curr[i] < self.eps:
            d_curr[i] = 0.0
        return SimStep(part, i, delta, r, cid, tuple(sources))

    # -- accounting ---------------------------------------------------------

    def shipped_total(self):
        return sum((a for s in self.ledger for _, a in s.sources), self.zero)

    def conservation_gap(self):
        """shipped + remaining - initial inventory (0 in exact mode)."""
        return self.shipped_total() + self._total_q() - sum(self.q0, self.zero)

    def finalize(self, hier_dist: np.ndarray | None = None) -> SimSummary:
        """Close the season: overage on what remains, both shipping views."""
        if self.finalized:
            raise OnlineError("session already finalized")
        self.finalized = True
        if hier_dist is None:
            hier_dist = self.H.hier_distance_matrix(self.M)
        ell = self.M.dist
        ship_true = 0.0
        ship_hier = 0.0
        for s in self.ledger:
            for j, a in s.sources:
                fa = float(a)
                ship_true += fa * ell[j, s.location]
                ship_hier += fa * hier_dist[j, s.location]
        if ship_hier < ship_true - 1e-9 * max(1.0, ship_true):
            raise OnlineError("hierarchical distances must dominate the metric")
        over_units = self._total_q()
        under_units = self.underage_units
        under_cost = self.b * float(under_units)
        over_cost = self.h * float(over_units)
        return SimSummary(
            underage_units=under_units,
            overage_units=over_units,
            underage_cost=under_cost,
            overage_cost=over_cost,
            shipping_true=ship_true,
            shipping_hier=ship_hier,
            total_true=under_cost + over_cost + ship_true,
            total_hier=under_cost + over_cost + ship_hier,
        )

    # -- per-cluster tallies --------------------------------------------------

    def _meet_level(self, i, j) -> int:
        """Smallest level whose cluster contains both i and j."""
        ci, cj = self.chains[i], self.chains[j]
        for level in range(1, self.H.R + 1):
            if ci[level - 1] == cj[level - 1]:
                return level
        raise OnlineError("hierarchy has no common top cluster")

    def theta_online_table(self) -> dict:
        """theta_online[C][child-or-VIRTUAL] accumulated from the ledger."""
        table = {cid: {} for cid in self.H.clusters}

        def bump(cid, key, amount):
            table[cid][key] = table[cid].get(key, self.zero) + amount

        for s in self.ledger:
            if s.level < 1:
                continue
            child = self.chains[s.location][s.level - 2] if s.level >= 2 else s.location
            bump(s.cluster, child, s.delta)
            for j, a in s.sources:
                meet = self._meet_level(s.location, j)
                for level in range(1, meet):
                    bump(self.chains[j][level - 1], VIRTUAL, a)
        return table

    def theta_offline(self, cid) -> dict:
        """theta_offline over V_C for cluster cid: per child, the arrived
        demand served from inside C minus the child's initial stock, clipped
        at zero; the virtual slot is everything that arrived outside C."""
        if not self.finalized:
            raise OnlineError("finalize the session before computing tallies")
        if cid not in self.H.clusters:
            raise OnlineError(f"unknown cluster {cid}")
        cl = self.H.clusters[cid]
        level = cl.level
        arrived = {}
        virtual = self.zero
        for s in self.ledger:
            i = s.location
            if self.chains[i][level - 1] == cid and s.level <= level:
                child = self.chains[i][level - 2] if level >= 2 else i
                arrived[child] = arrived.get(child, self.zero) + s.delta
            elif self.chains[i][level - 1] != cid:
                inside = sum((a for j, a in s.sources if self.chains[j][level - 1] == cid), self.zero)
                virtual += inside
        out = {VIRTUAL: virtual}
        for child in self.children_of[cid]:
            got = arrived.get(child, self.zero)
            if level >= 2:
                q0c = sum((self.q0[i] for i in self.H.clusters[child].members), self.zero)
            else:
                q0c = self.q0[child]
            excess = got - q0c
            out[child] = excess if excess > 0 else self.zero
        return out


def new_session(H: Wshp, M: MetricSpace, q, b: float, h: float, mode: str = "exact") -> SimSession:
    return SimSession(H, M, q, b, h, mode=mode)


# ---------------------------------------------------------------------------
# Arrival sequence generators
# ---------------------------------------------------------------------------


def adversary_sequence(
    d,
    mode: str,
    seed=None,
    chunk=None,
    M: MetricSpace | None = None,
    H: Wshp | None = None,
    q=None,
    b: float = 1.0,
    h: float = 1.0,
) -> ArrivalSequence:
    """Split a demand vector into an arrival sequence.

    Modes: all_at_once, per_location (ascending index, the experiments'
    mode), per_location_shuffled (seeded), unit_chunks (round robin pieces
    of size `chunk`), greedy_adversarial (heuristic: repeatedly sends a
    chunk to the location whose nearest remaining inventory is farthest;
    needs M, H, q).  The greedy mode is a heuristic probe, not the true
    worst case over arrival sequences.
    """
    d = list(d)
    n = len(d)
    zero = d[0] * 0 if n else 0

    def single(i, amount):
        part = [zero] * n
        part[i] = amount
        return part

    if mode == "all_at_once":
        return ArrivalSequence(parts=(tuple(d),))
    if mode == "per_location":
        order = [i for i in range(n) if d[i] > 0]
        return ArrivalSequence(parts=tuple(tuple(single(i, d[i])) for i in order))
    if mode == "per_location_shuffled":
        rng = np.random.default_rng(seed)
        order = [i for i in range(n) if d[i] > 0]
        rng.shuffle(order)
        return ArrivalSequence(parts=tuple(tuple(single(i, d[i])) for i in order))
    if mode == "unit_chunks":
        if chunk is None or chunk <= 0:
            raise OnlineError("unit_chunks needs a positive chunk size")
        remaining = list(d)
        parts = []
        while any(x > 0 for x in remaining):
            for i in range(n):
                if remaining[i] > 0:
                    amt = min(chunk, remaining[i])
                    remaining[i] -= amt
                    parts.append(tuple(single(i, amt)))
        return ArrivalSequence(parts=tuple(parts))
    if mode == "greedy_adversarial":
        if M is None or H is None or q is None:
            raise OnlineError("greedy_adversarial needs M, H and q")
        if chunk is None or chunk <= 0:
            chunk = max(float(sum(d)) / (4 * n), 1e-9) if n else 1.0
        shadow = SimSession(H, M, [float(x) for x in q], b, h, mode="float")
        remaining = [float(x) for x in d]
        parts = []
        while any(x > 1e-12 for x in remaining):
            bearing = [j for j in range(n) if shadow.q[j] > shadow.eps]
            best_i, best_gap = None, -1.0
            for i in range(n):
                if remaining[i] > 1e-12:
                    gap = min(M.dist[i, j] for j in bearing) if bearing else 0.0
                    if gap > best_gap:
                        best_i, best_gap = i, gap
            amt = min(chunk, remaining[best_i])
            remaining[best_i] -= amt
            part = single(best_i, amt)
            parts.append(tuple(part))
            shadow.arrive(part)
        return ArrivalSequence(parts=tuple(parts))
    raise OnlineError(f"unknown arrival mode {mode!r}")
