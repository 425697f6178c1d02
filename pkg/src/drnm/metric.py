"""Metric spaces for the multi-location newsvendor.

A metric instance is a set of n locations with a symmetric distance matrix.
Three instance families are supported: explicit matrices, Euclidean point
sets, and rooted-tree metrics whose edge weights grow geometrically level
by level (leaf edges weigh c*lam, the edge between levels r and r+1 weighs
c*(lam^r - lam^(r-1)) for r >= 2, so two leaves meeting at level r are at
distance 2*c*lam^(r-1)).
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

# Relative tolerance for triangle-inequality / symmetry checks; violations
# below this scale are Euclidean roundoff, not modelling errors.
VALIDATION_RTOL = 1e-9


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class CostParams:
    """Per-unit underage cost b and overage cost h, with b >= h > 0."""

    b: float
    h: float

    def __post_init__(self):
        if not (self.h > 0 and self.b >= self.h):
            raise MetricError(f"cost params need b >= h > 0, got b={self.b}, h={self.h}")


@dataclass(frozen=True)
class MetricSpace:
    """n locations with a symmetric distance matrix (immutable)."""

    n: int
    dist: np.ndarray = field(repr=False)

    def __post_init__(self):
        d = np.asarray(self.dist, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise MetricError(f"distance matrix must be square, got shape {d.shape}")
        if d.shape[0] != self.n:
            raise MetricError(f"n={self.n} does not match matrix of shape {d.shape}")
        d = d.copy()
        d.flags.writeable = False
        object.__setattr__(self, "dist", d)

    def diam(self, subset=None) -> float:
        """Largest pairwise distance within `subset` (default: all locations)."""
        if subset is None:
            return float(self.dist.max()) if self.n > 1 else 0.0
        idx = np.asarray(sorted(subset), dtype=int)
        if len(idx) <= 1:
            return 0.0
        return float(self.dist[np.ix_(idx, idx)].max())

    def set_distance(self, s, t) -> float:
        """min over i in s, j in t of dist[i][j]."""
        si = np.asarray(sorted(s), dtype=int)
        ti = np.asarray(sorted(t), dtype=int)
        return float(self.dist[np.ix_(si, ti)].min())

    def aspect_ratio(self) -> float:
        """kappa = max off-diagonal / min off-diagonal distance."""
        off = self.dist[~np.eye(self.n, dtype=bool)]
        if off.size == 0:
            raise MetricError("aspect ratio needs n >= 2")
        return float(off.max() / off.min())

    def min_positive(self) -> float:
        off = self.dist[~np.eye(self.n, dtype=bool)]
        if off.size == 0:
            raise MetricError("min distance needs n >= 2")
        return float(off.min())

    def is_uniform(self, rtol=1e-12) -> bool:
        off = self.dist[~np.eye(self.n, dtype=bool)]
        if off.size == 0:
            return True
        return bool(off.max() - off.min() <= rtol * max(off.max(), 1.0))


@dataclass(frozen=True)
class TreeMetricSpec:
    """Rooted tree with K levels (level 1 = leaves, level K = root).

    branching[j] is the number of children of every node at level K - j,
    so branching[0] is the root's child count and branching[-1] the child
    count of the leaves' parents.  Scale c > 0 and growth lam > 1 set the
    edge weights.
    """

    K: int
    branching: tuple
    c: float
    lam: float

    def __post_init__(self):
        object.__setattr__(self, "branching", tuple(int(b) for b in self.branching))
        if self.K < 2:
            raise MetricError(f"tree needs K >= 2 levels, got K={self.K}")
        if len(self.branching) != self.K - 1:
            raise MetricError(
                f"K={self.K} needs {self.K - 1} branching factors, got {len(self.branching)}"
            )
        if any(b < 1 for b in self.branching):
            raise MetricError("branching factors must be >= 1")
        if not self.lam > 1:
            raise MetricError(f"lam must be > 1, got {self.lam}")
        if not self.c > 0:
            raise MetricError(f"c must be > 0, got {self.c}")

    @property
    def n_leaves(self) -> int:
        n = 1
        for b in self.branching:
            n *= b
        return n


@dataclass(frozen=True)
class TreeStructure:
    """Level sets of a built tree metric.

    level_nodes[r-1] lists the node ids at level r (1 = leaves, K = root);
    leaves_under maps node id -> tuple of leaf indices below it.
    """

    spec: TreeMetricSpec
    level_nodes: tuple
    leaves_under: dict
    parent: dict

    @property
    def K(self) -> int:
        return self.spec.K


def validate_metric(M: MetricSpace) -> list:
    """Return all invariant violations (empty list means valid).

    Checks: zero diagonal, symmetry, positivity off the diagonal, and the
    triangle inequality, each up to VALIDATION_RTOL times the matrix scale.
    """
    d = M.dist
    n = M.n
    scale = max(float(d.max()), 1.0) if n > 0 else 1.0
    tol = VALIDATION_RTOL * scale
    report = []
    for i in range(n):
        if abs(d[i, i]) > tol:
            report.append(f"nonzero diagonal at ({i},{i}): {d[i, i]}")
    for i, j in itertools.combinations(range(n), 2):
        if abs(d[i, j] - d[j, i]) > tol:
            report.append(f"symmetry violation at ({i},{j}): {d[i, j]} vs {d[j, i]}")
        if d[i, j] <= tol:
            report.append(f"non-positive distance at ({i},{j}): {d[i, j]}")
    for i, j, k in itertools.permutations(range(n), 3):
        if i < j and d[i, j] > d[i, k] + d[k, j] + tol:
            report.append(
                f"triangle violation ({i},{j}) via {k}: "
                f"{d[i, j]} > {d[i, k]} + {d[k, j]}"
            )
    return report


def truncate_metric(M: MetricSpace, p: CostParams) -> MetricSpace:
    """Cap every distance at b + h.

    Shipping a unit farther than b + h is never cheaper than paying the
    underage and overage directly, so the truncated metric yields the same
    fulfillment cost; the truncation keeps the triangle inequality.
    """
    cap = p.b + p.h
    return MetricSpace(M.n, np.minimum(M.dist, cap))


def tree_metric(spec: TreeMetricSpec):
    """Build the leaf metric of a tree spec.

    Returns (MetricSpace over the leaves, TreeStructure).  Leaf-to-leaf
    distance is the sum of edge weights on the tree path; two leaves whose
    lowest common ancestor sits at level r are at distance 2*c*lam^(r-1).
    """
    K, c, lam = spec.K, spec.c, spec.lam

    # Node ids per level, root at level K.  children maps id -> tuple of ids.
    next_id = 0
    level_nodes = {K: [0]}
    children = {0: ()}
    next_id = 1
    for depth, b in enumerate(spec.branching):
        level = K - depth
        below = []
        for v in level_nodes[level]:
            kids = tuple(range(next_id, next_id + b))
            next_id += b
            children[v] = kids
            below.extend(kids)
        for w in below:
            children[w] = ()
        level_nodes[level - 1] = below

    leaves = level_nodes[1]
    leaf_index = {v: i for i, v in enumerate(leaves)}
    leaves_under = {}
    parent = {}

    def collect(v):
        if not children[v]:
            leaves_under[v] = (leaf_index[v],)
            return leaves_under[v]
        acc = []
        for w in children[v]:
            parent[w] = v
            acc.extend(collect(w))
        leaves_under[v] = tuple(acc)
        return leaves_under[v]

    collect(0)

    n = len(leaves)
    dist = np.zeros((n, n))
    # ancestor level of the pair = lowest r with both leaves under one node
    anc_level = np.ones((n, n), dtype=int)
    for r in range(2, K + 1):
        for v in level_nodes[r]:
            idx = np.asarray(leaves_under[v], dtype=int)
            for a in idx:
                for b2 in idx:
                    if a != b2 and anc_level[a, b2] == 1:
                        anc_level[a, b2] = r
    for a in range(n):
        for b2 in range(n):
            if a != b2:
                r = anc_level[a, b2]
                dist[a, b2] = 2.0 * c * lam ** (r - 1)

    struct = TreeStructure(
        spec=spec,
        level_nodes=tuple(tuple(level_nodes[r]) for r in range(1, K + 1)),
        leaves_under=leaves_under,
        parent=parent,
    )
    return MetricSpace(n, dist), struct


def euclidean_metric(points) -> MetricSpace:
    """Pairwise Euclidean distances of distinct points."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    n = pts.shape[0]
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=-1))
    for i, j in itertools.combinations(range(n), 2):
        if dist[i, j] == 0.0:
            raise MetricError(f"duplicate points {i} and {j}")
    return MetricSpace(n, dist)


# ---------------------------------------------------------------------------
# Instance files: {"n":…, "dist":[[…]]} | {"points":[[…]]} | {"tree":{…}}
# ---------------------------------------------------------------------------


def instance_to_json(M: MetricSpace = None, points=None, tree: TreeMetricSpec = None) -> dict:
    if points is not None:
        return {"points": np.asarray(points, dtype=float).tolist()}
    if tree is not None:
        return {
            "tree": {
                "K": tree.K,
                "children": list(tree.branching),
                "c": tree.c,
                "lambda": tree.lam,
            }
        }
    if M is not None:
        return {"n": M.n, "dist": M.dist.tolist()}
    raise MetricError("nothing to serialize")


def load_instance(path):
    """Load an instance file.

    Returns (MetricSpace, points-or-None, TreeStructure-or-None) so callers
    that need the geometry (Euclidean grids) or level sets (tree closed
    form) can get at them.
    """
    with open(path) as fh:
        doc = json.load(fh)
    if "dist" in doc:
        d = np.asarray(doc["dist"], dtype=float)
        return MetricSpace(doc.get("n", d.shape[0]), d), None, None
    if "points" in doc:
        pts = np.asarray(doc["points"], dtype=float)
        return euclidean_metric(pts), pts, None
    if "tree" in doc:
        t = doc["tree"]
        spec = TreeMetricSpec(
            K=int(t["K"]),
            branching=tuple(t["children"]),
            c=float(t["c"]),
            lam=float(t["lambda"]),
        )
        M, struct = tree_metric(spec)
        return M, None, struct
    raise MetricError(f"unrecognized instance file {path}")
