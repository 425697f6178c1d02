import math

import numpy as np
import pytest

from drnm import metric as mt
from drnm import partition as pt
from tests.conftest import random_wshp, spclosure_metric, uniform_metric


# -- margin schedule ---------------------------------------------------------


def test_delta_schedule_uniform_example():
    M = uniform_metric(4, 1.0)
    deltas, R = pt.delta_schedule(M, alpha=2.0, gamma=3.0)
    assert deltas[0] == 0.5
    assert R == 2


def test_delta_schedule_plugged_values():
    # max 100, min 1, n=10, alpha=1, gamma=10 -> Delta_1 = 10, R = 2
    d = np.ones((10, 10)) * 1.0
    d[0, :] = d[:, 0] = 100.0
    np.fill_diagonal(d, 0.0)
    # shortest-path closure keeps min=1, max=100 is too long; build directly:
    d = np.full((10, 10), 1.0)
    d[0, 1:] = d[1:, 0] = 100.0
    np.fill_diagonal(d, 0.0)
    # triangle fails for that matrix; use a valid star-like metric instead
    d = np.minimum(d, 101.0)
    for k in range(10):
        d = np.minimum(d, d[:, [k]] + d[[k], :])
    M = mt.MetricSpace(10, d)
    assert M.min_positive() == 1.0 and M.diam() == 100.0
    deltas, R = pt.delta_schedule(M, alpha=1.0, gamma=10.0)
    assert deltas[0] == 10.0
    assert R == 2


def test_delta_schedule_covers_diameter(rng):
    for _ in range(100):
        n = int(rng.integers(2, 12))
        M = spclosure_metric(rng, n)
        alpha = float(rng.uniform(1, 5))
        gamma = float(rng.uniform(1.5, 8))
        deltas, R = pt.delta_schedule(M, alpha, gamma)
        assert deltas[R - 1] >= M.diam() - 1e-9
        assert len(deltas) == R


def test_delta_schedule_degenerate_rejected():
    with pytest.raises(pt.PartitionError):
        pt.delta_schedule(mt.MetricSpace(1, np.zeros((1, 1))), 2.0, 3.0)


# -- uniform construction ----------------------------------------------------


def test_wshp_uniform_shape():
    M = uniform_metric(4, 1.0)
    H = pt.wshp_uniform(M, 2.0, 3.0)
    assert H.R == 2
    assert [len(fam) for fam in H.levels[0]] == [4]
    assert [len(fam) for fam in H.levels[1]] == [1]
    assert sorted(H.clusters[H.levels[0][0][0]].members) == [0]
    assert pt.verify_wshp(M, H) == []


def test_wshp_uniform_rejects_single_point():
    with pytest.raises(pt.PartitionError):
        pt.wshp_uniform(mt.MetricSpace(1, np.zeros((1, 1))), 2.0, 3.0)


def test_wshp_uniform_rejects_gamma_not_above_alpha():
    M = uniform_metric(3, 1.0)
    with pytest.raises(pt.PartitionError):
        pt.wshp_uniform(M, 2.0, 2.0)


def test_wshp_uniform_rejects_nonuniform():
    M = mt.MetricSpace(3, np.array([[0, 1, 2], [1, 0, 1.5], [2, 1.5, 0]]))
    with pytest.raises(pt.PartitionError):
        pt.wshp_uniform(M, 2.0, 3.0)


# -- Euclidean construction ----------------------------------------------------


def test_wshp_euclidean_two_points_line():
    H = pt.wshp_euclidean([[0.0], [10.0]], alpha=3.0, gamma=2)
    M = mt.euclidean_metric([[0.0], [10.0]])
    assert pt.verify_wshp(M, H) == []
    # top level is the whole space, and no level carries more than 2 families
    assert all(len(level) <= 2 for level in H.levels)
    top = H.levels[H.R - 1]
    assert len(top) == 1 and len(top[0]) == 1
    assert sorted(H.clusters[top[0][0]].members) == [0, 1]


def test_wshp_euclidean_random_planar(rng):
    for _ in range(15):
        n = int(rng.integers(2, 12))
        points = rng.uniform(0, 50, (n, 2))
        H = pt.wshp_euclidean(points, alpha=3.0, gamma=2)
        M = mt.euclidean_metric(points)
        assert pt.verify_wshp(M, H) == []
        assert all(len(level) <= 4 for level in H.levels)


def test_wshp_euclidean_parameter_validation():
    pts = [[0.0, 0.0], [1.0, 1.0]]
    with pytest.raises(pt.PartitionError):
        pt.wshp_euclidean(pts, alpha=2.0, gamma=2)  # needs alpha > 2 sqrt(2)
    with pytest.raises(pt.PartitionError):
        pt.wshp_euclidean(pts, alpha=3.0, gamma=3)  # gamma must be even


# -- general construction ----------------------------------------------------


def test_wshp_general_uniform_gives_singletons():
    M = uniform_metric(5, 10.0)
    H = pt.wshp_general(M)
    assert all(len(H.clusters[cid].members) == 1 for cid in H.level_clusters(1))
    assert pt.verify_wshp(M, H) == []


def test_wshp_general_two_points():
    M = uniform_metric(2, 7.0)
    H = pt.wshp_general(M)
    assert len(H.level_clusters(1)) == 2
    assert len(H.level_clusters(H.R)) == 1
    assert pt.verify_wshp(M, H) == []


def test_wshp_general_random_metrics(rng):
    for _ in range(60):
        n = int(rng.integers(2, 65))
        M = spclosure_metric(rng, n)
        H = pt.wshp_general(M)
        assert pt.verify_wshp(M, H) == []
        # phase counter stays within the doubling bound
        assert max(H.meta["phase_counts"]) <= max(1, math.ceil(math.log2(n)))


# -- tree construction ---------------------------------------------------------


def test_wshp_tree_k2_matches_uniform_shape():
    spec = mt.TreeMetricSpec(K=2, branching=(4,), c=1.0, lam=2.0)
    M, struct = mt.tree_metric(spec)
    H = pt.wshp_tree(struct, M)
    assert H.R == 2
    assert [len(fam) for fam in H.levels[0]] == [4]
    assert [len(fam) for fam in H.levels[1]] == [1]
    assert pt.verify_wshp(M, H) == []


def test_wshp_tree_k3_levels():
    spec = mt.TreeMetricSpec(K=3, branching=(2, 2), c=1.0, lam=2.0)
    M, struct = mt.tree_metric(spec)
    H = pt.wshp_tree(struct, M)
    assert H.R == 3
    level2 = [sorted(H.clusters[c].members) for c in H.level_clusters(2)]
    assert sorted(level2) == [[0, 1], [2, 3]]
    assert sorted(H.clusters[H.level_clusters(3)[0]].members) == [0, 1, 2, 3]
    assert pt.verify_wshp(M, H) == []


def test_wshp_tree_margin_is_exactly_delta():
    # same-family separation equals the margin: the limit construction
    spec = mt.TreeMetricSpec(K=3, branching=(2, 2), c=1.0, lam=2.0)
    M, struct = mt.tree_metric(spec)
    H = pt.wshp_tree(struct, M)
    c1, c2 = H.level_clusters(2)
    gap = M.set_distance(H.clusters[c1].members, H.clusters[c2].members)
    assert gap == H.delta[1]
    assert H.eps_limit


def test_wshp_tree_too_small_rejected():
    # lam^(K-1) far above n: Definition margin would start above min distance
    spec = mt.TreeMetricSpec(K=4, branching=(2, 2, 2), c=1.0, lam=3.0)
    M, struct = mt.tree_metric(spec)
    with pytest.raises(pt.PartitionError):
        pt.wshp_tree(struct, M)


# -- verification ---------------------------------------------------------------


def test_verify_detects_margin_violation():
    # line 0, 1, 10, 30: Delta_1 = max(1, 30/4)/2 = 3.75, so the two nearby
    # singletons may not share a family
    M = mt.euclidean_metric([[0.0], [1.0], [10.0], [30.0]])
    raw = [
        [[(0,), (1,), (2,), (3,)]],
        [[(0, 1, 2), (3,)]],
        [[(0, 1, 2, 3)]],
    ]
    H = pt._build(M, 2.0, 1.0, 3.0, raw)
    report = pt.verify_wshp(M, H)
    assert any("margin" in item for item in report)


def test_verify_detects_missing_coarsening():
    M = mt.MetricSpace(4, np.array(
        [[0, 1, 10, 10], [1, 0, 10, 10], [10, 10, 0, 1], [10, 10, 1, 0]], float
    ))
    deltas, R = pt.delta_schedule(M, 1.5, 4.0)
    assert R == 3
    # level-2 clusters cross the level-1 pairs: containment fails
    raw = [
        [[(0, 1), (2, 3)]],
        [[(0, 2), (1, 3)]],
        [[(0, 1, 2, 3)]],
    ]
    with pytest.raises(pt.PartitionError):
        pt._build(M, 1.5, 1.0, 4.0, raw)


def test_verify_detects_bad_family_count():
    M = uniform_metric(4, 1.0)
    raw = [[[(i,)] for i in range(4)], [[(0, 1, 2, 3)]]]  # four families
    H = pt._build(M, 2.0, 1.0, 3.0, raw)
    report = pt.verify_wshp(M, H, beta=1.0)
    assert any("families" in item for item in report)


def test_verify_roundtrip_json(tmp_path, rng):
    M, H = random_wshp(rng, 9, "euclidean")
    path = tmp_path / "part.json"
    pt.save_wshp(H, path)
    H2 = pt.load_wshp(path, M)
    assert pt.verify_wshp(M, H2) == []
    assert H2.R == H.R and H2.delta == H.delta


# -- priced clusters ------------------------------------------------------------


def test_gamma_set_uniform_priced():
    M = uniform_metric(3, 30.0)
    H = pt.wshp_uniform(M, 2.0, 3.0)
    G = pt.gamma_set(H, mt.CostParams(100, 5), M)
    # every singleton priced at diam(X) - h = 25
    assert len(G.members) == 3
    assert all(G.virtual_underage[c] == 25.0 for c in G.members)


def test_gamma_set_below_threshold_empty():
    M = uniform_metric(3, 8.0)
    H = pt.wshp_uniform(M, 2.0, 3.0)
    G = pt.gamma_set(H, mt.CostParams(100, 5), M)
    assert G.members == frozenset()


def test_gamma_set_tree_virtual_costs():
    spec = mt.TreeMetricSpec(K=3, branching=(2, 2), c=1.0, lam=2.0)
    M, struct = mt.tree_metric(spec)
    H = pt.wshp_tree(struct, M)
    G = pt.gamma_set(H, mt.CostParams(100, 1), M)
    by_level = {}
    for cid in G.members:
        by_level.setdefault(H.clusters[cid].level, set()).add(G.virtual_underage[cid])
    assert by_level[1] == {3.0}  # parent diameter 4 minus h
    assert by_level[2] == {7.0}  # parent diameter 8 minus h


def test_gamma_set_virtual_cost_at_least_h(rng):
    p = mt.CostParams(50, 3)
    for kind in ("uniform", "euclidean", "general", "tree"):
        M, H = random_wshp(rng, 8, kind)
        G = pt.gamma_set(H, p, M)
        assert all(v >= p.h for v in G.virtual_underage.values())


# -- invariants over all constructions -----------------------------------------


def test_partition_invariants_all_kinds(rng):
    for kind in ("uniform", "euclidean", "general", "tree"):
        for _ in range(5):
            n = int(rng.integers(4, 13))
            M, H = random_wshp(rng, n, kind)
            assert pt.verify_wshp(M, H) == []
            for r in range(1, H.R + 1):
                members = sorted(
                    i for cid in H.level_clusters(r) for i in H.clusters[cid].members
                )
                assert members == list(range(M.n))
            for cid, cl in H.clusters.items():
                if cl.children:
                    child_members = sorted(
                        i for ch in cl.children for i in H.clusters[ch].members
                    )
                    assert child_members == sorted(cl.members)
