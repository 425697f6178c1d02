"""Shared helpers: randomized instances with fixed seeds."""

import numpy as np
import pytest

from drnm import metric as mt
from drnm import partition as pt


def spclosure_metric(rng, n, low=1.0, high=100.0) -> mt.MetricSpace:
    """Generic random metric: shortest-path closure of random weights."""
    W = rng.uniform(low, high, (n, n))
    W = (W + W.T) / 2
    np.fill_diagonal(W, 0)
    D = W.copy()
    for k in range(n):
        D = np.minimum(D, D[:, [k]] + D[[k], :])
    return mt.MetricSpace(n, D)


def uniform_metric(n, ell) -> mt.MetricSpace:
    return mt.MetricSpace(n, ell * (np.ones((n, n)) - np.eye(n)))


def random_wshp(rng, n, kind):
    """(MetricSpace, Wshp) of the requested construction family."""
    if kind == "uniform":
        M = uniform_metric(n, float(rng.uniform(1, 30)))
        return M, pt.wshp_uniform(M, 2.0, 3.0)
    if kind == "euclidean":
        points = rng.uniform(0, 40, (n, 2))
        M = mt.euclidean_metric(points)
        return M, pt.wshp_euclidean(points, 3.0, 2)
    if kind == "general":
        M = spclosure_metric(rng, n)
        return M, pt.wshp_general(M)
    if kind == "tree":
        K = int(rng.integers(2, 4))
        branching = tuple(int(rng.integers(2, 4)) for _ in range(K - 1))
        spec = mt.TreeMetricSpec(K=K, branching=branching, c=float(rng.uniform(1, 5)), lam=2.0)
        M, struct = mt.tree_metric(spec)
        return M, pt.wshp_tree(struct, M)
    raise ValueError(kind)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
