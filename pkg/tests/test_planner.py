import math

import numpy as np

from drnm import demand as dm
from drnm import metric as mt
from drnm import partition as pt
from drnm import planner as pl
from tests.conftest import random_wshp, uniform_metric


P = mt.CostParams(100, 5)


def two_location_setup():
    M = uniform_metric(2, 30.0)
    H = pt.wshp_uniform(M, 2.0, 3.0)
    model = dm.DemandModel(np.array([100.0, 100.0]), np.array([20.0, 20.0]))
    G = pt.gamma_set(H, P, M)
    return M, H, G, model


# -- right-hand sides -----------------------------------------------------------


def test_rhs_vanishes_when_costs_equal():
    M, H, _, model = two_location_setup()
    p = mt.CostParams(9, 9)
    G = pt.gamma_set(H, p, M)
    rhs = pl.gsm_rhs(H, G, model, p)
    assert np.allclose(rhs.location_rhs, 0.0)


def test_rhs_two_location_example():
    _, H, G, model = two_location_setup()
    rhs = pl.gsm_rhs(H, G, model, P)
    for v in rhs.cluster_rhs.values():
        assert math.isclose(v, 17.888544, rel_tol=1e-6)
    assert np.allclose(rhs.location_rhs, 30.041631, rtol=1e-6)


def test_rhs_empty_gamma_only_locations():
    M = uniform_metric(2, 8.0)  # below the 2h pricing threshold
    H = pt.wshp_uniform(M, 2.0, 3.0)
    G = pt.gamma_set(H, P, M)
    model = dm.DemandModel(np.array([50.0, 60.0]), np.array([5.0, 6.0]))
    rhs = pl.gsm_rhs(H, G, model, P)
    assert rhs.cluster_rhs == {}
    assert (rhs.location_rhs > 0).all()


# -- covering solve ----------------------------------------------------------------


def test_solve_gsm_reduces_to_mean():
    M = uniform_metric(2, 8.0)
    H = pt.wshp_uniform(M, 2.0, 3.0)
    p = mt.CostParams(6, 6)
    G = pt.gamma_set(H, p, M)
    model = dm.DemandModel(np.array([50.0, 60.0]), np.array([5.0, 6.0]))
    plan = pl.solve_gsm(H, G, model, p)
    assert np.allclose(plan.q, model.mu)
    assert plan.objective == 0.0


def test_solve_gsm_two_location_example():
    _, H, G, model = two_location_setup()
    plan = pl.solve_gsm(H, G, model, P)
    assert np.allclose(plan.q, 130.041631, rtol=1e-6)
    assert any(c["type"] == "location" for c in plan.binding_constraints)


def test_solve_gsm_nested_parent_covered_by_children():
    # two tight children whose combined stock already covers the parent bound
    spec = mt.TreeMetricSpec(K=3, branching=(2, 2), c=5.0, lam=2.0)
    M, struct = mt.tree_metric(spec)
    H = pt.wshp_tree(struct, M)
    p = mt.CostParams(100, 5)
    G = pt.gamma_set(H, p, M)
    model = dm.DemandModel(np.full(4, 100.0), np.full(4, 25.0))
    plan = pl.solve_gsm(H, G, model, p)
    oracle = pl.lp_oracle_gsm(H, G, model, p)
    assert math.isclose(plan.objective, oracle.objective, rel_tol=1e-8)
    # ancestors inherit children's stock: every constraint satisfied
    assert pl.check_gsm_feasibility(plan.q, H, G, model, p) >= -1e-9


def test_solve_gsm_matches_oracle_randomized(rng):
    for trial in range(60):
        kind = ("tree", "euclidean", "uniform")[trial % 3]
        n = int(rng.integers(2, 13))
        M, H = random_wshp(rng, n, kind)
        b = float(rng.uniform(10, 200))
        h = float(rng.uniform(0.5, b))
        p = mt.CostParams(b, h)
        mu = rng.uniform(50, 500, M.n)
        sigma = rng.uniform(0.1, 0.8, M.n) * mu
        model = dm.DemandModel(mu, sigma)
        G = pt.gamma_set(H, p, M)
        plan = pl.solve_gsm(H, G, model, p)
        oracle = pl.lp_oracle_gsm(H, G, model, p)
        assert math.isclose(plan.objective, oracle.objective, rel_tol=1e-8)
        assert pl.check_gsm_feasibility(plan.q, H, G, model, p) >= -1e-9
        assert (plan.q >= model.mu - 1e-12).all()


def test_solve_gsm_monotone_in_sigma(rng):
    M, H = random_wshp(rng, 6, "euclidean")
    mu = rng.uniform(50, 300, 6)
    sigma = rng.uniform(10, 80, 6)
    G = pt.gamma_set(H, P, M)
    base = pl.solve_gsm(H, G, dm.DemandModel(mu, sigma), P).total()
    for i in range(6):
        bumped = sigma.copy()
        bumped[i] *= 1.5
        total = pl.solve_gsm(H, G, dm.DemandModel(mu, bumped), P).total()
        assert total >= base - 1e-9


def test_inflated_estimates_stay_feasible(rng):
    for _ in range(20):
        n = int(rng.integers(2, 9))
        M, H = random_wshp(rng, n, "tree")
        mu = rng.uniform(100, 800, M.n)
        sigma = rng.uniform(0.2, 0.7, M.n) * mu
        model = dm.DemandModel(mu, sigma)
        G = pt.gamma_set(H, P, M)
        for delta in (0.05, 0.1, 0.2):
            inflated = pl.solve_gsm(H, G, model.inflate(delta), P)
            assert pl.check_gsm_feasibility(inflated.q, H, G, model, P) >= -1e-9


# -- sample-average baseline ---------------------------------------------------------


def test_baseline_single_location_atom():
    M = mt.MetricSpace(1, np.zeros((1, 1)))
    samples = np.full((25, 1), 77.0)
    plan = pl.saa_optimal_baseline(M, P, samples, iters=600)
    assert abs(plan.q[0] - 77.0) <= 0.5
    assert plan.objective <= 0.6 * P.h  # nearly zero cost at the atom


def test_baseline_close_to_coupled_lp(rng):
    M = uniform_metric(2, 8.0)
    samples = rng.uniform(50, 150, (10, 2))
    plan = pl.saa_optimal_baseline(M, P, samples, iters=2000)
    lp = pl.coupled_saa_lp(M, P, samples)
    assert plan.objective <= lp.objective * 1.01


def test_baseline_median_at_equal_costs(rng):
    # zero distances, b = h: optimal total stock is the empirical median
    p = mt.CostParams(3, 3)
    M = mt.MetricSpace(2, np.zeros((2, 2)))
    samples = rng.uniform(20, 180, (31, 2))
    plan = pl.saa_optimal_baseline(M, p, samples, iters=1500)
    totals = np.sort(samples.sum(axis=1))
    grid = np.linspace(totals[0], totals[-1], 20_000)
    emp = [np.mean(p.h * np.maximum(g - samples.sum(1), 0) + p.b * np.maximum(samples.sum(1) - g, 0)) for g in grid]
    best = grid[int(np.argmin(emp))]
    assert abs(plan.q.sum() - best) <= 2.0
    assert plan.objective <= min(emp) * 1.01


def test_plan_json_roundtrip(tmp_path):
    _, H, G, model = two_location_setup()
    plan = pl.solve_gsm(H, G, model, P)
    path = tmp_path / "plan.json"
    import json

    path.write_text(json.dumps(pl.plan_to_json(plan)))
    plan2 = pl.load_plan(path)
    assert np.allclose(plan2.q, plan.q)
    assert plan2.objective == plan.objective
