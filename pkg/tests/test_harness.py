import json
import math

import numpy as np
import pytest

from drnm import demand as dm
from drnm import harness as hn
from drnm import metric as mt
from drnm import offline as off
from tests.conftest import spclosure_metric, uniform_metric


P = mt.CostParams(100, 5)


# -- sample-average evaluation ----------------------------------------------------


def test_saa_evaluate_zero_at_match(rng):
    M = spclosure_metric(rng, 4)
    q = rng.uniform(5, 20, 4)
    mean, costs = hn.saa_evaluate(M, P, q, np.tile(q, (6, 1)))
    assert mean == 0.0 and costs == [0.0] * 6


def test_saa_evaluate_single_sample(rng):
    M = spclosure_metric(rng, 3)
    q = rng.uniform(0, 15, 3)
    d = rng.uniform(0, 15, 3)
    mean, costs = hn.saa_evaluate(M, P, q, [d])
    assert mean == off.offline_cost(M, P, q, d).total_cost == costs[0]


def test_saa_evaluate_is_arithmetic_mean(rng):
    M = spclosure_metric(rng, 3)
    q = rng.uniform(0, 15, 3)
    samples = rng.uniform(0, 15, (7, 3))
    mean, costs = hn.saa_evaluate(M, P, q, samples)
    assert math.isclose(mean, sum(costs) / 7, rel_tol=1e-12)


def test_saa_evaluate_matches_coupled_lp(rng):
    # separability across samples at fixed q
    from scipy.optimize import linprog

    M = uniform_metric(3, 6.0)
    samples = rng.uniform(5, 30, (5, 3))
    q = rng.uniform(5, 30, 3)
    mean, _ = hn.saa_evaluate(M, P, q, samples)
    # coupled LP with q FIXED: per-sample blocks solved jointly
    n, m = 3, 5
    ell = M.dist
    nx = n * n
    c = np.concatenate([((ell - P.h - P.b) / m).ravel()] * m)
    A, rhs = [], []
    for k in range(m):
        for i in range(n):
            row = np.zeros(m * nx)
            row[k * nx + i * n : k * nx + i * n + n] = 1
            A.append(row)
            rhs.append(q[i])
        for j in range(n):
            row = np.zeros(m * nx)
            row[k * nx + j : (k + 1) * nx : n] = 1
            A.append(row)
            rhs.append(samples[k, j])
    res = linprog(c, A_ub=np.array(A), b_ub=np.array(rhs), bounds=[(0, None)] * (m * nx), method="highs")
    coupled = res.fun + P.h * q.sum() + P.b * samples.sum() / m
    assert math.isclose(mean, coupled, rel_tol=1e-9)


# -- experiment configs --------------------------------------------------------------


def smoke_offline_cfg(**kw):
    base = dict(
        experiment="offline-gap",
        instance={"tree": {"K": 2, "children": [4], "c": 3.0, "lambda": 2.0}},
        b=100.0,
        h=5.0,
        m=20,
        N=2,
        seed=7,
        baseline_iters=120,
    )
    base.update(kw)
    return hn.ExperimentConfig(**base)


def test_config_validation():
    with pytest.raises(hn.ConfigError):
        smoke_offline_cfg(m=0)
    with pytest.raises(hn.ConfigError):
        smoke_offline_cfg(N=0)
    with pytest.raises(hn.ConfigError):
        smoke_offline_cfg(cv_range=(0.5, 1.5))
    with pytest.raises(hn.ConfigError):
        smoke_offline_cfg(mean_range=(-1.0, 5.0))


def test_config_json_roundtrip(tmp_path):
    cfg = smoke_offline_cfg()
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_json()))
    cfg2 = hn.load_config(path)
    assert cfg2 == cfg


def test_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"experiment": "offline-gap", "instance": {}, "bogus": 1}))
    with pytest.raises(hn.ConfigError):
        hn.load_config(path)


# -- offline gap experiment ------------------------------------------------------------


def test_offline_gap_row_count_and_stability(tmp_path):
    cfg = smoke_offline_cfg()
    rows, meta = hn.run_experiment(cfg)
    assert len(rows) == cfg.N * len(cfg.families)
    assert any("baseline=saa_optimal" in line for line in meta)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    hn.write_results_csv(p1, rows, meta)
    rows2, meta2 = hn.run_experiment(cfg)
    hn.write_results_csv(p2, rows2, meta2)
    assert p1.read_bytes() == p2.read_bytes()


def test_offline_gap_degenerate_costs():
    cfg = smoke_offline_cfg(b=5.0, h=5.0, N=1, m=10, baseline_iters=50)
    rows, _ = hn.run_experiment(cfg)
    for row in rows:
        assert row[2] >= 0 and row[3] >= 0  # gaps well defined


def test_named_experiment_wrappers():
    cfg = smoke_offline_cfg(N=1, m=10, baseline_iters=40)
    rows, _ = hn.experiment_offline_gap(cfg)
    assert len(rows) == 3
    cfg2 = hn.ExperimentConfig(
        experiment="misspec",
        instance={"tree": {"K": 2, "children": [4], "c": 3.0, "lambda": 2.0}},
        m=5,
        N=1,
        seed=2,
    )
    rows2, _ = hn.misspecification_sweep(cfg2, delta_grid=(0.0, 0.2))
    assert {row[2] for row in rows2} == {0.0, 0.2}


# -- online gap experiment ----------------------------------------------------------------


def test_online_gap_smoke():
    cfg = hn.ExperimentConfig(
        experiment="online-gap",
        instance={"euclidean": {"n": 6, "side": 50.0}},
        m=8,
        N=2,
        seed=3,
    )
    rows, meta = hn.run_experiment(cfg)
    assert len(rows) == 6
    for row in rows:
        # online cost dominates the offline optimum sample by sample
        assert row[5] == 0
        assert row[4] >= -1e-9
    assert any("gamma_exceeds_logn_alpha" in line for line in meta)


# -- misspecification -------------------------------------------------------------------


def test_misspec_zero_delta_matches_truth():
    cfg = hn.ExperimentConfig(
        experiment="misspec",
        instance={"tree": {"K": 2, "children": [4], "c": 3.0, "lambda": 2.0}},
        m=10,
        N=1,
        seed=5,
        delta_grid=(0.0, 0.1),
    )
    rows, _ = hn.run_experiment(cfg)
    for row in rows:
        rep, fam, delta, cost_hat, cost_true, extra, slack = row
        if delta == 0.0:
            assert cost_hat == cost_true and extra == 0.0
        assert slack >= -1e-9  # inflated plans stay feasible for the truth


# -- routing --------------------------------------------------------------------------


def test_routing_identity():
    model = dm.DemandModel(np.array([3.0, 4.0]), np.array([1.0, 2.0]))
    agg, routing = hn.map_demand_to_warehouses(
        model, demand_points=[[0, 0], [5, 5]], warehouse_points=[[0, 0], [5, 5]]
    )
    assert (routing == [0, 1]).all()
    assert np.allclose(agg.mu, model.mu) and np.allclose(agg.sigma, model.sigma)


def test_routing_aggregates_variance():
    model = dm.DemandModel(np.array([1.0, 1.0, 5.0]), np.array([1.0, 1.0, 2.0]))
    agg, routing = hn.map_demand_to_warehouses(
        model,
        demand_points=[[0, 0], [0.4, 0], [10, 0]],
        warehouse_points=[[0, 0], [10, 0]],
    )
    assert (routing == [0, 0, 1]).all()
    assert np.allclose(agg.mu, [2.0, 5.0])
    assert np.allclose(agg.sigma, [math.sqrt(2.0), 2.0])


def test_routing_tie_goes_to_lower_index():
    model = dm.DemandModel(np.array([1.0]), np.array([1.0]))
    dist = np.array([[2.0, 2.0]])
    with pytest.raises(hn.ConfigError):
        # the second warehouse gets nothing and must be dropped explicitly
        hn.map_demand_to_warehouses(model, demand_to_warehouse_dist=dist)
    agg, routing = hn.map_demand_to_warehouses(model, demand_to_warehouse_dist=np.array([[2.0]]))
    assert routing[0] == 0


def test_routing_empty_warehouses_rejected():
    model = dm.DemandModel(np.array([1.0]), np.array([1.0]))
    with pytest.raises(hn.ConfigError):
        hn.map_demand_to_warehouses(model, demand_to_warehouse_dist=np.zeros((1, 0)))


# -- plots ----------------------------------------------------------------------------


def test_emit_plots_references_gap_column(tmp_path):
    cfg = smoke_offline_cfg(N=1, m=10, baseline_iters=40)
    rows, meta = hn.run_experiment(cfg)
    csv = tmp_path / "r.csv"
    hn.write_results_csv(csv, rows, meta)
    gp = hn.emit_plots(csv, tmp_path / "plots")
    text = open(gp).read()
    assert "boxplot" in text
    for fam in cfg.families:
        assert f"gaps_{fam}.dat" in text
        assert (tmp_path / "plots" / f"gaps_{fam}.dat").exists()


def test_emit_plots_misspec_uses_extra_cost(tmp_path):
    csv = tmp_path / "m.csv"
    meta = [hn.CSV_VERSION, "columns: rep,family,delta,cost_inflated,cost_true,extra_cost,true_constraint_slack"]
    rows = [(0, "normal", 0.1, 10.0, 9.0, 1.0, 0.5)]
    hn.write_results_csv(csv, rows, meta)
    gp = hn.emit_plots(csv, tmp_path / "plots")
    assert "extra cost" in open(gp).read()


def test_emit_plots_malformed_csv(tmp_path):
    csv = tmp_path / "bad.csv"
    csv.write_text("1,2,3\n")
    with pytest.raises(hn.ConfigError):
        hn.emit_plots(csv, tmp_path / "plots")


def test_samples_csv_roundtrip(tmp_path, rng):
    samples = rng.uniform(0, 10, (5, 3))
    path = tmp_path / "s.csv"
    hn.write_samples_csv(path, samples)
    back = hn.read_samples_csv(path)
    assert (back == samples).all()
