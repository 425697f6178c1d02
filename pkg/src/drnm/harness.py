"""Experiment harness: sample-average evaluation, the two gap experiments,
misspecification sweeps, demand-to-warehouse routing, and plot emission.

Experiments are pure functions of (config, seed): per-repetition RNG
streams are derived from (seed, repetition, ...) so results are
byte-stable regardless of worker count.  The offline-gap experiment
benchmarks the covering-LP plan against a sample-average-optimal plan
(the conic benchmark is out of scope; the substitution is recorded in the
CSV metadata).
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .demand import DemandModel, sample_parametric
from .metric import CostParams, MetricSpace, TreeMetricSpec, euclidean_metric, tree_metric
from .offline import offline_cost
from .online import SimSession, adversary_sequence
from .partition import gamma_set, wshp_euclidean, wshp_tree
from .planner import check_gsm_feasibility, saa_optimal_baseline, solve_gsm

CSV_VERSION = "drnm-results v1"


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    instance: dict
    b: float = 100.0
    h: float = 5.0
    m: int = 1000
    N: int = 50
    seed: int = 0
    families: tuple = ("normal", "lognormal", "gamma")
    mean_range: tuple = (200.0, 1500.0)
    cv_range: tuple = (0.3, 0.8)
    arrival_mode: str = "per_location"
    delta_grid: tuple = (0.0, 0.05, 0.1, 0.2)
    alpha: float = 3.0
    gamma_param: float = 2.0
    baseline_iters: int = 2000
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.m < 1 or self.N < 1:
            raise ConfigError("m and N must be at least 1")
        lo, hi = self.mean_range
        if not (0 < lo <= hi):
            raise ConfigError("mean range must be positive")
        lo, hi = self.cv_range
        if not (0 < lo <= hi <= 1):
            raise ConfigError("cv range must lie in (0, 1]")
        if self.b < self.h or self.h <= 0:
            raise ConfigError("need b >= h > 0")

    @property
    def params(self) -> CostParams:
        return CostParams(b=self.b, h=self.h)

    def to_json(self) -> dict:
        d = {
            "experiment": self.experiment,
            "instance": self.instance,
            "b": self.b,
            "h": self.h,
            "m": self.m,
            "N": self.N,
            "seed": self.seed,
            "families": list(self.families),
            "mean_range": list(self.mean_range),
            "cv_range": list(self.cv_range),
            "arrival_mode": self.arrival_mode,
            "delta_grid": list(self.delta_grid),
            "alpha": self.alpha,
            "gamma_param": self.gamma_param,
            "baseline_iters": self.baseline_iters,
        }
        return d


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        doc = json.load(fh)
    known = {
        "experiment", "instance", "b", "h", "m", "N", "seed", "families",
        "mean_range", "cv_range", "arrival_mode", "delta_grid", "alpha",
        "gamma_param", "baseline_iters",
    }
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key in ("families", "mean_range", "cv_range", "delta_grid"):
        if key in doc:
            doc[key] = tuple(doc[key])
    return ExperimentConfig(**doc)


def saa_evaluate(M: MetricSpace, p: CostParams, q, samples):
    """Mean offline cost over samples plus the per-sample costs.

    With q fixed the joint sample-average LP separates per sample, so the
    mean of per-sample optima equals the coupled optimum.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ConfigError("samples must be nonempty")
    costs = [offline_cost(M, p, q, d).total_cost for d in samples]
    return float(np.mean(costs)), costs


def _draw_model(cfg: ExperimentConfig, rep: int, n: int) -> DemandModel:
    rng = np.random.default_rng([cfg.seed, rep, 7])
    mu = rng.uniform(*cfg.mean_range, size=n)
    cv = rng.uniform(*cfg.cv_range, size=n)
    return DemandModel(mu, cv * mu)


def _tree_instance(cfg: ExperimentConfig):
    t = cfg.instance["tree"]
    spec = TreeMetricSpec(
        K=int(t["K"]), branching=tuple(t["children"]), c=float(t["c"]), lam=float(t["lambda"])
    )
    M, struct = tree_metric(spec)
    return M, struct


def _offline_gap_rep(cfg: ExperimentConfig, rep: int):
    M, struct = _tree_instance(cfg)
    p = cfg.params
    model = _draw_model(cfg, rep, M.n)
    H = wshp_tree(struct, M)
    G = gamma_set(H, p, M)
    plan = solve_gsm(H, G, model, p)
    rows = []
    m_train = cfg.m // 2
    m_eval = cfg.m - m_train
    for k, fam in enumerate(cfg.families):
        train = sample_parametric(model, fam, m_train, [cfg.seed, rep, k, 1])
        evals = sample_parametric(model, fam, m_eval, [cfg.seed, rep, k, 2])
        base = saa_optimal_baseline(M, p, train, iters=cfg.baseline_iters)
        cost_cand, _ = saa_evaluate(M, p, plan.q, evals)
        cost_base, _ = saa_evaluate(M, p, base.q, evals)
        gap = (cost_cand - cost_base) / cost_base
        rows.append((rep, fam, cost_cand, cost_base, gap))
    return rows


def _online_gap_rep(cfg: ExperimentConfig, rep: int):
    e = cfg.instance["euclidean"]
    n = int(e["n"])
    side = float(e.get("side", 70.0))
    dim = int(e.get("dim", 2))
    rng = np.random.default_rng([cfg.seed, rep, 3])
    points = rng.uniform(0.0, side, size=(n, dim))
    M = euclidean_metric(points)
    p = cfg.params
    model = _draw_model(cfg, rep, n)
    H = wshp_euclidean(points, alpha=cfg.alpha, gamma=cfg.gamma_param)
    G = gamma_set(H, p, M)
    plan = solve_gsm(H, G, model, p)
    hier = H.hier_distance_matrix(M)
    rows = []
    for k, fam in enumerate(cfg.families):
        samples = sample_parametric(model, fam, cfg.m, [cfg.seed, rep, k, 2])
        on_costs = []
        off_costs = []
        violations = 0
        for d in samples:
            seq = adversary_sequence(d, cfg.arrival_mode, seed=[cfg.seed, rep, k, 5])
            sess = SimSession(H, M, plan.q, p.b, p.h, mode="float")
            for part in seq.parts:
                sess.arrive(part)
            summary = sess.finalize(hier_dist=hier)
            off = offline_cost(M, p, plan.q, d).total_cost
            if summary.total_true < off - 1e-6 * max(1.0, off):
                violations += 1
            on_costs.append(summary.total_true)
            off_costs.append(off)
        mean_on = float(np.mean(on_costs))
        mean_off = float(np.mean(off_costs))
        rows.append((rep, fam, mean_on, mean_off, (mean_on - mean_off) / mean_off, violations))
    return rows


def _misspec_rep(cfg: ExperimentConfig, rep: int):
    M, struct = _tree_instance(cfg)
    p = cfg.params
    model = _draw_model(cfg, rep, M.n)
    H = wshp_tree(struct, M)
    G = gamma_set(H, p, M)
    plan_true = solve_gsm(H, G, model, p)
    rows = []
    for k, fam in enumerate(cfg.families):
        evals = sample_parametric(model, fam, cfg.m, [cfg.seed, rep, k, 2])
        cost_true, _ = saa_evaluate(M, p, plan_true.q, evals)
        for delta in cfg.delta_grid:
            inflated = solve_gsm(H, G, model.inflate(delta), p)
            slack = check_gsm_feasibility(inflated.q, H, G, model, p)
            cost_hat, _ = saa_evaluate(M, p, inflated.q, evals)
            rows.append((rep, fam, delta, cost_hat, cost_true, cost_hat - cost_true, slack))
    return rows


_REP_FUNCS = {
    "offline-gap": _offline_gap_rep,
    "online-gap": _online_gap_rep,
    "misspec": _misspec_rep,
}

_COLUMNS = {
    "offline-gap": "rep,family,cost_candidate,cost_baseline,relative_gap",
    "online-gap": "rep,family,online_cost,offline_cost,relative_gap,per_sample_violations",
    "misspec": "rep,family,delta,cost_inflated,cost_true,extra_cost,true_constraint_slack",
}


def _pool_size() -> int:
    raw = os.environ.get("DRNM_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_experiment(cfg: ExperimentConfig):
    """Run all repetitions; returns (rows, metadata_lines)."""
    if cfg.experiment not in _REP_FUNCS:
        raise ConfigError(f"unknown experiment {cfg.experiment!r}")
    func = _REP_FUNCS[cfg.experiment]
    workers = _pool_size()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(func, [cfg] * cfg.N, range(cfg.N)))
    else:
        chunks = [func(cfg, rep) for rep in range(cfg.N)]
    rows = [row for chunk in chunks for row in chunk]
    meta = [
        CSV_VERSION,
        f"experiment={cfg.experiment}",
        "baseline=saa_optimal (substitute for the conic benchmark)"
        if cfg.experiment == "offline-gap"
        else "baseline=offline_optimum"
        if cfg.experiment == "online-gap"
        else "baseline=true_parameters",
        "config=" + json.dumps(cfg.to_json(), sort_keys=True),
        "columns: " + _COLUMNS[cfg.experiment],
    ]
    if cfg.experiment == "online-gap":
        e = cfg.instance["euclidean"]
        n = int(e["n"])
        ok = cfg.gamma_param > np.log2(n) * cfg.alpha
        meta.append(f"gamma_exceeds_logn_alpha={ok}")
    return rows, meta


def experiment_offline_gap(cfg: ExperimentConfig):
    """Plan-vs-baseline gaps on tree instances; returns (rows, metadata)."""
    cfg.experiment = "offline-gap"
    return run_experiment(cfg)


def experiment_online_gap(cfg: ExperimentConfig):
    """Online-vs-offline fulfillment gaps on Euclidean instances."""
    cfg.experiment = "online-gap"
    return run_experiment(cfg)


def misspecification_sweep(cfg: ExperimentConfig, delta_grid=None):
    """Costs of plans built from inflated moment estimates."""
    cfg.experiment = "misspec"
    if delta_grid is not None:
        cfg.delta_grid = tuple(delta_grid)
    return run_experiment(cfg)


def write_results_csv(path, rows, meta):
    with open(path, "w") as fh:
        for line in meta:
            fh.write(f"# {line}\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def read_results_csv(path):
    meta, rows = [], []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                meta.append(line[1:].strip())
            elif line:
                rows.append(line.split(","))
    return rows, meta


# ---------------------------------------------------------------------------
# Demand locations distinct from warehouses
# ---------------------------------------------------------------------------


def map_demand_to_warehouses(
    demand_model: DemandModel,
    demand_to_warehouse_dist=None,
    demand_points=None,
    warehouse_points=None,
):
    """Route each demand point to its nearest warehouse and aggregate.

    Distances may be given directly (k x w matrix) or via coordinates.
    Means add; variances add, so sigma_w = sqrt(sum of routed sigma^2).
    Ties go to the lower warehouse index.  Returns (aggregated model,
    routing array).
    """
    if demand_to_warehouse_dist is None:
        if demand_points is None or warehouse_points is None:
            raise ConfigError("need either a distance matrix or both point sets")
        dpts = np.asarray(demand_points, dtype=float)
        wpts = np.asarray(warehouse_points, dtype=float)
        diff = dpts[:, None, :] - wpts[None, :, :]
        demand_to_warehouse_dist = np.sqrt((diff**2).sum(axis=-1))
    D = np.asarray(demand_to_warehouse_dist, dtype=float)
    if D.shape[1] == 0:
        raise ConfigError("warehouse set is empty")
    if D.shape[0] != demand_model.n:
        raise ConfigError("one distance row per demand point required")
    routing = D.argmin(axis=1)  # argmin takes the lowest index on ties
    w = D.shape[1]
    mu = np.zeros(w)
    var = np.zeros(w)
    for k, target in enumerate(routing):
        mu[target] += demand_model.mu[k]
        var[target] += demand_model.sigma[k] ** 2
    uncovered = [int(j) for j in range(w) if mu[j] == 0.0]
    if uncovered:
        raise ConfigError(
            f"warehouses {uncovered} receive no demand; drop them before aggregating"
        )
    return DemandModel(mu, np.sqrt(var)), routing


# ---------------------------------------------------------------------------
# Plot emission (gnuplot scripts; nothing rendered in-process)
# ---------------------------------------------------------------------------


def emit_plots(csv_path, outdir):
    """Write per-family data files and a gnuplot boxplot script."""
    rows, meta = read_results_csv(csv_path)
    columns = None
    for line in meta:
        if line.startswith("columns:"):
            columns = [c.strip() for c in line.split(":", 1)[1].split(",")]
    if columns is None:
        raise ConfigError(f"{csv_path} carries no column header")
    if "relative_gap" in columns:
        value_col = columns.index("relative_gap")
        label = "relative gap"
    elif "extra_cost" in columns:
        value_col = columns.index("extra_cost")
        label = "extra cost"
    else:
        raise ConfigError("no plottable column (relative_gap or extra_cost)")
    fam_col = columns.index("family")

    os.makedirs(outdir, exist_ok=True)
    by_family = {}
    for row in rows:
        by_family.setdefault(row[fam_col], []).append(row[value_col])
    dat_files = []
    for fam in sorted(by_family):
        name = f"gaps_{fam}.dat"
        with open(os.path.join(outdir, name), "w") as fh:
            fh.write("\n".join(by_family[fam]) + "\n")
        dat_files.append((fam, name))

    script = [
        "set style data boxplot",
        "set style boxplot outliers pointtype 7",
        "set style fill solid 0.4",
        f"set ylabel '{label}'",
        "set xtics (" + ", ".join(f"'{fam}' {k + 1}" for k, (fam, _) in enumerate(dat_files)) + ")",
        "plot " + ", ".join(
            f"'{name}' using ({k + 1}):1 notitle" for k, (_, name) in enumerate(dat_files)
        ),
    ]
    gp_path = os.path.join(outdir, "boxplot.gp")
    with open(gp_path, "w") as fh:
        fh.write("\n".join(script) + "\n")
    return gp_path


# ---------------------------------------------------------------------------
# Samples CSV (one row per sample, one column per location)
# ---------------------------------------------------------------------------


def write_samples_csv(path, samples):
    samples = np.asarray(samples, dtype=float)
    with open(path, "w") as fh:
        for row in samples:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def read_samples_csv(path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                rows.append([float(x) for x in line.split(",")])
    return np.asarray(rows, dtype=float)
