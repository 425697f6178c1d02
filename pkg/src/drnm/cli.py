"""drnm command line: instance generation, partitions, plans, costs,
simulation and experiment reproduction."""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction

import numpy as np

from . import demand, harness, metric, offline, online, partition, planner


def _write_json(doc, path):
    if path == "-":
        json.dump(doc, sys.stdout, indent=1)
        sys.stdout.write("\n")
    else:
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1)


def _params(args) -> metric.CostParams:
    return metric.CostParams(b=args.b, h=args.h)


# -- metric -----------------------------------------------------------------


def cmd_metric_validate(args):
    M, _, _ = metric.load_instance(args.instance)
    report = metric.validate_metric(M)
    for item in report:
        print(item)
    print(f"{'INVALID' if report else 'VALID'} metric with n={M.n}")
    return 1 if report else 0


def cmd_metric_gen_tree(args):
    branching = tuple(int(x) for x in args.children.split(","))
    spec = metric.TreeMetricSpec(K=args.K, branching=branching, c=args.c, lam=args.lam)
    _write_json(metric.instance_to_json(tree=spec), args.output)
    return 0


def cmd_metric_gen_euclidean(args):
    rng = np.random.default_rng(args.seed)
    pts = rng.uniform(0.0, args.side, size=(args.n, args.dim))
    _write_json(metric.instance_to_json(points=pts), args.output)
    return 0


# -- partition ----------------------------------------------------------------


def cmd_partition_build(args):
    M, points, struct = metric.load_instance(args.instance)
    if args.method == "uniform":
        H = partition.wshp_uniform(M, args.alpha, args.gamma)
    elif args.method == "euclidean":
        if points is None:
            raise SystemExit("euclidean method needs a points instance")
        H = partition.wshp_euclidean(points, args.alpha, args.gamma)
    elif args.method == "general":
        H = partition.wshp_general(M)
    elif args.method == "tree":
        if struct is None:
            raise SystemExit("tree method needs a tree instance")
        H = partition.wshp_tree(struct, M)
    else:
        raise SystemExit(f"unknown method {args.method}")
    partition.save_wshp(H, args.output)
    report = partition.verify_wshp(M, H)
    if report:
        for item in report:
            print(item, file=sys.stderr)
        return 1
    print(f"built {args.method} hierarchy: R={H.R}, clusters={len(H.clusters)}")
    return 0


def cmd_partition_verify(args):
    M, _, _ = metric.load_instance(args.instance)
    H = partition.load_wshp(args.partition, M)
    report = partition.verify_wshp(M, H)
    for item in report:
        print(item)
    print(f"{'INVALID' if report else 'VALID'} hierarchy with R={H.R}")
    return 1 if report else 0


# -- demand -------------------------------------------------------------------


def cmd_demand_sample(args):
    model = demand.load_model(args.model)
    if args.family == "worst-case":
        lam = args.lam if args.lam is not None else demand.lambda_for_alpha(args.alpha, model.nu)
        dist = demand.worst_case_table1(model, range(model.n), lam)
        samples = dist.sample(args.m, args.seed)
    else:
        samples = demand.sample_parametric(model, args.family, args.m, args.seed)
    harness.write_samples_csv(args.output, samples)
    return 0


# -- plan ---------------------------------------------------------------------


def cmd_plan_gsm(args):
    M, _, _ = metric.load_instance(args.instance)
    H = partition.load_wshp(args.partition, M)
    model = demand.load_model(args.model)
    p = _params(args)
    G = partition.gamma_set(H, p, M)
    plan = planner.solve_gsm(H, G, model, p)
    _write_json(planner.plan_to_json(plan), args.output)
    return 0


# -- cost ---------------------------------------------------------------------


def cmd_cost(args):
    M, _, struct = metric.load_instance(args.instance)
    plan = planner.load_plan(args.plan)
    demands = harness.read_samples_csv(args.demand)
    p = _params(args)
    out = []
    for d in demands:
        if args.kind == "offline":
            fp = offline.offline_cost(M, p, plan.q, d)
            raw = offline.raw_distance_view(fp, M, p)
            out.append(
                {
                    "overage": fp.overage,
                    "underage": fp.underage,
                    "shipping": raw.shipping_cost,
                    "shipping_truncated": fp.shipping_cost,
                    "total": fp.total_cost,
                }
            )
        elif args.kind == "ch":
            if args.partition is None:
                raise SystemExit("cost ch needs --partition")
            H = partition.load_wshp(args.partition, M)
            value, warned = offline.cost_upper_bound_CH(H, M, p, plan.q, d)
            out.append({"total": value, "below_mean_warning": warned})
        elif args.kind == "tree":
            if struct is None:
                raise SystemExit("tree cost needs a tree instance")
            out.append({"total": offline.tree_closed_form_cost(struct, p, plan.q, d)})
    _write_json(out, args.output)
    return 0


# -- simulate -------------------------------------------------------------------


def _frac_str(x):
    return f"{x.numerator}/{x.denominator}" if isinstance(x, Fraction) else repr(float(x))


def cmd_simulate(args):
    M, _, _ = metric.load_instance(args.instance)
    H = partition.load_wshp(args.partition, M)
    plan = planner.load_plan(args.plan)
    demands = harness.read_samples_csv(args.demand)
    mode = "exact" if args.exact else "float"
    hier = H.hier_distance_matrix(M)
    summaries = []
    with open(args.output, "w") as fh:
        for row, d in enumerate(demands):
            seq = online.adversary_sequence(
                d, args.mode, seed=args.seed, chunk=args.chunk,
                M=M, H=H, q=plan.q, b=args.b, h=args.h,
            )
            sess = online.SimSession(H, M, plan.q, args.b, args.h, mode=mode)
            for part in seq.parts:
                for step in sess.arrive(part):
                    fh.write(
                        json.dumps(
                            {
                                "sample": row,
                                "part": step.part,
                                "location": step.location,
                                "delta": _frac_str(step.delta),
                                "level": step.level,
                                "cluster": step.cluster,
                                "sources": [[j, _frac_str(a)] for j, a in step.sources],
                            }
                        )
                        + "\n"
                    )
            summary = sess.finalize(hier_dist=hier)
            theta = sess.theta_online_table()
            summaries.append(
                {
                    "sample": row,
                    "underage_cost": summary.underage_cost,
                    "overage_cost": summary.overage_cost,
                    "shipping_true_metric": summary.shipping_true,
                    "shipping_hierarchical": summary.shipping_hier,
                    "total_true_metric": summary.total_true,
                    "total_hierarchical": summary.total_hier,
                    "theta_online": {
                        str(cid): {str(k): _frac_str(v) for k, v in tab.items()}
                        for cid, tab in theta.items()
                        if tab
                    },
                    "theta_offline": {
                        str(cid): {
                            str(k): _frac_str(v)
                            for k, v in sess.theta_offline(cid).items()
                        }
                        for cid in sess.H.clusters
                    },
                }
            )
    _write_json(summaries, args.summary)
    return 0


# -- experiments ----------------------------------------------------------------


def cmd_experiment(args):
    cfg = harness.load_config(args.config)
    if cfg.experiment != args.kind:
        cfg.experiment = args.kind
    rows, meta = harness.run_experiment(cfg)
    harness.write_results_csv(args.output, rows, meta)
    print(f"wrote {len(rows)} rows to {args.output}")
    return 0


def cmd_experiment_plots(args):
    path = harness.emit_plots(args.results, args.output)
    print(f"wrote {path}")
    return 0


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="drnm")
    sub = ap.add_subparsers(dest="group", required=True)

    g = sub.add_parser("metric", help="instance generation and validation")
    gs = g.add_subparsers(dest="cmd", required=True)
    s = gs.add_parser("validate")
    s.add_argument("instance")
    s.set_defaults(func=cmd_metric_validate)
    s = gs.add_parser("gen-tree")
    s.add_argument("--K", type=int, required=True)
    s.add_argument("--children", required=True, help="comma list, root downwards")
    s.add_argument("--c", type=float, default=1.0)
    s.add_argument("--lam", type=float, default=2.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("-o", "--output", default="-")
    s.set_defaults(func=cmd_metric_gen_tree)
    s = gs.add_parser("gen-euclidean")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--dim", type=int, default=2)
    s.add_argument("--side", type=float, default=70.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("-o", "--output", default="-")
    s.set_defaults(func=cmd_metric_gen_euclidean)

    g = sub.add_parser("partition", help="build and verify hierarchies")
    gs = g.add_subparsers(dest="cmd", required=True)
    s = gs.add_parser("build")
    s.add_argument("instance")
    s.add_argument("--method", required=True, choices=["uniform", "euclidean", "general", "tree"])
    s.add_argument("--alpha", type=float, default=3.0)
    s.add_argument("--gamma", type=float, default=4.0)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_partition_build)
    s = gs.add_parser("verify")
    s.add_argument("instance")
    s.add_argument("partition")
    s.set_defaults(func=cmd_partition_verify)

    g = sub.add_parser("demand", help="demand sampling")
    gs = g.add_subparsers(dest="cmd", required=True)
    s = gs.add_parser("sample")
    s.add_argument("model", help="JSON with mu and sigma arrays")
    s.add_argument("--family", required=True,
                   choices=["normal", "lognormal", "gamma", "worst-case"])
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--lam", type=float, default=None)
    s.add_argument("--alpha", type=float, default=1.0)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_demand_sample)

    g = sub.add_parser("plan", help="inventory plans")
    gs = g.add_subparsers(dest="cmd", required=True)
    s = gs.add_parser("gsm")
    s.add_argument("instance")
    s.add_argument("partition")
    s.add_argument("model")
    s.add_argument("--b", type=float, required=True)
    s.add_argument("--h", type=float, required=True)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_plan_gsm)

    g = sub.add_parser("cost", help="cost evaluation")
    gs = g.add_subparsers(dest="kind", required=True)
    for kind in ("offline", "ch", "tree"):
        s = gs.add_parser(kind)
        s.add_argument("instance")
        s.add_argument("--plan", required=True)
        s.add_argument("--demand", required=True)
        s.add_argument("--partition")
        s.add_argument("--b", type=float, required=True)
        s.add_argument("--h", type=float, required=True)
        s.add_argument("-o", "--output", default="-")
        s.set_defaults(func=cmd_cost, kind=kind)

    s = sub.add_parser("simulate", help="run the online policy")
    s.add_argument("instance")
    s.add_argument("--plan", required=True)
    s.add_argument("--partition", required=True)
    s.add_argument("--demand", required=True)
    s.add_argument("--mode", default="per_location")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--chunk", type=float, default=None)
    s.add_argument("--b", type=float, required=True)
    s.add_argument("--h", type=float, required=True)
    s.add_argument("--exact", action="store_true", help="exact rational arithmetic")
    s.add_argument("-o", "--output", required=True, help="trace JSONL path")
    s.add_argument("--summary", default="-")
    s.set_defaults(func=cmd_simulate)

    g = sub.add_parser("experiment", help="paper-scale reproductions")
    gs = g.add_subparsers(dest="cmd", required=True)
    for kind in ("offline-gap", "online-gap", "misspec"):
        s = gs.add_parser(kind)
        s.add_argument("--config", required=True)
        s.add_argument("-o", "--output", required=True)
        s.set_defaults(func=cmd_experiment, kind=kind)
    s = gs.add_parser("plots")
    s.add_argument("results")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_experiment_plots)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
