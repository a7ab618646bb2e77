"""Command-line interface: ``deceptive-mdp {solve,deceive,attack,verify-bounds,reproduce}``.

Exit codes: 0 success, 2 configuration error, 3 infeasible problem,
4 learner divergence, 5 internal error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .exceptions import DivergenceError, InfeasibleError, SpecError

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_DIVERGED, EXIT_INTERNAL = 0, 2, 3, 4, 5
THREADS_ENV = "DECEPTIVE_MDP_THREADS"

log = logging.getLogger("deceptive_mdp")


def _out_dir(path):
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _betas(text):
    if text is None:
        return None
    try:
        return [float(b) for b in str(text).split(",") if b.strip()]
    except ValueError:
        raise SpecError(f"--beta: expected a number or comma-separated list, got {text!r}")


def _threads(args):
    if args.threads is not None:
        return args.threads
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise SpecError(f"{THREADS_ENV} must be an integer, got {env!r}")
    return 1


def _v_reach(args):
    """--v-reach, else the MDP document's own value, else 0."""
    if args.v_reach is not None:
        return args.v_reach
    doc = io.read_document(args.config)
    if doc.get("mtd") is not None:
        return io.mtd_params_from_document(doc["mtd"] or {}).v_reach
    return float(doc.get("v_reach", 0.0))


def _solver_summary(report):
    s = report.summary()
    s.pop("traces", None)
    return s


# -- solve -----------------------------------------------------------------

def cmd_solve(args):
    from .deception import solve_baseline
    from .mdp import policy_of_occupancy, revenue

    mdp = io.load_mdp(args.config, check_goals=not args.no_goal_check)
    out = _out_dir(args.out)
    v_reach = _v_reach(args)
    io.write_manifest(out, "solve", {"config": args.config}, args.seed, {"v_reach": v_reach})
    try:
        report = solve_baseline(mdp, v_reach)
    except InfeasibleError as e:
        io.write_json(out / "report.json", {"status": "infeasible", **e.report.info})
        raise
    x = report.solution
    io.save_occupancy(out / "occupancy.csv", mdp, x)
    io.save_policy(out / "policy.csv", mdp, policy_of_occupancy(x))
    summary = {"optimal_revenue": revenue(mdp, x), "total_occupancy": x.total(),
               "v_reach": v_reach, "solver": _solver_summary(report)}
    io.write_json(out / "report.json", summary)
    print(f"R* = {io.fmt(summary['optimal_revenue'])}  ({report.status}, "
          f"{x.values.size} occupancy entries)")
    return EXIT_OK


# -- deceive / verify-bounds ----------------------------------------------

def _deception_setup(args, mdp):
    """Build the pieces of a DeceptionConfig from the document and flags."""
    from .mdp import MMDPSpec, occupancy_of_policy

    doc = io.read_document(args.deception) if args.deception else {}
    kind = args.kind or doc.get("kind")
    if kind is None:
        raise SpecError("deception kind missing (use --kind or a 'kind' field)")
    kind = "equivocal_soft" if kind == "equivocal" else kind
    betas = _betas(args.beta) if args.beta is not None else doc.get("beta", 0.0)
    betas = [float(b) for b in (betas if isinstance(betas, list) else [betas])]
    v_reach = args.v_reach if args.v_reach is not None else float(doc.get("v_reach", _v_reach(args)))
    base_dir = Path(args.deception).parent if args.deception else Path(".")
    names = mdp.state_names or tuple(str(i) for i in range(mdp.n_states))

    def states(field):
        vals = doc.get(field)
        if vals is None:
            return None
        return tuple(io._index(v, names, field) for v in vals)

    x_tar = None
    goal, decoy = states("goal_states"), states("decoy_states")
    mtd_doc = io.read_document(args.config).get("mtd") is not None
    if kind == "targeted":
        if doc.get("x_tar"):
            x_tar = io.load_occupancy(base_dir / doc["x_tar"], mdp).values
        elif doc.get("target_policy"):
            pol = io.load_policy(base_dir / doc["target_policy"], mdp)
            x_tar = occupancy_of_policy(mdp, pol).values
        elif mtd_doc and isinstance(mdp, MMDPSpec):
            from .mtd import mtd_target
            params = io.mtd_params_from_document(io.read_document(args.config)["mtd"] or {})
            x_tar = mtd_target(mdp, params, int(doc.get("target_agent", 1)),
                               float(doc.get("target_reach", 8.5))).values
        else:
            raise SpecError("targeted deception needs 'x_tar' or 'target_policy'")
    if kind.startswith("equivocal") and decoy is None:
        if mtd_doc and isinstance(mdp, MMDPSpec):
            from .mtd import equivocal_sets
            goal, decoy = equivocal_sets(mdp, 0, int(doc.get("equivocal_agent", 1)))
        else:
            raise SpecError("equivocal deception needs 'decoy_states'")
    extra = {"starts": int(doc.get("starts", 8)), "seed": int(doc.get("seed", args.seed or 0))}
    return kind, betas, v_reach, x_tar, goal, decoy, extra


def _deceive_one(mdp, kind, beta, v_reach, x_tar, goal, decoy, extra, baseline):
    from .deception import DeceptionConfig, verify_bound, synthesize

    cfg = DeceptionConfig(kind, beta, v_reach, x_tar, decoy, goal, **extra)
    report, _ = synthesize(mdp, cfg, baseline)
    bound = verify_bound(mdp, cfg, baseline) if kind != "equivocal_exact" else None
    return cfg, report, bound


def cmd_deceive(args):
    from .deception import solve_baseline
    from .mdp import policy_of_occupancy, revenue, revenue_loss

    mdp = io.load_mdp(args.config, check_goals=not args.no_goal_check)
    kind, betas, v_reach, x_tar, goal, decoy, extra = _deception_setup(args, mdp)
    out = _out_dir(args.out)
    io.write_manifest(out, "deceive", {"config": args.config, "deception": args.deception},
                      args.seed, {"kind": kind, "betas": betas, "v_reach": v_reach})
    baseline = solve_baseline(mdp, v_reach)
    r_star = revenue(mdp, baseline.solution)
    rows = []
    for beta in betas:
        tag = "" if len(betas) == 1 else f"_beta{io.fmt(beta)}"
        try:
            cfg, report, bound = _deceive_one(mdp, kind, beta, v_reach, x_tar, goal, decoy,
                                              extra, baseline)
        except InfeasibleError as e:
            io.write_json(out / f"report{tag}.json",
                          {"kind": kind, "beta": beta, "status": "infeasible",
                           "phase1_certificate": e.report.info if e.report else {}})
            raise
        x = report.solution
        io.save_occupancy(out / f"occupancy{tag}.csv", mdp, x)
        io.save_policy(out / f"policy{tag}.csv", mdp, policy_of_occupancy(x))
        r = revenue(mdp, x)
        entry = {"kind": kind, "beta": beta, "revenue": r, "optimal_revenue": r_star,
                 "loss": revenue_loss(r_star, r) if r_star else float("nan"),
                 "bound": bound.theoretical_bound if bound else float("inf"),
                 "satisfied": bound.satisfied if bound else None,
                 "solver": _solver_summary(report)}
        if kind == "diversionary":
            entry["solver_semantics"] = ("local optimum of a convex maximisation; the "
                                         "starts include x*, so the bound still applies")
        io.write_json(out / f"report{tag}.json", entry)
        rows.append(entry)
        print(f"beta={io.fmt(beta)}  revenue={io.fmt(r)}  loss={io.fmt(entry['loss'])}  "
              f"bound={io.fmt(entry['bound'])}")
    with open(out / "sweep.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["kind", "beta", "revenue", "loss", "bound", "satisfied"])
        for e in rows:
            w.writerow([e["kind"], io.fmt(e["beta"]), io.fmt(e["revenue"]), io.fmt(e["loss"]),
                        io.fmt(e["bound"]), e["satisfied"]])
    return EXIT_OK


def cmd_verify_bounds(args):
    from .deception import KINDS, solve_baseline

    mdp = io.load_mdp(args.config, check_goals=not args.no_goal_check)
    kind, betas, v_reach, x_tar, goal, decoy, extra = _deception_setup(args, mdp)
    if kind == "equivocal_exact":
        raise SpecError("the exact equivocal problem has no beta-bound to verify")
    out = _out_dir(args.out)
    io.write_manifest(out, "verify-bounds", {"config": args.config,
                                             "deception": args.deception},
                      args.seed, {"kind": kind, "betas": betas})
    baseline = solve_baseline(mdp, v_reach)
    violations = 0
    with open(out / "bounds.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["kind", "beta", "empirical_loss", "theoretical_bound", "satisfied",
                    "solver_status"])
        for beta in betas:
            _, _, b = _deceive_one(mdp, kind, beta, v_reach, x_tar, goal, decoy, extra,
                                   baseline)
            violations += not b.satisfied
            w.writerow([kind, io.fmt(beta), io.fmt(b.empirical_loss),
                        io.fmt(b.theoretical_bound), b.satisfied, b.solver_status])
            print(f"beta={io.fmt(beta)}  loss={io.fmt(b.empirical_loss)}  "
                  f"bound={io.fmt(b.theoretical_bound)}  {'ok' if b.satisfied else 'VIOLATED'}")
    if violations:
        log.error("%d bound violations", violations)
        return EXIT_INTERNAL
    return EXIT_OK


# -- attack ----------------------------------------------------------------

def _features(mdp, name):
    from .irl import FeatureMap
    from .mdp import MMDPSpec

    if name == "auto":
        name = "agent-states" if isinstance(mdp, MMDPSpec) else "states"
    if name == "agent-states":
        if not isinstance(mdp, MMDPSpec):
            raise SpecError("agent-states features need a multi-agent spec")
        return FeatureMap.agent_states(mdp)
    if name == "states":
        return FeatureMap.one_hot_states(*mdp.shape)
    if name == "pairs":
        return FeatureMap.one_hot_pairs(*mdp.shape)
    raise SpecError(f"unknown feature map {name!r}")


def cmd_attack(args):
    from .irl import LEARNER_NAMES, make_learner
    from .mdp import MMDPSpec, sample_trajectories
    from .mtd import DEFAULT_IRL, MetricWeights, deception_metric, likelihoods

    mdp = io.load_mdp(args.config, check_goals=not args.no_goal_check)
    policy = io.load_policy(args.policy, mdp)
    phi = _features(mdp, args.features)
    name = args.irl.lower()
    params = {}
    if io.read_document(args.config).get("mtd") is not None:
        params = dict(DEFAULT_IRL.get(name, {}))
    if args.irl_params:
        try:
            params.update(json.loads(args.irl_params))
        except json.JSONDecodeError as e:
            raise SpecError(f"--irl-params: invalid JSON ({e.msg})") from None
    if "hidden" in params:
        params["hidden"] = tuple(params["hidden"])
    seed = args.seed or 0
    out = _out_dir(args.out)
    io.write_manifest(out, "attack", {"config": args.config, "policy": args.policy}, seed,
                      {"irl": name, "n": args.n, "t": args.t, "irl_params": params})
    try:
        learner = make_learner(name, mdp, phi, random_state=seed, **params)
    except ValueError as e:
        raise SpecError(str(e)) from None
    dataset = sample_trajectories(mdp, policy, args.n, args.t, seed)
    io.save_trajectories(out / "trajectories.csv", dataset)
    try:
        learner.fit(dataset)
    except DivergenceError as e:
        io.write_json(out / "status.json", {"irl": name, "status": "diverged", "message": str(e)})
        raise
    est = learner.reward_
    io.save_reward_estimate(out / f"reward_{name}.json", mdp, est)
    result = {"irl": LEARNER_NAMES.get(name, name), "status": est.status,
              "iterations": est.iterations, "final_error": est.final_error}
    if isinstance(mdp, MMDPSpec):
        weights = MetricWeights()
        D = [deception_metric(est, weights, i, mdp) for i in range(mdp.n_agents)]
        L = likelihoods(D, weights.lam)
        result.update(D=D, L=L.tolist(), inferred_agent=int(np.argmax(L)))
        print(f"inferred agent {result['inferred_agent']}  L={np.round(L, 4).tolist()}")
    io.write_json(out / "status.json", result)
    return EXIT_OK


# -- reproduce -------------------------------------------------------------

def experiment_config_from_document(doc):
    from .mtd import ExperimentConfig, MetricWeights

    known = {"mtd", "weights", "grids", "irl", "runs", "n_trajectories", "horizon", "seed",
             "target_agent", "target_reach", "equivocal_agent", "starts"}
    unknown = set(doc) - known
    if unknown:
        raise SpecError(f"experiment config: unknown keys {sorted(unknown)}")
    kw = {k: doc[k] for k in known - {"mtd", "weights"} if k in doc}
    kw["params"] = io.mtd_params_from_document(doc.get("mtd") or {})
    wdoc = doc.get("weights") or {}
    if not isinstance(wdoc, dict):
        raise SpecError("field 'weights': expected a mapping")
    wkw = {}
    if "w" in wdoc:
        wkw["w"] = {str(k): float(v) for k, v in wdoc["w"].items()}
    if "lambda" in wdoc or "lam" in wdoc:
        wkw["lam"] = float(wdoc.get("lambda", wdoc.get("lam")))
    kw["weights"] = MetricWeights(**wkw)
    try:
        return ExperimentConfig(**kw)
    except TypeError as e:
        raise SpecError(f"experiment config: {e}") from None


def write_report_csv(path, report):
    cols = report.columns()
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(cols)
        for r in report.rows:
            w.writerow([r["kind"], io.fmt(r["beta"]), r["irl"], r["run"],
                        *[io.fmt(v) for v in r["L"]], r["inferred_agent"],
                        io.fmt(r["revenue"]), io.fmt(r["revenue_fraction"]),
                        io.fmt(r["bound"]), r["status"]])


def cmd_reproduce(args):
    import time

    from .mtd import ExperimentConfig, run_experiment

    cfg = (experiment_config_from_document(io.read_document(args.config)) if args.config
           else ExperimentConfig())
    out = _out_dir(args.out)
    betas = _betas(args.beta)
    kinds = [args.kind] if args.kind else None
    irl = [a.strip().lower() for a in args.irl.split(",")] if args.irl else None
    if args.v_reach is not None:
        cfg.params.v_reach = args.v_reach
    threads = _threads(args)
    t0 = time.perf_counter()
    report = run_experiment(config=cfg, deception_kinds=kinds, beta_grid=betas,
                            irl_algorithms=irl, runs=args.runs, seed=args.seed,
                            threads=threads)
    elapsed = time.perf_counter() - t0
    io.write_manifest(out, "reproduce", {"config": args.config}, report.config["seed"],
                      {"threads": threads, "wall_clock_seconds": round(elapsed, 3),
                       "cells": [{"kind": c.kind, "beta": c.beta, "status": c.status,
                                  "message": c.message, "seconds": round(c.seconds, 3)}
                                 for c in report.cells]})
    write_report_csv(out / "results.csv", report)
    io.write_json(out / "summary.json", {"config": report.config,
                                         "optimal_revenue": report.optimal_revenue,
                                         "cells": report.summary()})
    for e in report.summary():
        L = e.get("mean_L")
        print(f"{e['kind']:>15} beta={io.fmt(e['beta']):>6} {e['irl']:>6} "
              f"frac={io.fmt(round(e['revenue_fraction'], 4)) if e['status'] == 'ok' else '-':>7} "
              f"inferred={e.get('inferred_agent', '-')} "
              f"L={np.round(L, 3).tolist() if L else e['status']}")
    failed = [c for c in report.cells if c.status != "ok"]
    if failed and len(failed) == len(report.cells):
        return EXIT_INFEASIBLE if all(c.status == "infeasible" for c in failed) else EXIT_INTERNAL
    return EXIT_OK


# -- entry point -----------------------------------------------------------

def build_parser():
    from . import __version__

    p = argparse.ArgumentParser(prog="deceptive-mdp",
                                description="Deceptive policy synthesis against IRL adversaries.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_help):
        sp.add_argument("--config", required=sp.prog.split()[-1] != "reproduce", help=config_help)
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="master seed")
        sp.add_argument("--v-reach", type=float, default=None, dest="v_reach")
        sp.add_argument("--no-goal-check", action="store_true",
                        help="skip the goal-state reward ordering check")

    s = sub.add_parser("solve", help="solve the goal-reach LP")
    common(s, "MDP spec document")
    s.set_defaults(func=cmd_solve)

    for name, func, hlp in (("deceive", cmd_deceive, "synthesise a deceptive policy"),
                            ("verify-bounds", cmd_verify_bounds,
                             "compare revenue loss with the theoretical bound")):
        d = sub.add_parser(name, help=hlp)
        common(d, "MDP spec document")
        d.add_argument("--deception", help="deception config document")
        d.add_argument("--kind", choices=["diversionary", "targeted", "equivocal",
                                          "equivocal_soft", "equivocal_exact"])
        d.add_argument("--beta", help="beta value or comma-separated grid")
        d.set_defaults(func=func)

    a = sub.add_parser("attack", help="sample trajectories and run an IRL adversary")
    common(a, "MDP spec document")
    a.add_argument("--policy", required=True, help="policy CSV (state, action, probability)")
    a.add_argument("--irl", required=True, help="al, maxent or deep")
    a.add_argument("--irl-params", help="JSON object of learner hyperparameters")
    a.add_argument("--features", default="auto",
                   choices=["auto", "agent-states", "states", "pairs"])
    a.add_argument("--n", type=int, default=50, help="number of trajectories")
    a.add_argument("--t", type=int, default=30, help="trajectory length")
    a.set_defaults(func=cmd_attack)

    r = sub.add_parser("reproduce", help="run the moving-target-defense beta sweep")
    common(r, "experiment config document (defaults if omitted)")
    r.add_argument("--kind", choices=["diversionary", "targeted", "equivocal",
                                      "equivocal_soft", "equivocal_exact"])
    r.add_argument("--beta", help="beta grid override, comma-separated")
    r.add_argument("--irl", help="comma-separated learners (al,maxent,deep)")
    r.add_argument("--runs", type=int, default=None)
    r.add_argument("--threads", type=int, default=None,
                   help=f"worker threads (fallback: ${THREADS_ENV}, then 1)")
    r.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SpecError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as e:
        print(f"infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except DivergenceError as e:
        print(f"diverged: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except Exception as e:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
