"""Command line front end: solve, verify against the oracle, bench, jrp.

Exit codes: 0 feasible solve (or verified match), 1 schema/usage error,
2 infeasible, 3 tau-unconverged or numerically unstable.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time

from .approximate import ApproxConfig, Strategy
from .engine import SolverConfig, solve, solve_with_reuse
from .errors import TensorTourError


def _load_json(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise SystemExit(f"error: no such file: {path}")
    except json.JSONDecodeError as exc:
        raise SystemExit(f"error: {path} is not valid JSON: {exc}")


def _parse_approx(text):
    if text is None or text == "all":
        return None
    try:
        name, _, k = text.partition(":")
        strategy = Strategy({"random": "random", "nearest": "nearest",
                             "failures": "failures"}[name])
        return ApproxConfig(strategy=strategy, k=int(k) if k else None)
    except (KeyError, ValueError):
        raise SystemExit(f"error: bad --approx value {text!r} "
                         "(use all | random:k | nearest:k | failures:k)")


def _config_from_args(args):
    tau = "auto" if args.tau == "auto" else float(args.tau)
    return SolverConfig(tau=tau, seed=args.seed, approx=_parse_approx(args.approx),
                        mps_bond_cap=args.mps_bond, reuse=args.reuse == "on")


def _exit_code(solution):
    if solution.status == "ok" and solution.feasible:
        return 0
    if solution.status in ("unstable", "tau_unconverged"):
        return 3
    return 2


def cmd_solve(args):
    from .jsonio import dump_json, problem_from_dict, solution_to_dict, SchemaError

    doc = _load_json(args.input)
    try:
        problem = problem_from_dict(doc)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    config = _config_from_args(args)
    runner = solve_with_reuse if args.reuse == "on" else solve
    try:
        solution = runner(problem, config)
    except TensorTourError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out = solution_to_dict(solution, include_timings=args.timings)
    if args.format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["route", "cost", "feasible", "status"])
        writer.writerow([" ".join(map(str, out["route"])), out["cost"],
                         out["feasible"], out["status"]])
        sys.stdout.write(buf.getvalue())
    else:
        sys.stdout.write(dump_json(out))
    return _exit_code(solution)


def cmd_verify(args):
    from .jsonio import dump_json, problem_from_dict, solution_to_dict, SchemaError
    from .oracle import optimal_set

    doc = _load_json(args.input)
    try:
        problem = problem_from_dict(doc)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    config = _config_from_args(args)
    solution = solve(problem, config)
    oracle = optimal_set(problem)
    out = solution_to_dict(solution, include_timings=args.timings)
    if oracle.infeasible:
        match = solution.status == "infeasible"
        out["oracle_objective"] = None
    else:
        match = solution.feasible and solution.cost == oracle.objective
        out["oracle_objective"] = oracle.objective
        out["oracle_optimal_routes"] = [list(r) for r in oracle.routes]
    out["oracle_match"] = bool(match)
    sys.stdout.write(dump_json(out))
    return 0 if match else 2


def cmd_bench(args):
    import numpy as np

    from .problems import CostModel, TourProblem, Variant

    if args.max_n > 14:
        print("error: bench guard: N must stay <= 14", file=sys.stderr)
        return 1
    writer = csv.writer(sys.stdout)
    writer.writerow(["n", "wall_s", "mults", "peak_w_elements",
                     "reuse_wall_s", "reuse_mults_tail", "plain_mults_tail"])
    rng = np.random.default_rng(args.seed)
    for n in range(args.min_n, args.max_n + 1):
        costs = rng.integers(1, 101, size=(n, n)).astype(float)
        problem = TourProblem(n_nodes=n, n_steps=n, variant=Variant.TSP,
                              returning=True, cost_model=CostModel(step_costs=costs))
        config = SolverConfig(tau="auto", seed=args.seed)
        t0 = time.perf_counter()
        plain = solve(problem, config)
        wall = time.perf_counter() - t0
        t0 = time.perf_counter()
        reused = solve_with_reuse(problem, config)
        wall_reuse = time.perf_counter() - t0
        rep, rep_r = plain.report, reused.report
        writer.writerow([n, f"{wall:.4f}", rep.total_mults, rep.peak_w_elements,
                         f"{wall_reuse:.4f}", sum(rep_r.iter_mults[1:]),
                         sum(rep.iter_mults[1:])])
    return 0


def cmd_jrp(args):
    from .jsonio import dump_json, jrp_from_dict, SchemaError

    doc = _load_json(args.input)
    try:
        inst = jrp_from_dict(doc)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    from .jrp import brute_force_assignment, solve_jrp, swap_orientation

    if args.swap and inst.n_vacancies > inst.n_workers:
        inst = swap_orientation(inst)
    config = _config_from_args(args)
    result = solve_jrp(inst, config)
    out = {
        "assignment": list(result.x),
        "cost": result.cost,
        "quality_gain": result.quality_gain,
        "affinity_gain": result.affinity_gain,
        "degenerate_choices": result.degenerate_choices,
        "tie_counts": list(result.tie_counts),
        "status": result.solver_status,
    }
    if args.verify:
        best, routes = brute_force_assignment(inst)
        out["oracle_objective"] = best
        out["oracle_match"] = best is not None and result.cost == best
    sys.stdout.write(dump_json(out))
    if result.solver_status != "ok":
        return 3
    if args.verify and not out.get("oracle_match", True):
        return 2
    return 0


def _add_common(sub):
    sub.add_argument("--input", required=True, help="problem JSON file")
    sub.add_argument("--tau", default="auto", help="damping factor or 'auto'")
    sub.add_argument("--seed", type=int, default=0, help="tie-break RNG seed")
    sub.add_argument("--approx", default=None,
                     help="all | random:k | nearest:k | failures:k")
    sub.add_argument("--mps-bond", type=int, default=None, dest="mps_bond",
                     help="compress intermediate W tensors to this bond dimension")
    sub.add_argument("--reuse", choices=("on", "off"), default="off",
                     help="reuse the first sweep's W tensors")
    sub.add_argument("--format", choices=("json", "csv"), default="json")
    sub.add_argument("--timings", action="store_true",
                     help="include wall-clock timings (breaks byte determinism)")


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="tensortour",
        description="Tensor-network solver for TSP variants and job reassignment")
    subs = parser.add_subparsers(dest="command", required=True)

    p_solve = subs.add_parser("solve", help="solve a problem document")
    _add_common(p_solve)
    p_solve.set_defaults(func=cmd_solve)

    p_verify = subs.add_parser("verify", help="solve and compare with the brute-force oracle")
    _add_common(p_verify)
    p_verify.set_defaults(func=cmd_verify)

    p_bench = subs.add_parser("bench", help="scaling benchmark over plain TSP sizes")
    p_bench.add_argument("--min-n", type=int, default=4, dest="min_n")
    p_bench.add_argument("--max-n", type=int, default=10, dest="max_n")
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.set_defaults(func=cmd_bench)

    p_jrp = subs.add_parser("jrp", help="solve a job reassignment document")
    _add_common(p_jrp)
    p_jrp.add_argument("--swap", action="store_true",
                       help="swap orientation when vacancies outnumber workers")
    p_jrp.add_argument("--verify", action="store_true",
                       help="compare against the brute-force assignment oracle")
    p_jrp.set_defaults(func=cmd_jrp)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
