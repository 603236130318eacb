"""Command line: solve, example4, noise, certify."""
from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .certify import build_hypothesis_report, run_checks
from .evolution import PropagatorPair
from .io import write_json, write_path_csv
from .noise import BrownianGrid, TraceClassCovariance, hurst_constants, simulate_q_rosenblatt
from .phase import PiecewisePath
from .problem import ConfigError, KNOWN_CHECKS, ProblemSpec, apply_overrides, default_config, load_config, parse_config
from .solver import picard_solve, prepare

REPORT_ENV = "ROSENBLATT_NII_REPORT_DIR"


def report_dir_for(problem: ProblemSpec, override=None) -> Path:
    d = override or os.environ.get(REPORT_ENV) or problem.config.get("report_dir") \
        or os.path.join("reports", problem.config.get("name", "scenario"))
    p = Path(d)
    p.mkdir(parents=True, exist_ok=True)
    return p


def noise_for(problem: ProblemSpec, seed=None):
    seed = problem.seed if seed is None else seed
    grid = BrownianGrid.from_seed(seed, problem.n, problem.beta, problem.Q.n_modes)
    return simulate_q_rosenblatt(problem.H.H, problem.Q, grid)


def run_scenario(problem: ProblemSpec, report_dir=None, checks=None, solve: bool = True) -> tuple[dict, int]:
    """Solve and certify one instance; returns (report, exit status)."""
    t_start = time.perf_counter()
    timing = {}
    out = report_dir_for(problem, report_dir)
    checks = list(problem.checks if checks is None else checks)
    for c in checks:
        if c not in KNOWN_CHECKS:
            raise ConfigError(f"unknown check {c!r}; known: {', '.join(KNOWN_CHECKS)}")
    t = time.perf_counter()
    pair = PropagatorPair(problem.gen, problem.times, problem.ode_h)
    hyp = build_hypothesis_report(problem, pair)
    timing["hypotheses"] = time.perf_counter() - t
    report = {"version": __version__, "seed": problem.seed, "config": problem.describe(),
              "c_H": hurst_constants(problem.H.H)[1], "L_u": hyp.coefficient_fit["L_u"],
              "hypotheses": hyp.as_dict()}
    solution = None
    if solve:
        t = time.perf_counter()
        noise = noise_for(problem)
        ctx = prepare(problem, noise, pair)
        solution, trace = picard_solve(problem, noise, problem.selection, ctx=ctx)
        timing["solve"] = time.perf_counter() - t
        solution.to_csv(out / "path.csv")
        PiecewisePath(problem.times, solution.values, problem.tail, problem.schedule).to_csv(
            out / "history.csv", sidecar=True)
        cols = [f"rho_{k + 1}" for k in range(problem.N)]
        write_path_csv(out / "selection.csv", problem.times, solution.rho, cols, time_col="s")
        noise.to_csv(out / "noise.csv")
        trace.to_json(out / "trace.json")
        report["solver"] = {"verdict": trace.verdict, "iterations": trace.iterations,
                            "final_distance": trace.distances[-1] if trace.distances else None,
                            "max_theta1_ratio": max(trace.theta1_ratios) if trace.theta1_ratios else 0.0,
                            "branch_coverage": solution.branch_coverage(),
                            "provenance": solution.provenance}
    t = time.perf_counter()
    results = run_checks(problem, checks, pair, solution, hyp)
    timing["checks"] = time.perf_counter() - t
    report["checks"] = results
    failing = sorted(k for k, v in results.items() if not v.get("pass", False))
    report["failing"] = failing
    report["pass"] = not failing
    write_json(out / "hypotheses.json", hyp.as_dict())
    timing["total"] = time.perf_counter() - t_start
    report["timing"] = timing
    write_json(out / "report.json", report)
    return report, (0 if not failing else 1)


def run_example4(overrides=None, report_dir=None, checks=None) -> tuple[dict, int]:
    cfg = apply_overrides(default_config(), overrides)
    return run_scenario(parse_config(cfg), report_dir, checks)


def _cmd_solve(args):
    report, code = run_scenario(load_config(args.config), args.report_dir)
    _summary(report)
    return code


def _cmd_example4(args):
    report, code = run_example4(args.set, args.report_dir)
    _summary(report)
    return code


def _cmd_certify(args):
    checks = [c.strip() for c in args.checks.split(",") if c.strip()] if args.checks else None
    report, code = run_scenario(load_config(args.config), args.report_dir, checks, solve=False)
    _summary(report)
    return code


def _cmd_noise(args):
    Q = TraceClassCovariance(np.ones(args.modes))
    grid = BrownianGrid.from_seed(args.seed, args.n, args.tau_max, args.modes)
    path = simulate_q_rosenblatt(args.hurst, Q, grid)
    path.to_csv(args.out)
    print(f"wrote {args.out} ({args.n} steps, H = {args.hurst}, seed = {args.seed})")
    return 0


def _summary(report):
    for name, res in sorted(report["checks"].items()):
        print(f"{name:8s} {'PASS' if res.get('pass') else 'FAIL'}")
    if "solver" in report:
        s = report["solver"]
        print(f"solver   {s['verdict']} after {s['iterations']} iterations")
    if report["failing"]:
        print("failing checks: " + ", ".join(report["failing"]))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rosenblatt-nii", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", help="solve and certify a configured instance")
    s.add_argument("config")
    s.add_argument("--report-dir")
    s.set_defaults(func=_cmd_solve)
    e = sub.add_parser("example4", help="run the bundled example instance")
    e.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    e.add_argument("--report-dir")
    e.set_defaults(func=_cmd_example4)
    n = sub.add_parser("noise", help="simulate a Rosenblatt path to CSV")
    n.add_argument("--hurst", type=float, required=True)
    n.add_argument("--n", type=int, required=True)
    n.add_argument("--seed", type=int, required=True)
    n.add_argument("--out", required=True)
    n.add_argument("--modes", type=int, default=1)
    n.add_argument("--tau-max", type=float, default=1.0)
    n.set_defaults(func=_cmd_noise)
    c = sub.add_parser("certify", help="run certificates without solving")
    c.add_argument("config")
    c.add_argument("--checks", default="")
    c.add_argument("--report-dir")
    c.set_defaults(func=_cmd_certify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
