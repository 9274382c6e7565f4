"""``maxinv`` command-line front end.

Exit codes: 0 success, 2 no certifiable terminal cost, 3 set iteration did
not converge, 4 set not contractive, 5 solver or certification failure,
64 invalid problem file or flags, 66 missing input or artifact.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys as _sys

import numpy as np

from . import errors
from .invariance import lqr_invariant_set
from .lqr import finite_horizon_gain, solve_dare
from .mpc import MAX_HORIZON, build_controller, feasible_region_grid, simulate
from .pipeline import recertify_bundle, run_pipeline, write_artifacts
from .polytope import HPolytope
from .problem import load_problem
from .terminal_cost import OBJECTIVE_ALIASES
from .vertex_controls import OBJECTIVES as LP_OBJECTIVES

logger = logging.getLogger("maxinv")

EXIT_OK = 0
EXIT_INFEASIBLE_COST = 2
EXIT_NOT_CONVERGED = 3
EXIT_NOT_CONTRACTIVE = 4
EXIT_SOLVER = 5
EXIT_USAGE = 64
EXIT_NO_INPUT = 66
REPLAY_TOL = 1e-9


class MissingArtifact(Exception):
    pass


def _configure_logging():
    level = os.environ.get("MAXINV_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=_sys.stderr)


def _dump(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_json(path, what):
    if not os.path.isfile(path):
        raise MissingArtifact(f"{what} not found: {path}")
    with open(path) as fh:
        return json.load(fh)


def _problem(args):
    if not os.path.isfile(args.problem):
        raise MissingArtifact(f"problem file not found: {args.problem}")
    prob = load_problem(args.problem)
    if getattr(args, "lam", None) is not None:
        if not 0 < args.lam <= 1:
            raise errors.ProblemFileError(f"--lambda must lie in (0, 1], got {args.lam}")
        prob.pipeline.lam = args.lam
    if getattr(args, "objective", None) is not None:
        prob.pipeline.sdp_objective = args.objective
    if getattr(args, "lp_objective", None) is not None:
        prob.pipeline.lp_objective = args.lp_objective
    if getattr(args, "seed", None) is not None:
        prob.pipeline.seed = args.seed
    return prob


def cmd_pipeline(args):
    prob = _problem(args)
    res = run_pipeline(prob.system, prob.pipeline)
    paths = write_artifacts(res, args.out)
    with open(paths["report"]) as fh:
        print(fh.read(), end="")
    if not res.terminal_cost.certification.passed:
        print("certification FAILED", file=_sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def _pipeline_terminal(artifacts):
    tc = _load_json(os.path.join(artifacts, "terminal_cost.json"), "terminal cost")
    st = _load_json(os.path.join(artifacts, "set.json"), "terminal set")
    return HPolytope.from_dict(st), np.asarray(tc["P"], dtype=float)


def _lqr_terminal(system):
    ric = solve_dare(system.A, system.B, system.Q, system.R)
    return lqr_invariant_set(system, ric.L_inf), ric.P_inf


def _terminal(args, system):
    if args.terminal == "lqr":
        return _lqr_terminal(system)
    return _pipeline_terminal(args.artifacts or args.out)


def _horizons(values):
    for T in values:
        if not 1 <= T <= MAX_HORIZON:
            raise errors.ProblemFileError(f"--horizon must lie in [1, {MAX_HORIZON}], got {T}")
    return values


def cmd_simulate(args):
    prob = _problem(args)
    X_T, Q_T = _terminal(args, prob.system)
    T = _horizons([args.horizon if args.horizon is not None else prob.mpc.T])[0]
    steps = args.steps if args.steps is not None else prob.mpc.steps
    x0s = [args.x0] if args.x0 else prob.mpc.x0
    if not x0s:
        raise errors.ProblemFileError("no initial state: give --x0 or mpc.x0 in the problem file")
    ctrl = build_controller(prob.system, T, X_T, Q_T)
    os.makedirs(args.out, exist_ok=True)
    summary = []
    for i, x0 in enumerate(x0s):
        if len(x0) != prob.system.n:
            raise errors.ProblemFileError(f"initial state needs {prob.system.n} components")
        traj = simulate(ctrl, x0, steps)
        path = os.path.join(args.out, f"trajectory_{i}.csv")
        traj.write_csv(path, prob.system.n, prob.system.m)
        rest = traj.steps_to_rest()
        summary.append({"x0": list(map(float, x0)), "file": os.path.basename(path),
                        "feasible_throughout": traj.feasible_throughout,
                        "steps_to_rest": rest})
        print(f"x0={list(map(float, x0))}: feasible={traj.feasible_throughout} "
              f"steps_to_rest={rest} -> {path}")
    _dump({"horizon": T, "terminal": args.terminal, "steps": steps, "runs": summary},
          os.path.join(args.out, "simulation.json"))
    return EXIT_OK


def cmd_region(args):
    prob = _problem(args)
    X_T, Q_T = _terminal(args, prob.system)
    os.makedirs(args.out, exist_ok=True)
    out = []
    for T in _horizons(args.horizon or [prob.mpc.T]):
        grid = feasible_region_grid(build_controller(prob.system, T, X_T, Q_T), args.grid)
        path = os.path.join(args.out, f"region_T{T}.csv")
        grid.write_csv(path)
        frac = float(grid.feasible.mean())
        out.append({"horizon": T, "file": os.path.basename(path), "feasible_fraction": frac})
        print(f"T={T}: feasible fraction {frac:.4f} -> {path}")
    _dump({"terminal": args.terminal, "grid": args.grid, "regions": out},
          os.path.join(args.out, "regions.json"))
    return EXIT_OK


def cmd_dare(args):
    prob = _problem(args)
    s = prob.system
    ric = solve_dare(s.A, s.B, s.Q, s.R)
    with np.printoptions(precision=2, suppress=True, floatmode="fixed"):
        print("P_inf =")
        print(ric.P_inf)
        print("L_inf =")
        print(ric.L_inf)
    print(f"iterations {ric.iterations}, residual {ric.residual:.2e}")
    if args.horizon is not None:
        L = finite_horizon_gain(s.A, s.B, s.Q, s.R, ric.P_inf, args.horizon)
        print(f"finite-horizon gain (T={args.horizon}, terminal P_inf): {L.tolist()}")
    return EXIT_OK


def cmd_lqr_set(args):
    prob = _problem(args)
    X_T, P = _lqr_terminal(prob.system)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "lqr_set.json")
    _dump({**X_T.to_dict(), "P_inf": P.tolist()}, path)
    print(f"LQR invariant set: {X_T.n_rows} facets -> {path}")
    return EXIT_OK


def cmd_certify(args):
    bundle = _load_json(args.bundle, "certificate bundle")
    stored, report = recertify_bundle(bundle)
    fields = ("max_lmi_eigenvalue", "max_decrease_violation", "min_P_eigenvalue",
              "min_invariance_margin")
    worst = 0.0
    for f in fields:
        a, b = getattr(stored, f), getattr(report, f)
        worst = max(worst, abs(a - b))
        print(f"{f:24s} stored {a: .6e}  recomputed {b: .6e}")
    print(f"terminal set invariant   {report.terminal_set_invariance_ok}")
    reproduced = worst <= REPLAY_TOL and stored.n_samples == report.n_samples
    print(f"replay {'matches' if reproduced else 'DIFFERS'} (max difference {worst:.1e}); "
          f"certificate {'PASSED' if report.passed else 'FAILED'}")
    return EXIT_OK if reproduced and report.passed else EXIT_SOLVER


def build_parser():
    p = argparse.ArgumentParser(prog="maxinv", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def problem_cmd(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("problem", help="problem file (JSON)")
        sp.set_defaults(func=func)
        return sp

    sp = problem_cmd("pipeline", cmd_pipeline, "build and certify the terminal set and cost")
    sp.add_argument("--out", required=True, help="artifact directory")
    sp.add_argument("--lambda", dest="lam", type=float)
    sp.add_argument("--objective", choices=sorted(OBJECTIVE_ALIASES))
    sp.add_argument("--lp-objective", choices=LP_OBJECTIVES)
    sp.add_argument("--seed", type=int)

    for name, func, help_ in [("simulate", cmd_simulate, "closed-loop receding-horizon rollout"),
                              ("region", cmd_region, "feasible-region grids over horizons")]:
        sp = problem_cmd(name, func, help_)
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--artifacts", help="pipeline artifact directory (default: --out)")
        sp.add_argument("--terminal", choices=("pipeline", "lqr"), default="pipeline")
        if name == "simulate":
            sp.add_argument("--horizon", type=int)
            sp.add_argument("--steps", type=int)
            sp.add_argument("--x0", type=float, nargs="+")
        else:
            sp.add_argument("--horizon", type=int, nargs="+")
            sp.add_argument("--grid", type=int, default=101)

    sp = problem_cmd("dare", cmd_dare, "print the infinite-horizon Riccati solution")
    sp.add_argument("--horizon", type=int, help="also print the finite-horizon gain")
    sp = problem_cmd("lqr-set", cmd_lqr_set, "maximal admissible set under the LQR gain")
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("certify", help="re-run certification on a stored bundle")
    sp.add_argument("bundle")
    sp.set_defaults(func=cmd_certify)
    return p


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except MissingArtifact as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_NO_INPUT
    except errors.ProblemFileError as exc:
        print(f"error: invalid problem: {exc}", file=_sys.stderr)
        return EXIT_USAGE
    except errors.InfeasibleTerminalCost as exc:
        print(f"error: {exc}\nadvice: rerun with --lambda below 1 (e.g. 0.99); a strictly "
              "contractive set guarantees a certifiable terminal cost", file=_sys.stderr)
        return EXIT_INFEASIBLE_COST
    except errors.NotConverged as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_NOT_CONVERGED
    except (errors.NotContractive, errors.EmptyResult) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_NOT_CONTRACTIVE
    except (errors.MaxinvError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=_sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    raise SystemExit(main())
