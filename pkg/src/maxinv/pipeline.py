"""The four-step terminal-cost construction, plus artifact writing."""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass

import numpy as np

from .invariance import SetIterationLog, max_contractive_set
from .lqr import LinearSystem, RiccatiSolution, solve_dare
from .polytope import HPolytope, SimplicialFan, VPolytope, boundary_triangulation, vertices
from .problem import PipelineOptions, system_from_dict, system_to_dict
from .terminal_cost import TerminalCost, certify, compute_terminal_cost
from .vertex_controls import (PwlFeedback, VertexControlSolution, build_pwl_feedback,
                              recover_vertex_controls)

logger = logging.getLogger(__name__)


@dataclass
class PipelineResult:
    system: LinearSystem
    options: PipelineOptions
    riccati: RiccatiSolution
    terminal_set: HPolytope
    log: SetIterationLog
    vertices: VPolytope
    fan: SimplicialFan
    controls: VertexControlSolution
    feedback: PwlFeedback
    terminal_cost: TerminalCost


def run_pipeline(sys: LinearSystem, options: PipelineOptions = None) -> PipelineResult:
    """Set iteration, boundary triangulation, vertex-control LP, terminal-cost SDP.

    The vertex-control LP is steered toward ``options.reference_gain``, or the
    infinite-horizon LQR gain when none is given (its deviation objective, or
    the tie-break of ``min-sum-lambda``).
    """
    opts = options or PipelineOptions()
    ric = solve_dare(sys.A, sys.B, sys.Q, sys.R)
    C, log = max_contractive_set(sys, opts.lam, opts.max_iter)
    logger.info("terminal set: %d facets after %d iterations", C.n_rows, log.iterations)
    V = vertices(C)
    fan = boundary_triangulation(V)
    logger.info("%d vertices, %d simplices", V.count, fan.N)
    L_ref = ric.L_inf if opts.reference_gain is None else opts.reference_gain
    sol = recover_vertex_controls(V, sys, opts.lam, opts.lp_objective, L_ref)
    fb = build_pwl_feedback(fan, sol)
    tc = compute_terminal_cost(fb, sys, opts.sdp_objective, reference=ric.P_inf,
                               n_samples=opts.cert_samples, seed=opts.seed)
    return PipelineResult(sys, opts, ric, C, log, V, fan, sol, fb, tc)


def _dump(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_artifacts(res: PipelineResult, out_dir) -> dict:
    """Write every pipeline artifact into ``out_dir``; returns name -> path."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {k: os.path.join(out_dir, f) for k, f in [
        ("set", "set.json"), ("iterations", "iterations.json"), ("fan", "fan.json"),
        ("controls", "controls.json"), ("terminal_cost", "terminal_cost.json"),
        ("bundle", "bundle.json"), ("vertices_csv", "vertices.csv"),
        ("controls_csv", "controls.csv"), ("report", "report.txt")]}
    _dump({**res.terminal_set.to_dict(), "vertices": res.vertices.vertices.tolist(),
           "lambda": res.options.lam}, paths["set"])
    _dump(res.log.to_dict(), paths["iterations"])
    _dump(res.feedback.to_dict(), paths["fan"])
    _dump(res.controls.to_dict(), paths["controls"])
    _dump(res.terminal_cost.to_dict(), paths["terminal_cost"])
    _dump(make_bundle(res), paths["bundle"])
    res.vertices.write_csv(paths["vertices_csv"])
    res.feedback.write_vertex_csv(paths["controls_csv"], res.controls.controls)
    with open(paths["report"], "w") as fh:
        fh.write(format_report(res))
    return paths


def make_bundle(res: PipelineResult) -> dict:
    return {"system": system_to_dict(res.system), "lambda": res.options.lam,
            "feedback": res.feedback.to_dict(), "controls": res.controls.to_dict(),
            "terminal_cost": res.terminal_cost.to_dict(),
            "certification": {"n_samples": res.options.cert_samples, "seed": res.options.seed}}


def recertify_bundle(bundle: dict):
    """Re-run certification from a stored bundle; returns ``(stored, recomputed)`` reports."""
    sys = system_from_dict(bundle["system"])
    fb = PwlFeedback.from_dict(bundle["feedback"])
    tc = TerminalCost.from_dict(bundle["terminal_cost"])
    c = bundle["certification"]
    report = certify(tc.P, fb, sys, c["n_samples"], c["seed"], W=tc.W or None)
    return tc.certification, report


def format_report(res: PipelineResult) -> str:
    tc = res.terminal_cost
    cert = tc.certification
    fmt = lambda M: np.array2string(np.asarray(M), precision=4, suppress_small=True)  # noqa: E731
    lines = [
        f"lambda                 : {res.options.lam}",
        f"set iterations         : {res.log.iterations} (converged: {res.log.converged})",
        f"facets                 : {res.terminal_set.n_rows}",
        f"vertices               : {res.vertices.count}",
        f"simplices              : {res.fan.N}",
        f"vertex-control LP      : {res.controls.objective_used}",
        f"terminal-cost objective: {tc.objective_used}",
        "P_inf (Riccati):", fmt(res.riccati.P_inf),
        "Q_T (terminal weight):", fmt(tc.P),
        "certification:",
        f"  max LMI eigenvalue      : {cert.max_lmi_eigenvalue:.3e}",
        f"  sampled points          : {cert.n_samples}",
        f"  max decrease violation  : {cert.max_decrease_violation:.3e}",
        f"  terminal set invariant  : {cert.terminal_set_invariance_ok}",
        f"  min eigenvalue of Q_T   : {cert.min_P_eigenvalue:.4e}",
        f"  result                  : {'PASSED' if cert.passed else 'FAILED'}",
    ]
    return "\n".join(lines) + "\n"
