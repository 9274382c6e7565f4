"""Problem files: JSON description of a constrained LQ regulation problem."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ProblemFileError
from .lqr import LinearSystem
from .polytope import HPolytope
from .terminal_cost import OBJECTIVE_ALIASES
from .vertex_controls import OBJECTIVES as LP_OBJECTIVES


@dataclass
class PipelineOptions:
    lam: float = 1.0
    max_iter: int = 100
    lp_objective: str = "min-sum-lambda"
    sdp_objective: str = "trace"
    seed: int = 0
    cert_samples: int = 200
    reference_gain: np.ndarray = None   # m x n; None means the LQR gain


@dataclass
class MpcOptions:
    T: int = 1
    x0: list = field(default_factory=list)
    steps: int = 200


@dataclass
class Problem:
    name: str
    system: LinearSystem
    pipeline: PipelineOptions
    mpc: MpcOptions


def _matrix(value, what, shape=None):
    try:
        M = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ProblemFileError(f"{what} is not a rectangular numeric matrix") from exc
    if M.ndim == 0:
        M = M.reshape(1, 1)
    elif M.ndim == 1:
        M = M.reshape(1, -1) if shape is None or shape[0] == 1 else M.reshape(-1, 1)
    if M.ndim != 2 or not np.all(np.isfinite(M)):
        raise ProblemFileError(f"{what} must be a finite 2-D matrix")
    if shape is not None and M.shape != shape:
        raise ProblemFileError(f"{what} has shape {M.shape}, expected {shape}")
    return M


def _set(desc, dim, what):
    if not isinstance(desc, dict):
        raise ProblemFileError(f"{what} must be an object with 'box' or 'F'/'g'")
    if "box" in desc:
        h = np.atleast_1d(np.asarray(desc["box"], dtype=float))
        if h.size == 1:
            h = np.full(dim, float(h[0]))
        if h.size != dim or np.any(h <= 0):
            raise ProblemFileError(f"{what}.box needs {dim} positive half-widths")
        return HPolytope.box(h)
    if "F" in desc and "g" in desc:
        F = _matrix(desc["F"], f"{what}.F")
        g = np.asarray(desc["g"], dtype=float).reshape(-1)
        if F.shape != (g.size, dim):
            raise ProblemFileError(f"{what}: F must be {g.size}x{dim}")
        if np.any(g <= 0):
            raise ProblemFileError(f"{what} must contain the origin in its interior (g > 0)")
        return HPolytope(F, g, dim)
    raise ProblemFileError(f"{what} must give either 'box' or both 'F' and 'g'")


def parse_problem(d: dict, name: str = "problem") -> Problem:
    if not isinstance(d, dict):
        raise ProblemFileError("problem file must contain a JSON object")
    for key in ("system", "cost", "constraints"):
        if key not in d:
            raise ProblemFileError(f"missing top-level key {key!r}")
    A = _matrix(d["system"].get("A"), "system.A")
    n = A.shape[0]
    if A.shape != (n, n):
        raise ProblemFileError("system.A must be square")
    B = np.array(d["system"].get("B"), dtype=float)
    B = B.reshape(n, -1) if B.size % n == 0 and B.size else None
    if B is None:
        raise ProblemFileError(f"system.B must have {n} rows")
    m = B.shape[1]
    Q = _matrix(d["cost"].get("Q"), "cost.Q", (n, n))
    R = _matrix(d["cost"].get("R"), "cost.R", (m, m))
    X = _set(d["constraints"].get("X"), n, "constraints.X")
    U = _set(d["constraints"].get("U"), m, "constraints.U")

    p = d.get("pipeline", {})
    opts = PipelineOptions(
        lam=float(p.get("lambda", 1.0)), max_iter=int(p.get("max_iter", 100)),
        lp_objective=p.get("lp_objective", "min-sum-lambda"),
        sdp_objective=p.get("sdp_objective", "trace"), seed=int(p.get("seed", 0)),
        cert_samples=int(p.get("cert_samples", 200)))
    if p.get("reference_gain") is not None:
        opts.reference_gain = _matrix(p["reference_gain"], "pipeline.reference_gain", (m, n))
    if not 0 < opts.lam <= 1:
        raise ProblemFileError(f"pipeline.lambda must lie in (0, 1], got {opts.lam}")
    if opts.max_iter < 1:
        raise ProblemFileError("pipeline.max_iter must be positive")
    if opts.lp_objective not in LP_OBJECTIVES:
        raise ProblemFileError(f"pipeline.lp_objective must be one of {LP_OBJECTIVES}")
    if opts.sdp_objective not in OBJECTIVE_ALIASES:
        raise ProblemFileError(f"pipeline.sdp_objective must be one of {sorted(OBJECTIVE_ALIASES)}")

    mp = d.get("mpc", {})
    x0 = [list(map(float, x)) for x in mp.get("x0", [])]
    if any(len(x) != n for x in x0):
        raise ProblemFileError(f"every mpc.x0 entry needs {n} components")
    mopts = MpcOptions(T=int(mp.get("T", 1)), x0=x0, steps=int(mp.get("steps", 200)))
    if mopts.T < 1 or mopts.steps < 0:
        raise ProblemFileError("mpc.T must be >= 1 and mpc.steps >= 0")

    try:
        system = LinearSystem(A, B, Q, R, X, U)
    except ValueError as exc:
        raise ProblemFileError(str(exc)) from exc
    return Problem(d.get("name", name), system, opts, mopts)


def load_problem(path) -> Problem:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"{path}: invalid JSON ({exc})") from exc
    return parse_problem(d, name=str(path))


def system_to_dict(sys: LinearSystem):
    return {"A": sys.A.tolist(), "B": sys.B.tolist(), "Q": sys.Q.tolist(), "R": sys.R.tolist(),
            "X": sys.X.to_dict(), "U": sys.U.to_dict()}


def system_from_dict(d) -> LinearSystem:
    return LinearSystem(np.asarray(d["A"]), np.asarray(d["B"]), np.asarray(d["Q"]),
                        np.asarray(d["R"]), HPolytope.from_dict(d["X"]), HPolytope.from_dict(d["U"]))
