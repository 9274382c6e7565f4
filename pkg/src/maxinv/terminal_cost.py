"""Quadratic terminal cost certified on a whole control-invariant polytope.

For each simplex k of the boundary fan the decrease condition
``x'(A_k'PA_k - P + Q_k)x <= 0`` on the simplex is imposed through an
S-procedure multiplier ``W_k >= 0`` (elementwise). The blocks are written
after congruence with V_k, so neither V_k^{-1} nor the gains L_k appear:

    (A V_k + B U_k)' P (A V_k + B U_k) - V_k' P V_k + V_k' Q V_k + U_k' R U_k + W_k <= 0
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DimensionMismatch, InfeasibleTerminalCost
from .lqr import LinearSystem, solve_dare
from .polytope import HPolytope, hrep_from_vertices
from .solvers import LmiBlock, SdpProblem, solve_sdp
from .vertex_controls import PwlFeedback, eval_pwl_feedback

logger = logging.getLogger(__name__)

OBJECTIVE_ALIASES = {"trace": "trace", "frob": "frobenius", "frobenius": "frobenius",
                     "vertex": "vertex"}
LMI_TOL = 1e-7
DECREASE_TOL = 1e-6
INVARIANCE_TOL = 1e-7


@dataclass
class CertReport:
    max_lmi_eigenvalue: float
    n_samples: int
    max_decrease_violation: float
    terminal_set_invariance_ok: bool
    min_P_eigenvalue: float = float("nan")
    min_invariance_margin: float = float("nan")

    @property
    def passed(self):
        return (self.max_lmi_eigenvalue <= LMI_TOL and self.max_decrease_violation <= DECREASE_TOL
                and self.terminal_set_invariance_ok and self.min_P_eigenvalue > 0)


@dataclass
class TerminalCost:
    P: np.ndarray
    objective_used: str
    W: list = field(default_factory=list)
    certification: CertReport = None
    sdp_objective: float = float("nan")
    dual_bound: float = None

    def to_dict(self):
        return {"P": self.P.tolist(), "objective": self.objective_used,
                "W": [w.tolist() for w in self.W],
                "sdp_objective": self.sdp_objective, "dual_bound": self.dual_bound,
                "cert_report": asdict(self.certification) if self.certification else None}

    @classmethod
    def from_dict(cls, d):
        cert = CertReport(**d["cert_report"]) if d.get("cert_report") else None
        return cls(np.asarray(d["P"], dtype=float), d["objective"],
                   [np.asarray(w, dtype=float) for w in d.get("W", [])], cert,
                   d.get("sdp_objective", float("nan")), d.get("dual_bound"))

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def assemble_lmi(fb: PwlFeedback, sys: LinearSystem, objective: str = "trace",
                 reference=None) -> SdpProblem:
    blocks = []
    for s, Uk in zip(fb.fan.simplices, fb.U):
        Vk = s.V
        if Vk.shape != (sys.n, sys.n) or Uk.shape != (sys.m, sys.n):
            raise DimensionMismatch(f"simplex {s.index_set}: V is {Vk.shape}, U is {Uk.shape}")
        Gk = sys.A @ Vk + sys.B @ Uk
        const = Vk.T @ sys.Q @ Vk + Uk.T @ sys.R @ Uk
        blocks.append(LmiBlock([(1.0, Gk), (-1.0, Vk)], 0.5 * (const + const.T)))
    objective = OBJECTIVE_ALIASES[objective]
    kwargs = {}
    if objective == "frobenius":
        kwargs["reference"] = reference if reference is not None else solve_dare(
            sys.A, sys.B, sys.Q, sys.R).P_inf
    elif objective == "vertex":
        kwargs["vertex_weights"] = fb.fan.parent.vertices
    return SdpProblem(sys.n, blocks, objective, **kwargs)


def optimal_multipliers(problem: SdpProblem, P):
    """For fixed P, the multiplier per block minimising the block's largest eigenvalue.

    Returns ``(W, eigs)``. Used to re-certify a P obtained elsewhere.
    """
    import cvxpy as cp

    Ws, eigs = [], []
    for blk in problem.blocks:
        M = blk.evaluate(P)
        q = blk.size
        if not blk.multiplier:
            Ws.append(None)
            eigs.append(float(np.linalg.eigvalsh(M).max()))
            continue
        W = cp.Variable((q, q), symmetric=True)
        t = cp.Variable()
        prob = cp.Problem(cp.Minimize(t), [W >= 0, M + W << t * np.eye(q)])
        prob.solve(solver="CLARABEL")
        Wv = np.maximum(0.5 * (W.value + W.value.T), 0.0)
        Ws.append(Wv)
        eigs.append(float(np.linalg.eigvalsh(blk.evaluate(P, Wv)).max()))
    return Ws, eigs


def sample_fan(fb: PwlFeedback, n_per_simplex: int, seed: int = 0):
    """Barycentric-uniform points in every simplex, stacked simplex by simplex."""
    rng = np.random.default_rng(seed)
    n = fb.fan.parent.dim
    pts = []
    for s in fb.fan.simplices:
        w = rng.dirichlet(np.ones(n + 1), size=n_per_simplex)[:, 1:]
        pts.append(w @ s.V.T)
    return np.vstack(pts) if pts else np.zeros((0, n))


def certify(P, fb: PwlFeedback, sys: LinearSystem, n_samples: int = 200, seed: int = 0,
            W=None, terminal_set: HPolytope = None) -> CertReport:
    """Re-check the terminal-cost conditions from scratch.

    LMI eigenvalues are recomputed from P (and W, or the best W per block
    when none is given). The decrease inequality and terminal-set
    invariance are checked pointwise on ``n_samples`` points per simplex
    with ``u = u(x)`` from the piecewise-linear feedback.
    """
    P = 0.5 * (np.asarray(P, dtype=float) + np.asarray(P, dtype=float).T)
    problem = assemble_lmi(fb, sys)
    if W is None:
        _, eigs = optimal_multipliers(problem, P)
    else:
        eigs = [float(np.linalg.eigvalsh(b.evaluate(P, w)).max()) for b, w in zip(problem.blocks, W)]
    if terminal_set is None:
        terminal_set = hrep_from_vertices(fb.fan.parent)

    X = sample_fan(fb, n_samples, seed)
    U = eval_pwl_feedback(fb, X)
    Xn = X @ sys.A.T + U @ sys.B.T
    quad = lambda Z, M: np.einsum("si,ij,sj->s", Z, M, Z)  # noqa: E731
    dec = quad(Xn, P) - quad(X, P) + quad(X, sys.Q) + quad(U, sys.R)
    margin = terminal_set.margin(Xn)
    return CertReport(
        max_lmi_eigenvalue=float(max(eigs)) if eigs else float("-inf"),
        n_samples=int(X.shape[0]),
        max_decrease_violation=float(dec.max()) if dec.size else float("-inf"),
        terminal_set_invariance_ok=bool(margin.min() >= -INVARIANCE_TOL) if margin.size else True,
        min_P_eigenvalue=float(np.linalg.eigvalsh(P).min()),
        min_invariance_margin=float(margin.min()) if margin.size else float("inf"),
    )


def compute_terminal_cost(fb: PwlFeedback, sys: LinearSystem, objective: str = "trace",
                          reference=None, n_samples: int = 200, seed: int = 0) -> TerminalCost:
    """Solve the multiplier SDP for P and certify the result."""
    if objective not in OBJECTIVE_ALIASES:
        raise ValueError(f"unknown objective {objective!r}")
    problem = assemble_lmi(fb, sys, objective, reference)
    res = solve_sdp(problem)
    if not res.optimal:
        raise InfeasibleTerminalCost(
            "no quadratic terminal cost is certifiable for this feedback; retry with lambda < 1")
    report = certify(res.P, fb, sys, n_samples, seed, W=res.W)
    if not report.passed:
        logger.warning("terminal cost certification failed: %s", report)
    return TerminalCost(res.P, problem.objective, res.W, report, res.obj, res.dual_bound)
