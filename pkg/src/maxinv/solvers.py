"""Small dense LP, QP and SDP kernels with independently computed residuals.

LPs are delegated to HiGHS through :func:`scipy.optimize.linprog`. The QP
solver is a primal active-set method started from an LP phase-1 point, which
gives exact equality-constrained solutions on the final working set. The SDP
solver handles the specific class of programs needed for terminal costs:
one symmetric matrix variable ``P`` and one elementwise nonnegative symmetric
multiplier ``W_k`` per LMI block.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .errors import DimensionMismatch, MaxIterations, NumericalFailure

logger = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

PSD_MARGIN = 1e-6


def _as_2d(M, ncols):
    if M is None:
        return np.zeros((0, ncols))
    if sp.issparse(M):
        return M
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M.reshape(1, -1)
    return M


def _as_1d(v):
    if v is None:
        return np.zeros(0)
    return np.asarray(v, dtype=float).reshape(-1)


# --------------------------------------------------------------------------
# Linear programming
# --------------------------------------------------------------------------

@dataclass
class LpProblem:
    """minimize c'x subject to A_ineq x <= b_ineq, A_eq x = b_eq, bounds."""

    c: np.ndarray
    A_ineq: Optional[np.ndarray] = None
    b_ineq: Optional[np.ndarray] = None
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    bounds: object = (None, None)

    def __post_init__(self):
        self.c = _as_1d(self.c)
        n = self.c.size
        self.A_ineq = _as_2d(self.A_ineq, n)
        self.b_ineq = _as_1d(self.b_ineq)
        self.A_eq = _as_2d(self.A_eq, n)
        self.b_eq = _as_1d(self.b_eq)
        for A, b, name in ((self.A_ineq, self.b_ineq, "ineq"), (self.A_eq, self.b_eq, "eq")):
            if A.shape[0] != b.size or (A.shape[0] and A.shape[1] != n):
                raise DimensionMismatch(f"LP {name} block has shape {A.shape}, rhs {b.size}, n={n}")
            if not np.all(np.isfinite(b)):
                raise ValueError(f"LP {name} right-hand side must be finite")

    def to_dict(self):
        dense = lambda M: M.toarray() if sp.issparse(M) else M  # noqa: E731
        return {
            "c": self.c.tolist(),
            "A_ineq": dense(self.A_ineq).tolist(),
            "b_ineq": self.b_ineq.tolist(),
            "A_eq": dense(self.A_eq).tolist(),
            "b_eq": self.b_eq.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        n = len(d["c"])
        return cls(
            c=d["c"],
            A_ineq=np.asarray(d.get("A_ineq") or np.zeros((0, n))),
            b_ineq=d.get("b_ineq"),
            A_eq=np.asarray(d.get("A_eq") or np.zeros((0, n))),
            b_eq=d.get("b_eq"),
        )


@dataclass
class LpResult:
    status: str
    x: Optional[np.ndarray] = None
    obj: Optional[float] = None
    y_ineq: Optional[np.ndarray] = None
    y_eq: Optional[np.ndarray] = None
    primal_residual: float = np.nan
    dual_residual: float = np.nan
    complementarity: float = np.nan

    @property
    def optimal(self):
        return self.status == OPTIMAL


def solve_lp(p: LpProblem) -> LpResult:
    """Solve an LP with HiGHS and recompute its KKT residuals."""
    kwargs = {}
    if p.A_ineq.shape[0]:
        kwargs.update(A_ub=p.A_ineq, b_ub=p.b_ineq)
    if p.A_eq.shape[0]:
        kwargs.update(A_eq=p.A_eq, b_eq=p.b_eq)
    opts = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}
    res = linprog(p.c, bounds=p.bounds, method="highs", options=opts, **kwargs)
    if res.status in (2, 3):
        # HiGHS presolve misreports thin but feasible polytopes; confirm without it
        res = linprog(p.c, bounds=p.bounds, method="highs", options={**opts, "presolve": False},
                      **kwargs)
    if res.status == 2:
        return LpResult(INFEASIBLE)
    if res.status == 3:
        return LpResult(UNBOUNDED)
    if res.status != 0:
        raise NumericalFailure(f"LP solver failed: {res.message}", best=res.x)

    x = res.x
    # Lagrange multipliers with c + A_ineq'y + A_eq'z + (bound terms) = 0, y >= 0
    y_ub = -res.ineqlin.marginals if p.A_ineq.shape[0] else np.zeros(0)
    y_eq = -res.eqlin.marginals if p.A_eq.shape[0] else np.zeros(0)
    s_ub = p.A_ineq @ x - p.b_ineq if p.A_ineq.shape[0] else np.zeros(0)
    r_eq = p.A_eq @ x - p.b_eq if p.A_eq.shape[0] else np.zeros(0)
    primal = max(np.max(s_ub, initial=0.0), np.max(np.abs(r_eq), initial=0.0))
    grad = p.c.copy()
    if p.A_ineq.shape[0]:
        grad += p.A_ineq.T @ y_ub
    if p.A_eq.shape[0]:
        grad += p.A_eq.T @ y_eq
    grad -= res.lower.marginals + res.upper.marginals
    dual = max(np.max(np.abs(grad), initial=0.0), np.max(-y_ub, initial=0.0))
    comp = np.max(np.abs(y_ub * s_ub), initial=0.0)
    return LpResult(OPTIMAL, x=x, obj=float(res.fun), y_ineq=y_ub, y_eq=y_eq,
                    primal_residual=float(primal), dual_residual=float(dual),
                    complementarity=float(comp))


def lp_feasible_point(A, b, A_eq=None, b_eq=None):
    """Return a point satisfying the linear system, or None if infeasible."""
    A = _as_2d(A, np.shape(A)[1] if np.ndim(A) == 2 else len(A))
    res = solve_lp(LpProblem(np.zeros(A.shape[1]), A, b, A_eq, b_eq))
    return res.x if res.optimal else None


# --------------------------------------------------------------------------
# Quadratic programming
# --------------------------------------------------------------------------

@dataclass
class QpProblem:
    """minimize 1/2 x'Hx + f'x subject to A_ineq x <= b_ineq, A_eq x = b_eq."""

    H: np.ndarray
    f: np.ndarray
    A_ineq: Optional[np.ndarray] = None
    b_ineq: Optional[np.ndarray] = None
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        self.f = _as_1d(self.f)
        n = self.f.size
        if self.H.shape != (n, n):
            raise DimensionMismatch(f"H has shape {self.H.shape}, expected {(n, n)}")
        if not np.allclose(self.H, self.H.T, atol=1e-9 * max(1.0, np.abs(self.H).max())):
            raise ValueError("H must be symmetric")
        self.H = 0.5 * (self.H + self.H.T)
        self.A_ineq = _as_2d(self.A_ineq, n)
        self.b_ineq = _as_1d(self.b_ineq)
        self.A_eq = _as_2d(self.A_eq, n)
        self.b_eq = _as_1d(self.b_eq)
        if self.A_ineq.shape[0] != self.b_ineq.size or self.A_eq.shape[0] != self.b_eq.size:
            raise DimensionMismatch("QP constraint rows and right-hand sides differ in length")

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in ("H", "f", "A_ineq", "b_ineq", "A_eq", "b_eq")}

    @classmethod
    def from_dict(cls, d):
        n = len(d["f"])
        return cls(d["H"], d["f"],
                   np.asarray(d.get("A_ineq") or np.zeros((0, n))), d.get("b_ineq"),
                   np.asarray(d.get("A_eq") or np.zeros((0, n))), d.get("b_eq"))


@dataclass
class QpResult:
    status: str
    x: Optional[np.ndarray] = None
    obj: Optional[float] = None
    active: tuple = ()
    y_ineq: Optional[np.ndarray] = None
    y_eq: Optional[np.ndarray] = None
    iterations: int = 0
    kkt_residual: float = np.nan

    @property
    def optimal(self):
        return self.status == OPTIMAL


def qp_kkt_residual(p: QpProblem, x, y_ineq, y_eq):
    """Scaled max of stationarity, primal, dual and complementarity residuals."""
    grad = p.H @ x + p.f + p.A_ineq.T @ y_ineq + p.A_eq.T @ y_eq
    scale = 1.0 + np.abs(p.H @ x).max(initial=0.0) + np.abs(p.f).max(initial=0.0)
    slack = p.A_ineq @ x - p.b_ineq
    bscale = 1.0 + np.abs(p.b_ineq).max(initial=0.0) + np.abs(p.b_eq).max(initial=0.0)
    return max(
        np.abs(grad).max(initial=0.0) / scale,
        np.max(slack, initial=0.0) / bscale,
        np.abs(p.A_eq @ x - p.b_eq).max(initial=0.0) / bscale,
        np.max(-y_ineq, initial=0.0) / scale,
        np.abs(y_ineq * slack).max(initial=0.0) / (scale * bscale),
    )


def solve_qp(p: QpProblem, x0=None, max_iter=500, tol=1e-10) -> QpResult:
    """Primal active-set method.

    A feasible start is taken from ``x0`` when it is feasible, otherwise from
    an LP phase 1. Working-set constraints stay linearly independent because a
    constraint only enters when the current step moves against it.
    """
    n = p.f.size
    A, b = p.A_ineq, p.b_ineq
    Ae, be = p.A_eq, p.b_eq
    nrm = np.linalg.norm(A, axis=1) if A.shape[0] else np.zeros(0)
    row_tol = tol * (1.0 + np.abs(b)) * np.maximum(nrm, 1.0)

    x = None
    if x0 is not None:
        x0 = np.asarray(x0, dtype=float)
        if np.all(A @ x0 - b <= row_tol) and np.allclose(Ae @ x0, be, atol=1e-9):
            x = x0.copy()
    if x is None:
        x = lp_feasible_point(A, b, Ae, be) if (A.shape[0] or Ae.shape[0]) else np.zeros(n)
        if x is None:
            return QpResult(INFEASIBLE)

    work: list[int] = []
    neq = Ae.shape[0]
    y = np.zeros(A.shape[0])
    ye = np.zeros(neq)
    for it in range(1, max_iter + 1):
        Aw = np.vstack([Ae, A[work]]) if work else Ae
        k = Aw.shape[0]
        g = p.H @ x + p.f
        K = np.zeros((n + k, n + k))
        K[:n, :n] = p.H
        K[:n, n:] = Aw.T
        K[n:, :n] = Aw
        rhs = np.concatenate([-g, np.zeros(k)])
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        step = sol[:n]
        mult = sol[n:]
        if np.linalg.norm(step) <= 1e-12 * (1.0 + np.linalg.norm(x)):
            mw = mult[neq:]
            if not work or mw.min() >= -1e-12 * (1.0 + np.abs(g).max()):
                y = np.zeros(A.shape[0])
                y[work] = np.maximum(mw, 0.0)
                ye = mult[:neq]
                break
            work.pop(int(np.argmin(mw)))
            continue
        # ratio test over constraints outside the working set
        alpha, block = 1.0, None
        if A.shape[0]:
            Ap = A @ step
            slack = b - A @ x
            cand = [i for i in np.flatnonzero(Ap > 1e-14 * max(1.0, np.abs(step).max())) if i not in work]
            for i in cand:
                a = max(slack[i], 0.0) / Ap[i]
                if a < alpha - 1e-15 or (block is not None and a <= alpha + 1e-15 and i < block):
                    alpha, block = a, i
        x = x + alpha * step
        if block is not None:
            work.append(int(block))
    else:
        raise MaxIterations(f"active-set QP did not converge in {max_iter} iterations", best=x)

    obj = float(0.5 * x @ p.H @ x + p.f @ x)
    res = qp_kkt_residual(p, x, y, ye)
    if res > 1e-7:
        raise NumericalFailure(f"QP KKT residual {res:.2e} exceeds 1e-7", best=x)
    return QpResult(OPTIMAL, x=x, obj=obj, active=tuple(sorted(work)), y_ineq=y, y_eq=ye,
                    iterations=it, kkt_residual=float(res))


# --------------------------------------------------------------------------
# Semidefinite programming
# --------------------------------------------------------------------------

@dataclass
class LmiBlock:
    """Affine matrix expression ``sum_j c_j G_j' P G_j + constant + W``.

    ``P`` is the common n x n symmetric variable, each ``G_j`` is n x q, the
    constant is q x q and ``W`` is the block's own elementwise nonnegative
    symmetric multiplier (omitted when ``multiplier`` is False). The block is
    required to be negative semidefinite.
    """

    terms: list
    constant: np.ndarray
    multiplier: bool = True

    def __post_init__(self):
        self.constant = np.atleast_2d(np.asarray(self.constant, dtype=float))
        self.terms = [(float(c), np.atleast_2d(np.asarray(G, dtype=float))) for c, G in self.terms]
        q = self.constant.shape[0]
        for _, G in self.terms:
            if G.shape[1] != q:
                raise DimensionMismatch(f"term has {G.shape[1]} columns, block size is {q}")
        if not np.allclose(self.constant, self.constant.T):
            raise ValueError("LMI constant term must be symmetric")

    @property
    def size(self):
        return self.constant.shape[0]

    def evaluate(self, P, W=None):
        M = self.constant.copy()
        for c, G in self.terms:
            M = M + c * (G.T @ P @ G)
        if W is not None and self.multiplier:
            M = M + W
        return 0.5 * (M + M.T)

    def to_dict(self):
        return {"terms": [[c, G.tolist()] for c, G in self.terms],
                "constant": self.constant.tolist(), "multiplier": self.multiplier}

    @classmethod
    def from_dict(cls, d):
        return cls([(c, np.asarray(G)) for c, G in d["terms"]], np.asarray(d["constant"]),
                   d.get("multiplier", True))


SDP_OBJECTIVES = ("trace", "frobenius", "vertex")


@dataclass
class SdpProblem:
    psd_var_dim: int
    blocks: list
    objective: str = "trace"
    reference: Optional[np.ndarray] = None
    vertex_weights: Optional[np.ndarray] = None
    psd_margin: float = PSD_MARGIN

    def __post_init__(self):
        if self.objective not in SDP_OBJECTIVES:
            raise ValueError(f"unknown SDP objective {self.objective!r}")
        n = self.psd_var_dim
        for blk in self.blocks:
            for _, G in blk.terms:
                if G.shape[0] != n:
                    raise DimensionMismatch(f"term has {G.shape[0]} rows, P is {n}x{n}")
        if self.objective == "frobenius":
            if self.reference is None:
                raise ValueError("frobenius objective needs a reference matrix")
            self.reference = np.asarray(self.reference, dtype=float)
        if self.objective == "vertex":
            if self.vertex_weights is None:
                raise ValueError("vertex objective needs vertex_weights")
            self.vertex_weights = np.atleast_2d(np.asarray(self.vertex_weights, dtype=float))

    def objective_matrix(self):
        """Matrix C with linear objective tr(C P), or None for frobenius."""
        if self.objective == "trace":
            return np.eye(self.psd_var_dim)
        if self.objective == "vertex":
            V = self.vertex_weights
            return V.T @ V
        return None

    def objective_value(self, P):
        C = self.objective_matrix()
        if C is None:
            return float(np.sum((P - self.reference) ** 2))
        return float(np.trace(C @ P))

    def to_dict(self):
        return {
            "psd_var_dim": self.psd_var_dim,
            "objective": self.objective,
            "lmi_blocks": [b.to_dict() for b in self.blocks],
            "reference": None if self.reference is None else self.reference.tolist(),
            "vertex_weights": None if self.vertex_weights is None else self.vertex_weights.tolist(),
            "psd_margin": self.psd_margin,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["psd_var_dim"], [LmiBlock.from_dict(b) for b in d["lmi_blocks"]],
                   d.get("objective", "trace"),
                   None if d.get("reference") is None else np.asarray(d["reference"]),
                   None if d.get("vertex_weights") is None else np.asarray(d["vertex_weights"]),
                   d.get("psd_margin", PSD_MARGIN))


@dataclass
class SdpResult:
    status: str
    P: Optional[np.ndarray] = None
    W: list = field(default_factory=list)
    obj: Optional[float] = None
    dual_bound: Optional[float] = None
    max_lmi_eigenvalue: float = np.nan
    min_P_eigenvalue: float = np.nan
    min_W_entry: float = np.nan
    solver: str = ""

    @property
    def optimal(self):
        return self.status == OPTIMAL

    @property
    def relative_gap(self):
        if self.obj is None or self.dual_bound is None:
            return None
        return abs(self.obj - self.dual_bound) / max(1.0, abs(self.obj))


def lmi_residuals(problem: SdpProblem, P, W):
    """Max block eigenvalue, min eigenvalue of P, min multiplier entry."""
    lam = -np.inf
    wmin = np.inf
    for blk, Wk in zip(problem.blocks, W):
        lam = max(lam, np.linalg.eigvalsh(blk.evaluate(P, Wk)).max())
        if blk.multiplier and Wk is not None:
            wmin = min(wmin, Wk.min())
    return float(lam), float(np.linalg.eigvalsh(P).min()), float(wmin)


def _block_scale(blk):
    s = np.abs(blk.constant).max(initial=0.0)
    for c, G in blk.terms:
        s += abs(c) * np.linalg.norm(G, 2) ** 2
    return 1.0 / max(s, 1e-12)


MARGIN_LADDER = (1e-9, 1e-8, 1e-7, 1e-6)


def solve_sdp(p: SdpProblem, margins=MARGIN_LADDER, solvers=("CLARABEL", "CVXOPT", "SCS"),
              lmi_tol=0.0) -> SdpResult:
    """Solve the multiplier SDP through cvxpy.

    Each block is normalised by its coefficient scale and required to be at
    most ``-margin`` in that normalised scale. Margins are tried from the
    smallest up; the first solution whose recomputed (unscaled, clipped
    multiplier) block eigenvalues are all ``<= lmi_tol`` is returned. The
    margin thus absorbs the solver's own residuals while costing as little
    objective as possible.
    """
    import cvxpy as cp

    n = p.psd_var_dim
    P = cp.Variable((n, n), symmetric=True)
    margin = cp.Parameter(nonneg=True)
    Ws, cons, scales, lmis = [], [], [], []
    for blk in p.blocks:
        s = _block_scale(blk)
        scales.append(s)
        q = blk.size
        expr = s * blk.constant
        for c, G in blk.terms:
            expr = expr + (s * c) * (G.T @ P @ G)
        if blk.multiplier:
            Wk = cp.Variable((q, q), symmetric=True)
            cons.append(Wk >= 0)
            expr = expr + Wk
            Ws.append(Wk)
        else:
            Ws.append(None)
        expr = 0.5 * (expr + expr.T)
        lmi = expr << -margin * np.eye(q)
        lmis.append(lmi)
        cons.append(lmi)
    pcon = P >> p.psd_margin * np.eye(n)
    cons.append(pcon)

    C = p.objective_matrix()
    if C is None:
        obj = cp.Minimize(cp.norm(P - p.reference, "fro"))
    else:
        obj = cp.Minimize(cp.trace(C @ P))
    prob = cp.Problem(obj, cons)

    result = None
    for mval in margins:
        margin.value = mval
        result = _solve_once(cp, prob, p, P, Ws, scales, lmis, pcon, C, mval, solvers)
        if not result.optimal:
            return result
        if result.max_lmi_eigenvalue <= lmi_tol and result.min_P_eigenvalue > 0:
            return result
        logger.debug("SDP margin %.0e leaves max block eigenvalue %.3e; tightening",
                     mval, result.max_lmi_eigenvalue)
    logger.warning("SDP point violates LMI tolerance: max eig %.3e, min eig(P) %.3e",
                   result.max_lmi_eigenvalue, result.min_P_eigenvalue)
    return result


def _solve_once(cp, prob, p, P, Ws, scales, lmis, pcon, C, rel_margin, solvers):
    status = None
    used = ""
    for name in solvers:
        if name not in cp.installed_solvers():
            continue
        try:
            opts = {}
            if name == "CLARABEL":
                opts = dict(tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10, max_iter=500)
            prob.solve(solver=name, **opts)
        except cp.error.SolverError as exc:
            logger.debug("SDP solver %s failed: %s", name, exc)
            continue
        status = prob.status
        used = name
        if status in (cp.OPTIMAL, cp.INFEASIBLE):
            break
    if status is None:
        raise NumericalFailure("no SDP solver succeeded")
    if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        return SdpResult(INFEASIBLE, solver=used)
    if status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        raise NumericalFailure(f"SDP solver returned status {status}")

    Pv = 0.5 * (P.value + P.value.T)
    W = []
    for Wk, s in zip(Ws, scales):
        if Wk is None:
            W.append(None)
        else:
            Wv = np.maximum(0.5 * (Wk.value + Wk.value.T), 0.0) / s
            W.append(Wv)
    lam, pmin, wmin = lmi_residuals(p, Pv, W)

    bound = None
    if C is not None:
        # Lagrange dual bound: sum_k tr(Z_k (C_k + margin)) + margin_P tr(Y)
        try:
            bound = float(p.psd_margin * np.trace(pcon.dual_value))
            for blk, lmi, s in zip(p.blocks, lmis, scales):
                Z = lmi.dual_value
                bound += float(np.trace(Z @ (s * blk.constant + rel_margin * np.eye(blk.size))))
        except (TypeError, ValueError):
            bound = None

    return SdpResult(OPTIMAL, P=Pv, W=W, obj=p.objective_value(Pv), dual_bound=bound,
                     max_lmi_eigenvalue=lam, min_P_eigenvalue=pmin, min_W_entry=wmin, solver=used)
