"""Receding-horizon controller on a condensed planning QP, with closed-loop tools."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConstraintsActive, DimensionMismatch, InfeasibleState
from .lqr import LinearSystem
from .polytope import HPolytope, bounding_box, is_subset
from .solvers import LpProblem, QpProblem, solve_lp, solve_qp

logger = logging.getLogger(__name__)

MAX_HORIZON = 30
REST_TOL = 1e-3
COND_LIMIT = 1e10


@dataclass
class MpcController:
    """Condensed planning problem ``min 1/2 u'Hu + (F x0)'u + x0'Y x0`` s.t. ``G u <= w + E x0``.

    The decision vector stacks the planned inputs u_0 .. u_{T-1}. Objective
    values reported by :func:`rhc_step` include the constant term, so they
    equal the planning cost itself.
    """

    sys: LinearSystem
    T: int
    X_T: HPolytope
    Q_T: np.ndarray
    H: np.ndarray = None
    F: np.ndarray = None
    Y: np.ndarray = None
    G: np.ndarray = None
    w: np.ndarray = None
    E: np.ndarray = None
    col_scale: np.ndarray = None

    def qp(self, x0) -> QpProblem:
        """The planning QP instantiated at ``x0`` (variables are the scaled inputs)."""
        x0 = np.asarray(x0, dtype=float)
        return QpProblem(self.H, self.F @ x0, self.G, self.w + self.E @ x0)

    def cost_constant(self, x0):
        x0 = np.asarray(x0, dtype=float)
        return float(x0 @ self.Y @ x0)


def build_controller(sys: LinearSystem, T: int, X_T: HPolytope, Q_T) -> MpcController:
    if not 1 <= T <= MAX_HORIZON:
        raise ValueError(f"horizon must be in [1, {MAX_HORIZON}], got {T}")
    Q_T = np.atleast_2d(np.asarray(Q_T, dtype=float))
    n, m = sys.n, sys.m
    if Q_T.shape != (n, n) or X_T.dim != n:
        raise DimensionMismatch("terminal weight / terminal set dimension mismatch")
    if not np.allclose(Q_T, Q_T.T, atol=1e-9 * max(1.0, np.abs(Q_T).max())):
        raise ValueError("terminal weight must be symmetric")
    if np.linalg.eigvalsh(Q_T).min() <= 0:
        raise ValueError("terminal weight must be positive definite")
    if not is_subset(X_T, sys.X):
        raise ValueError("terminal set must lie inside the state constraint set")

    A, B = sys.A, sys.B
    Phi = [np.linalg.matrix_power(A, k) for k in range(T + 1)]
    Gam = []
    for k in range(T + 1):
        M = np.zeros((n, m * T))
        for j in range(k):
            M[:, j * m:(j + 1) * m] = Phi[k - 1 - j] @ B
        Gam.append(M)

    H = 2 * np.kron(np.eye(T), sys.R)
    F = np.zeros((m * T, n))
    Y = sys.Q.copy()
    for k in range(1, T + 1):
        W = sys.Q if k < T else Q_T
        H += 2 * Gam[k].T @ W @ Gam[k]
        F += 2 * Gam[k].T @ W @ Phi[k]
        Y += Phi[k].T @ W @ Phi[k]

    rows, rhs_w, rhs_E = [], [], []
    for k in range(1, T):
        rows.append(sys.X.F @ Gam[k])
        rhs_w.append(sys.X.g)
        rhs_E.append(-sys.X.F @ Phi[k])
    for k in range(T):
        M = np.zeros((sys.U.n_rows, m * T))
        M[:, k * m:(k + 1) * m] = sys.U.F
        rows.append(M)
        rhs_w.append(sys.U.g)
        rhs_E.append(np.zeros((sys.U.n_rows, n)))
    rows.append(X_T.F @ Gam[T])
    rhs_w.append(X_T.g)
    rhs_E.append(-X_T.F @ Phi[T])
    G = np.vstack(rows)
    w = np.concatenate(rhs_w)
    E = np.vstack(rhs_E)

    d = np.ones(m * T)
    if np.linalg.cond(H) > COND_LIMIT:
        d = 1.0 / np.sqrt(np.diag(H))
        logger.info("planning QP ill-conditioned; scaling decision columns")
    D = np.diag(d)
    H = D @ H @ D
    return MpcController(sys, T, X_T, 0.5 * (Q_T + Q_T.T), 0.5 * (H + H.T), D @ F, Y,
                         G @ D, w, E, d)


def _x0_admissible(ctrl, x0, tol=1e-9):
    return bool(np.all(ctrl.sys.X.F @ x0 <= ctrl.sys.X.g + tol))


def rhc_step(ctrl: MpcController, x):
    """Solve the planning QP at ``x``; returns ``(u0, diagnostics)``."""
    x = np.asarray(x, dtype=float)
    if not _x0_admissible(ctrl, x):
        raise InfeasibleState(f"state {x.tolist()} violates the state constraints")
    qp = ctrl.qp(x)
    res = solve_qp(qp)
    if not res.optimal:
        raise InfeasibleState(f"planning problem infeasible at {x.tolist()}")
    z = ctrl.col_scale * res.x
    m = ctrl.sys.m
    slack = qp.b_ineq - qp.A_ineq @ res.x
    diag = {
        "objective": res.obj + ctrl.cost_constant(x),
        "plan": z.reshape(ctrl.T, m),
        "active": res.active,
        "min_slack": float(slack.min()) if slack.size else np.inf,
        "iterations": res.iterations,
        "kkt_residual": res.kkt_residual,
    }
    return z[:m], diag


def is_feasible(ctrl: MpcController, x) -> bool:
    """Phase-1 LP for the planning problem at ``x``."""
    x = np.asarray(x, dtype=float)
    if not _x0_admissible(ctrl, x):
        return False
    res = solve_lp(LpProblem(np.zeros(ctrl.H.shape[0]), ctrl.G, ctrl.w + ctrl.E @ x))
    return res.optimal


@dataclass
class Trajectory:
    states: list = field(default_factory=list)
    inputs: list = field(default_factory=list)
    status: list = field(default_factory=list)
    objectives: list = field(default_factory=list)
    feasible_throughout: bool = True

    def converged(self, tol=REST_TOL):
        return bool(self.states) and float(np.abs(self.states[-1]).max()) < tol

    def steps_to_rest(self, tol=REST_TOL):
        for t, x in enumerate(self.states):
            if np.abs(x).max() < tol:
                return t
        return None

    def rows(self):
        """One row per time step: t, x..., u..., cost, feasible. Empty if no step was taken."""
        out = []
        if not self.status:
            return out
        m = len(self.inputs[0]) if self.inputs else 0
        for t, x in enumerate(self.states):
            if t < len(self.inputs):
                u = list(self.inputs[t])
                cost = self.objectives[t]
                ok = self.status[t] == "optimal"
            else:
                u = [float("nan")] * m
                cost = float("nan")
                ok = t < len(self.status) and self.status[t] == "optimal"
            out.append([t, *map(float, x), *map(float, u), float(cost), int(ok)])
        return out

    def write_csv(self, path, n=None, m=None):
        n = n if n is not None else (len(self.states[0]) if self.states else 0)
        m = m if m is not None else (len(self.inputs[0]) if self.inputs else 0)
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", *[f"x{i + 1}" for i in range(n)], *[f"u{j + 1}" for j in range(m)],
                         "cost", "feasible"])
            for row in self.rows():
                wr.writerow(row)

    def to_dict(self):
        return {"states": [list(map(float, x)) for x in self.states],
                "inputs": [list(map(float, u)) for u in self.inputs],
                "status": list(self.status), "objectives": list(map(float, self.objectives)),
                "feasible_throughout": self.feasible_throughout}


def simulate(ctrl: MpcController, x0, steps: int) -> Trajectory:
    """Closed-loop rollout of the receding-horizon law; stops at the first infeasible step."""
    x = np.asarray(x0, dtype=float)
    traj = Trajectory(states=[x.copy()])
    for _ in range(steps):
        try:
            u, diag = rhc_step(ctrl, x)
        except InfeasibleState:
            traj.status.append("infeasible")
            traj.feasible_throughout = False
            break
        traj.inputs.append(u)
        traj.objectives.append(diag["objective"])
        traj.status.append("optimal")
        x = ctrl.sys.A @ x + ctrl.sys.B @ u
        traj.states.append(x)
    return traj


@dataclass
class RegionGrid:
    axes: list
    feasible: np.ndarray    # boolean, shape (N1, N2, ...)

    def points(self):
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=1)

    def write_csv(self, path):
        pts = self.points()
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow([f"x{i + 1}" for i in range(pts.shape[1])] + ["feasible"])
            for p, f in zip(pts, self.feasible.ravel()):
                wr.writerow([*map(float, p), int(f)])

    def to_dict(self):
        return {"axes": [a.tolist() for a in self.axes], "feasible": self.feasible.astype(int).tolist()}


def feasible_region_grid(ctrl: MpcController, n_points=101, bounds=None) -> RegionGrid:
    """Feasibility of the planning problem on a regular grid over X's bounding box."""
    lo, hi = bounds if bounds is not None else bounding_box(ctrl.sys.X)
    counts = np.broadcast_to(np.asarray(n_points), lo.shape)
    axes = [np.linspace(a, b, int(k)) for a, b, k in zip(lo, hi, counts)]
    grid = RegionGrid(axes, np.zeros(tuple(int(k) for k in counts), dtype=bool))
    flat = grid.feasible.reshape(-1)
    for i, p in enumerate(grid.points()):
        flat[i] = is_feasible(ctrl, p)
    return grid


def local_gain(ctrl: MpcController, probe_radius: float = 1e-3, fit_tol: float = 1e-8):
    """Least-squares fit of ``u = -L x`` from n + 1 probe states near the origin."""
    n = ctrl.sys.n
    probes = np.vstack([np.eye(n), np.ones((1, n)) / np.sqrt(n)]) * probe_radius
    inputs = []
    for x in probes:
        u, diag = rhc_step(ctrl, x)
        if diag["active"] or diag["min_slack"] <= 1e-9:
            raise ConstraintsActive(f"constraints active at probe {x.tolist()}; shrink probe_radius")
        inputs.append(u)
    U = np.array(inputs)
    Lt, *_ = np.linalg.lstsq(probes, -U, rcond=None)
    resid = np.abs(probes @ Lt + U).max()
    if resid >= fit_tol:
        raise ConstraintsActive(f"probe responses are not linear (fit residual {resid:.2e})")
    return Lt.T
