"""Vertex controls for a lambda-contractive polytope and their piecewise-linear interpolation."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, NotContractive, OutsideFan, SingularVertexMatrix
from .lqr import LinearSystem
from .polytope import SimplicialFan, VPolytope
from .solvers import LpProblem, solve_lp

logger = logging.getLogger(__name__)

OBJECTIVES = ("min-sum-lambda", "min-deviation-from-linear", "feasibility")
TIE_BREAK = 1e-6
# the set iteration stops within EPS_SET, so a vertex may overshoot its image by that much;
# the retry absorbs it inside the 1e-7 equality tolerance of a solution
EQ_SLACK = 9e-8
LOCATE_TOL = 1e-9


@dataclass
class VertexControlSolution:
    controls: np.ndarray        # s x m, row i is u_i
    lambdas: np.ndarray         # s
    interpolation: np.ndarray   # s x s, p_ij
    objective_used: str
    lam: float = 1.0

    def to_dict(self):
        return {"controls": self.controls.tolist(), "lambdas": self.lambdas.tolist(),
                "interpolation": self.interpolation.tolist(),
                "objective_used": self.objective_used, "lambda": self.lam}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["controls"], dtype=float), np.asarray(d["lambdas"], dtype=float),
                   np.asarray(d["interpolation"], dtype=float), d["objective_used"],
                   d.get("lambda", 1.0))


def recover_vertex_controls(C: VPolytope, sys: LinearSystem, lam: float = 1.0,
                            objective: str = "min-sum-lambda", L_ref=None) -> VertexControlSolution:
    """Solve one joint LP for vertex controls u_i, contraction factors and weights p_ij.

    Constraints per vertex: ``A v_i + B u_i = sum_j p_ij v_j``,
    ``sum_j p_ij <= lambda_i <= lam``, ``p_ij >= 0`` and ``u_i in U``.
    Infeasibility means C is not lam-contractive.

    ``min-sum-lambda`` breaks ties with ``1e-6 * sum_i |u_i + L_ref v_i|_1``
    (``L_ref = 0`` when not given). When every lambda_i is pinned at 1 the
    tie-break alone picks the controls, and steering toward a stabilising
    linear law matters there.
    """
    if objective not in OBJECTIVES:
        raise ValueError(f"unknown objective {objective!r}; choose from {OBJECTIVES}")
    if objective == "min-deviation-from-linear" and L_ref is None:
        raise ValueError("min-deviation-from-linear needs L_ref")
    Vt = C.vertices
    s, n = Vt.shape
    m = sys.m
    if n != sys.n:
        raise DimensionMismatch(f"vertices are {n}-dimensional, system has n={sys.n}")

    # variable layout: u (s*m) | lambda (s) | p (s*s) | t (s*m) | e (s*n)
    nu, nl, npp, ne = s * m, s, s * s, s * n
    iu, il, ip, it = 0, nu, nu + nl, nu + nl + npp
    nvar = it + nu + ne
    I_s = sp.identity(s, format="csr")

    # equalities: B u_i - sum_j p_ij v_j - e_i = -A v_i, with e pinned to zero or to +-EQ_SLACK
    Aeq = sp.hstack([sp.kron(I_s, sys.B), sp.csr_matrix((s * n, nl)),
                     -sp.kron(I_s, sp.csr_matrix(Vt.T)), sp.csr_matrix((s * n, nu)),
                     -sp.identity(ne, format="csr")], format="csr")
    beq = -(Vt @ sys.A.T).reshape(-1)

    rows = [
        # sum_j p_ij - lambda_i <= 0
        sp.hstack([sp.csr_matrix((s, nu)), -I_s, sp.kron(I_s, np.ones((1, s))),
                   sp.csr_matrix((s, nu + ne))]),
        # F_U u_i <= g_U
        sp.hstack([sp.kron(I_s, sys.U.F), sp.csr_matrix((s * sys.U.n_rows, nl + npp + nu + ne))]),
    ]
    rhs = [np.zeros(s), np.tile(sys.U.g, s)]

    c = np.zeros(nvar)
    if objective != "feasibility":
        if objective == "min-sum-lambda":
            c[il:ip] = 1.0
            c[it:it + nu] = TIE_BREAK
        else:
            c[it:it + nu] = 1.0
        # L_ref v_i, so t_i bounds |u_i - (-L_ref v_i)|
        offset = np.zeros(nu) if L_ref is None else (Vt @ np.atleast_2d(L_ref).T).reshape(-1)
        # t >= +-(u + offset)
        Im = sp.identity(nu, format="csr")
        rows.append(sp.hstack([Im, sp.csr_matrix((nu, nl + npp)), -Im, sp.csr_matrix((nu, ne))]))
        rhs.append(-offset)
        rows.append(sp.hstack([-Im, sp.csr_matrix((nu, nl + npp)), -Im, sp.csr_matrix((nu, ne))]))
        rhs.append(offset)
    Aub = sp.vstack(rows, format="csr")
    bub = np.concatenate(rhs)

    base = [(None, None)] * nu + [(0.0, lam)] * nl + [(0.0, None)] * npp + [(0.0, None)] * nu
    for slack in (0.0, EQ_SLACK):
        bounds = base + [(-slack, slack)] * ne
        res = solve_lp(LpProblem(c, Aub, bub, Aeq, beq, bounds=bounds))
        if res.optimal:
            if slack:
                logger.info("vertex-control LP needed equality slack up to %.1e", slack)
            break
    else:
        raise NotContractive(f"vertex-control LP is {res.status}: the set is not {lam}-contractive")
    x = res.x
    u = x[iu:il].reshape(s, m)
    lams = np.clip(x[il:ip], 0.0, lam)
    p = np.maximum(x[ip:it].reshape(s, s), 0.0)
    return VertexControlSolution(u, lams, p, objective, lam)


def check_vertex_solution(C: VPolytope, sys: LinearSystem, sol: VertexControlSolution):
    """Residuals of the three defining conditions (max over vertices)."""
    V = C.vertices
    eq = np.abs(V @ sys.A.T + sol.controls @ sys.B.T - sol.interpolation @ V).max()
    sums = sol.interpolation.sum(axis=1)
    lam_gap = max(np.max(sums - sol.lambdas), np.max(sol.lambdas - sol.lam))
    u_margin = min(np.min(sys.U.g - sys.U.F @ u) for u in sol.controls)
    return {"equality": float(eq), "lambda_excess": float(lam_gap), "u_margin": float(u_margin)}


@dataclass
class PwlFeedback:
    """``u(x) = -L_k x = U_k V_k^{-1} x`` on simplex k of the fan."""

    fan: SimplicialFan
    U: list
    L: list

    def __post_init__(self):
        self._V = np.stack([s.V for s in self.fan.simplices])

    def to_dict(self):
        return {"dim": self.fan.parent.dim,
                "vertices": self.fan.parent.vertices.tolist(),
                "simplices": [{"vertex_indices": list(s.index_set), "V": s.V.tolist(),
                               "U": Uk.tolist(), "L": Lk.tolist()}
                              for s, Uk, Lk in zip(self.fan.simplices, self.U, self.L)]}

    @classmethod
    def from_dict(cls, d):
        from .polytope import Simplex
        parent = VPolytope(np.asarray(d["vertices"], dtype=float))
        simplices, U, L = [], [], []
        for e in d["simplices"]:
            simplices.append(Simplex(tuple(e["vertex_indices"]), np.asarray(e["V"], dtype=float)))
            U.append(np.atleast_2d(np.asarray(e["U"], dtype=float)))
            L.append(np.atleast_2d(np.asarray(e["L"], dtype=float)))
        return cls(SimplicialFan(parent, simplices), U, L)

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def write_vertex_csv(self, path, controls):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            n = self.fan.parent.dim
            m = np.atleast_2d(controls).shape[1]
            w.writerow([f"x{i + 1}" for i in range(n)] + [f"u{j + 1}" for j in range(m)])
            for v, u in zip(self.fan.parent.vertices, controls):
                w.writerow([repr(float(c)) for c in np.concatenate([v, u])])


def build_pwl_feedback(fan: SimplicialFan, sol: VertexControlSolution) -> PwlFeedback:
    controls = np.atleast_2d(sol.controls)
    if controls.shape[0] != fan.parent.count:
        raise DimensionMismatch(
            f"{controls.shape[0]} vertex controls for {fan.parent.count} vertices")
    Us, Ls = [], []
    for s in fan.simplices:
        sv = np.linalg.svd(s.V, compute_uv=False)
        if sv[-1] <= 1e-10 * sv[0]:
            raise SingularVertexMatrix(f"vertex matrix of simplex {s.index_set} is singular")
        Uk = controls[list(s.index_set)].T
        # L_k = -U_k V_k^{-1}  <=>  V_k' L_k' = -U_k'
        Lk = -np.linalg.solve(s.V.T, Uk.T).T
        Us.append(Uk)
        Ls.append(Lk)
    return PwlFeedback(fan, Us, Ls)


def _barycentric(V, X):
    """Coordinates p = V_k^{-1} x for every simplex and every point: shape (N, S, n)."""
    N, n, _ = V.shape
    S = X.shape[0]
    rhs = np.broadcast_to(X.T[None, :, :], (N, n, S))
    return np.transpose(np.linalg.solve(V, rhs), (0, 2, 1))


def locate_many(fb_or_fan, X, tol=LOCATE_TOL):
    """Smallest simplex index containing each row of X; -1 where none does."""
    V = fb_or_fan._V if isinstance(fb_or_fan, PwlFeedback) else np.stack(
        [s.V for s in fb_or_fan.simplices])
    X = np.atleast_2d(np.asarray(X, dtype=float))
    p = _barycentric(V, X)
    inside = np.all(p >= -tol, axis=2) & (p.sum(axis=2) <= 1 + tol)
    idx = np.where(inside.any(axis=0), inside.argmax(axis=0), -1)
    return idx


def locate_simplex(fb_or_fan, x, tol=LOCATE_TOL) -> int:
    k = int(locate_many(fb_or_fan, np.asarray(x, dtype=float)[None, :], tol)[0])
    if k < 0:
        raise OutsideFan(f"point {np.asarray(x).tolist()} lies in no simplex of the fan")
    return k


def eval_pwl_feedback(fb: PwlFeedback, x):
    """``u(x)``; also accepts a batch (rows of x) and then returns one row per point."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        k = locate_simplex(fb, x)
        return -fb.L[k] @ x
    ks = locate_many(fb, x)
    if np.any(ks < 0):
        raise OutsideFan(f"{int(np.sum(ks < 0))} points lie outside the fan")
    L = np.stack(fb.L)[ks]
    return -np.einsum("sij,sj->si", L, x)
