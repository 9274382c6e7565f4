"""Riccati and Lyapunov machinery for the unconstrained linear-quadratic problem."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (DimensionMismatch, IndefiniteIterate, NotConverged, UnstableMatrix)
from .polytope import HPolytope, normalize_hrep

logger = logging.getLogger(__name__)


def spectral_radius(M):
    return float(np.max(np.abs(np.linalg.eigvals(M)))) if np.size(M) else 0.0


@dataclass
class LinearSystem:
    """``x+ = A x + B u`` with stage cost ``x'Qx + u'Ru`` and C-set constraints X, U."""

    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    X: HPolytope
    U: HPolytope

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = self.A.shape[0]
        B = np.asarray(self.B, dtype=float)
        if B.shape[0] != n or B.size == 0:
            raise DimensionMismatch(f"B must have {n} rows, got shape {B.shape}")
        self.B = B.reshape(n, -1)
        m = self.B.shape[1]
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        self.R = np.atleast_2d(np.asarray(self.R, dtype=float))
        if self.A.shape != (n, n) or self.Q.shape != (n, n) or self.R.shape != (m, m):
            raise DimensionMismatch("A, Q must be n x n and R m x m")
        if self.X.dim != n or self.U.dim != m:
            raise DimensionMismatch("constraint set dimensions do not match (A, B)")
        if not np.allclose(self.Q, self.Q.T) or np.linalg.eigvalsh(self.Q).min() < -1e-10:
            raise ValueError("Q must be symmetric positive semidefinite")
        if not np.allclose(self.R, self.R.T) or np.linalg.eigvalsh(self.R).min() <= 0:
            raise ValueError("R must be symmetric positive definite")
        self.X = normalize_hrep(self.X)
        self.U = normalize_hrep(self.U)
        if not (self.X.is_cset_offsets() and self.U.is_cset_offsets()):
            raise ValueError("X and U must be C-sets (origin strictly inside)")
        if not is_reachable(self.A, self.B):
            raise ValueError("(A, B) is not reachable")

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]


def is_reachable(A, B, tol=1e-8):
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    C = np.hstack(blocks)
    s = np.linalg.svd(C, compute_uv=False)
    return bool(s.size >= n and s[n - 1] > tol * max(1.0, s[0]))


def is_detectable(A, Q, tol=1e-9):
    """Hautus test on the eigenvalues of A outside the open unit disc."""
    w, v = np.linalg.eigh(0.5 * (Q + Q.T))
    Ch = (v * np.sqrt(np.clip(w, 0, None))) @ v.T
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if abs(lam) >= 1 - tol:
            M = np.vstack([A - lam * np.eye(n), Ch])
            if np.linalg.matrix_rank(M, tol=1e-8) < n:
                return False
    return True


@dataclass
class RiccatiSolution:
    P_inf: np.ndarray
    L_inf: np.ndarray
    residual: float
    iterations: int = 0


def riccati_gain(A, B, R, P):
    """``(B'PB + R)^{-1} B'PA``."""
    return np.linalg.solve(B.T @ P @ B + R, B.T @ P @ A)


def riccati_step(A, B, Q, R, P):
    L = riccati_gain(A, B, R, P)
    Pn = Q + A.T @ P @ A - L.T @ (B.T @ P @ B + R) @ L
    return 0.5 * (Pn + Pn.T), L


def dare_residual(A, B, Q, R, P):
    Pn, _ = riccati_step(A, B, Q, R, P)
    return float(np.linalg.norm(P - Pn, "fro"))


def solve_dare(A, B, Q, R, tol=1e-12, max_iter=100_000) -> RiccatiSolution:
    """Iterate the Riccati recursion from ``P = Q`` to its fixed point."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if not is_detectable(A, Q):
        warnings.warn("(Q^1/2, A) is not detectable; the Riccati fixed point may not stabilise",
                      RuntimeWarning, stacklevel=2)
    P = Q.copy()
    for k in range(1, max_iter + 1):
        Pn, _ = riccati_step(A, B, Q, R, P)
        if np.linalg.eigvalsh(Pn).min() < -1e-10 * max(1.0, np.abs(Pn).max()):
            raise IndefiniteIterate(f"Riccati iterate {k} is indefinite")
        diff = np.linalg.norm(Pn - P, "fro")
        P = Pn
        if diff < tol:
            break
    else:
        raise NotConverged(f"Riccati recursion did not converge in {max_iter} iterations", last=P)
    L = riccati_gain(A, B, R, P)
    rho = spectral_radius(A - B @ L)
    if rho >= 1:
        warnings.warn(f"A - B L_inf has spectral radius {rho:.4f}", RuntimeWarning, stacklevel=2)
    return RiccatiSolution(P, L, dare_residual(A, B, Q, R, P), k)


def solve_lyapunov(A_cl, Qbar):
    """Solve ``P = Qbar + A_cl' P A_cl`` on the space of symmetric matrices.

    The unknowns are the n(n+1)/2 upper-triangular entries of P; the linear
    map is assembled column by column from the symmetric basis matrices.
    """
    A_cl = np.atleast_2d(np.asarray(A_cl, dtype=float))
    Qbar = np.atleast_2d(np.asarray(Qbar, dtype=float))
    n = A_cl.shape[0]
    if spectral_radius(A_cl) >= 1:
        raise UnstableMatrix(f"spectral radius {spectral_radius(A_cl):.4f} >= 1")
    iu = np.triu_indices(n)
    k = iu[0].size
    M = np.empty((k, k))
    for col, (i, j) in enumerate(zip(*iu)):
        E = np.zeros((n, n))
        E[i, j] = E[j, i] = 1.0
        M[:, col] = (E - A_cl.T @ E @ A_cl)[iu]
    Qs = 0.5 * (Qbar + Qbar.T)
    p = np.linalg.solve(M, Qs[iu])
    P = np.zeros((n, n))
    P[iu] = p
    return P + np.triu(P, 1).T


def finite_horizon_gain(A, B, Q, R, P_T, T: int):
    """First-step gain of the T-step LQ problem with terminal weight ``P_T``."""
    if T < 1:
        raise ValueError("horizon must be at least 1")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    P = np.asarray(P_T, dtype=float)
    for _ in range(T - 1):
        P, _ = riccati_step(A, B, Q, R, P)
    return riccati_gain(A, B, np.atleast_2d(R), P)
