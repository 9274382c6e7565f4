"""Maximal lambda-contractive sets and invariant sets of linear feedback laws."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyPolytope, EmptyResult, NotConverged, UnstableClosedLoop
from .lqr import LinearSystem, spectral_radius
from .polytope import (EPS_SET, HPolytope, intersect, normalize_hrep, predecessor, scale,
                       set_equal, vertices)
from .solvers import LpProblem, solve_lp

logger = logging.getLogger(__name__)


@dataclass
class SetIterationLog:
    lam: float
    iterates: list = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self):
        return max(len(self.iterates) - 1, 0)

    def to_dict(self):
        return {"lambda": self.lam, "converged": self.converged, "iterations": self.iterations,
                "iterates": [P.to_dict() for P in self.iterates]}

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def max_contractive_set(sys: LinearSystem, lam: float = 1.0, max_iter: int = 100,
                        tol: float = EPS_SET):
    """Iterate ``Omega_k = Pre(lam * Omega_{k-1}) & X`` from ``Omega_0 = X`` to a fixed point.

    Returns ``(set, log)``. The fixed-point test is mutual containment at
    ``tol``. Raises :class:`NotConverged` (carrying the last iterate and log)
    when ``max_iter`` is reached.
    """
    if not 0 < lam <= 1:
        raise ValueError(f"lambda must lie in (0, 1], got {lam}")
    X = normalize_hrep(sys.X, tol)
    log = SetIterationLog(lam, [X])
    omega = X
    for k in range(1, max_iter + 1):
        try:
            nxt = intersect(predecessor(scale(omega, lam), sys.A, sys.B, sys.U, tol), X, tol)
        except EmptyPolytope as exc:
            raise EmptyResult(f"set iteration became empty at step {k}") from exc
        log.iterates.append(nxt)
        logger.debug("set iteration %d: %d rows", k, nxt.n_rows)
        if set_equal(nxt, omega, tol):
            log.converged = True
            return nxt, log
        omega = nxt
    raise NotConverged(f"set iteration did not converge in {max_iter} steps", last=omega, log=log)


def contractive_at_vertices(C: HPolytope, sys: LinearSystem, lam: float = 1.0,
                            tol: float = EPS_SET):
    """For every vertex v, is there u in U with A v + B u in lam * C? Returns a bool per vertex.

    The default tolerance matches the set-equality test that stops the
    iteration: the final iterate is only known to map into lam times the
    previous one, which can exceed it by ``EPS_SET`` in any direction.
    """
    target = scale(C, lam)
    ok = []
    m = sys.m
    for v in vertices(C).vertices:
        A_ub = np.vstack([target.F @ sys.B, sys.U.F])
        b_ub = np.concatenate([target.g - target.F @ sys.A @ v + tol, sys.U.g + tol])
        ok.append(solve_lp(LpProblem(np.zeros(m), A_ub, b_ub)).optimal)
    return np.array(ok)


def lqr_invariant_set(sys: LinearSystem, L, max_iter: int = 500, tol: float = EPS_SET) -> HPolytope:
    """Largest invariant set of ``x+ = (A - B L) x`` inside ``{x in X : -L x in U}``."""
    L = np.atleast_2d(np.asarray(L, dtype=float))
    Acl = sys.A - sys.B @ L
    rho = spectral_radius(Acl)
    if rho >= 1:
        raise UnstableClosedLoop(f"A - B L has spectral radius {rho:.4f}")
    base = normalize_hrep(HPolytope(np.vstack([sys.X.F, -sys.U.F @ L]),
                                    np.concatenate([sys.X.g, sys.U.g]), sys.n), tol)
    omega = base
    for _ in range(max_iter):
        image_pre = HPolytope(omega.F @ Acl, omega.g, sys.n)
        nxt = intersect(omega, image_pre, tol)
        if set_equal(nxt, omega, tol):
            return nxt
        omega = nxt
    raise NotConverged(f"invariant set iteration did not converge in {max_iter} steps", last=omega)
