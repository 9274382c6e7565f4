"""Polyhedral geometry in floating point: H/V representations and set operations.

All polytopes carry unit-norm facet normals. Redundancy, containment and
emptiness questions are answered with one LP per facet. Vertex enumeration
is specialised for the plane; in three and four dimensions it goes through
qhull's halfspace intersection and is then verified against the H-rep.
"""
from __future__ import annotations

import csv
import itertools
import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, HalfspaceIntersection

from .errors import (DegeneratePolytope, DimensionMismatch, EliminationBlowup,
                     EmptyPolytope, NotCset, OriginNotInterior, UnboundedPolytope)
from .solvers import LpProblem, solve_lp

logger = logging.getLogger(__name__)

EPS_SET = 1e-7
EPS_VERT = 1e-8
ROW_NORM_MIN = 1e-12
FM_ROW_CAP = 20000


@dataclass
class HPolytope:
    """The set ``{x : F x <= g}`` with unit-norm rows of ``F``.

    Rows with (near) zero norm are dropped when ``0 <= g_i`` and make the set
    empty otherwise. A polytope with no rows is the whole space.
    """

    F: np.ndarray
    g: np.ndarray
    dim: int = None

    def __post_init__(self):
        F = np.asarray(self.F, dtype=float)
        g = np.asarray(self.g, dtype=float).reshape(-1)
        if self.dim is None:
            if F.ndim != 2:
                raise DimensionMismatch("cannot infer dimension from an empty F")
            self.dim = F.shape[1]
        F = F.reshape(-1, self.dim)
        if F.shape[0] != g.size:
            raise DimensionMismatch(f"F has {F.shape[0]} rows but g has {g.size} entries")
        norms = np.linalg.norm(F, axis=1)
        zero = norms < ROW_NORM_MIN
        if np.any(g[zero] < -EPS_SET):
            raise EmptyPolytope("a zero row has a negative offset")
        keep = ~zero
        # rows already unit norm to rounding are left untouched so reloads are exact
        norms = np.where(np.abs(norms - 1.0) < 1e-14, 1.0, norms)
        self.F = F[keep] / norms[keep, None]
        self.g = g[keep] / norms[keep]

    @property
    def n_rows(self):
        return self.F.shape[0]

    def is_cset_offsets(self):
        return self.n_rows > 0 and bool(np.all(self.g > 0))

    def contains(self, x, tol=1e-9):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return bool(np.all(self.F @ x <= self.g + tol))
        return np.all(x @ self.F.T <= self.g + tol, axis=1)

    def margin(self, x):
        """Smallest slack ``g - F x``; negative outside. Accepts a batch of points."""
        x = np.asarray(x, dtype=float)
        if self.n_rows == 0:
            return np.inf if x.ndim == 1 else np.full(x.shape[0], np.inf)
        if x.ndim == 1:
            return float(np.min(self.g - self.F @ x))
        return np.min(self.g[None, :] - x @ self.F.T, axis=1)

    def to_dict(self):
        return {"F": self.F.tolist(), "g": self.g.tolist()}

    @classmethod
    def from_dict(cls, d, dim=None):
        F = np.asarray(d["F"], dtype=float)
        if dim is None and F.ndim == 2:
            dim = F.shape[1]
        return cls(F, d["g"], dim)

    @classmethod
    def box(cls, half_widths):
        h = np.atleast_1d(np.asarray(half_widths, dtype=float))
        n = h.size
        return cls(np.vstack([np.eye(n), -np.eye(n)]), np.concatenate([h, h]), n)


@dataclass
class VPolytope:
    vertices: np.ndarray
    dim: int = None

    def __post_init__(self):
        V = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        if self.dim is None:
            self.dim = V.shape[1]
        self.vertices = V.reshape(-1, self.dim)

    @property
    def count(self):
        return self.vertices.shape[0]

    def to_dict(self):
        return {"vertices": self.vertices.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["vertices"], dtype=float))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            for v in self.vertices:
                w.writerow([repr(float(c)) for c in v])


@dataclass
class Simplex:
    """Cone simplex ``conv{0, V[:, 0], ..., V[:, n-1]}``; indices are 0-based vertex ids."""

    index_set: tuple
    V: np.ndarray


@dataclass
class SimplicialFan:
    parent: VPolytope
    simplices: list = field(default_factory=list)

    @property
    def N(self):
        return len(self.simplices)

    def to_dict(self):
        return {"parent": self.parent.to_dict(),
                "simplices": [{"vertex_indices": list(s.index_set), "V": s.V.tolist()}
                              for s in self.simplices]}

    @classmethod
    def from_dict(cls, d):
        parent = VPolytope.from_dict(d["parent"])
        simplices = [Simplex(tuple(s["vertex_indices"]), np.asarray(s["V"], dtype=float))
                     for s in d["simplices"]]
        return cls(parent, simplices)


def save_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj.to_dict(), fh, indent=2, sort_keys=True)


# --------------------------------------------------------------------------
# LP helpers
# --------------------------------------------------------------------------

def support(P: HPolytope, direction):
    """``max d'x`` over P; returns (value, argmax). Value is +inf when unbounded."""
    res = solve_lp(LpProblem(-np.asarray(direction, dtype=float), P.F, P.g))
    if res.status == "infeasible":
        raise EmptyPolytope("support LP infeasible")
    if res.status == "unbounded":
        return np.inf, None
    return -res.obj, res.x


def chebyshev_center(P: HPolytope):
    """Center and radius of the largest inscribed ball (radius capped at 1e6)."""
    n = P.dim
    A = np.hstack([P.F, np.ones((P.n_rows, 1))])
    c = np.zeros(n + 1)
    c[-1] = -1.0
    res = solve_lp(LpProblem(c, A, P.g, bounds=[(None, None)] * n + [(0, 1e6)]))
    if res.status == "infeasible":
        raise EmptyPolytope("polytope is empty")
    return res.x[:n], res.x[n]


def is_empty(P: HPolytope):
    if P.n_rows == 0:
        return False
    return solve_lp(LpProblem(np.zeros(P.dim), P.F, P.g)).status == "infeasible"


def _canonical(F, g):
    order = np.lexsort(np.column_stack([F, g[:, None]]).T[::-1])
    return F[order], g[order]


def _dedupe_rows(F, g):
    """Collapse rows with identical normals (to 1e-9), keeping the tightest offset."""
    if F.shape[0] == 0:
        return F, g
    best = {}
    for i, k in enumerate(map(tuple, np.round(F * 1e9).astype(np.int64))):
        if k not in best or g[i] < g[best[k]]:
            best[k] = i
    idx = np.array(sorted(best.values()))
    return F[idx], g[idx]


# --------------------------------------------------------------------------
# Operations
# --------------------------------------------------------------------------

def normalize_hrep(P: HPolytope, tol: float = EPS_SET) -> HPolytope:
    """Remove redundant rows; row i goes when its support over the others is <= g_i + tol.

    Rows whose support LP over the remaining rows is unbounded are kept (they
    bound the set in that direction); the result may therefore be unbounded,
    which ``predecessor`` relies on.
    """
    if P.n_rows == 0:
        return HPolytope(np.zeros((0, P.dim)), np.zeros(0), P.dim)
    if is_empty(P):
        raise EmptyPolytope("normalize_hrep: polytope is empty")
    F, g = _dedupe_rows(P.F, P.g)
    keep = np.ones(F.shape[0], dtype=bool)
    for i in np.argsort(-g, kind="stable"):
        keep[i] = False
        others = np.flatnonzero(keep)
        if others.size == 0:
            keep[i] = True
            continue
        res = solve_lp(LpProblem(-F[i], F[others], g[others]))
        if res.status == "unbounded":
            keep[i] = True
        elif res.status == "infeasible":
            raise EmptyPolytope("normalize_hrep: polytope is empty")
        elif -res.obj > g[i] + tol:
            keep[i] = True
    F, g = _canonical(F[keep], g[keep])
    return HPolytope(F, g, P.dim)


def intersect(P1: HPolytope, P2: HPolytope, tol: float = EPS_SET) -> HPolytope:
    if P1.dim != P2.dim:
        raise DimensionMismatch(f"dimensions {P1.dim} and {P2.dim} differ")
    return normalize_hrep(HPolytope(np.vstack([P1.F, P2.F]), np.concatenate([P1.g, P2.g]), P1.dim), tol)


def scale(P: HPolytope, lam: float) -> HPolytope:
    if not 0 < lam <= 1:
        raise ValueError(f"scale factor must lie in (0, 1], got {lam}")
    if not P.is_cset_offsets():
        raise NotCset("scaling needs a C-set (all offsets positive)")
    return HPolytope(P.F.copy(), lam * P.g, P.dim)


def is_subset(P1: HPolytope, P2: HPolytope, tol: float = EPS_SET) -> bool:
    """True when every row of P2 is satisfied on P1 up to ``tol``. Empty P1 is a subset of anything."""
    if P1.dim != P2.dim:
        raise DimensionMismatch(f"dimensions {P1.dim} and {P2.dim} differ")
    if P1.n_rows and is_empty(P1):
        logger.warning("is_subset: first operand is empty; returning True")
        return True
    for f, gi in zip(P2.F, P2.g):
        val, _ = support(P1, f)
        if val > gi + tol:
            return False
    return True


def set_equal(P1: HPolytope, P2: HPolytope, tol: float = EPS_SET) -> bool:
    return is_subset(P1, P2, tol) and is_subset(P2, P1, tol)


def _prune(M, b, tol):
    """LP redundancy removal on the system M z <= b (rows already unit norm)."""
    P = normalize_hrep(HPolytope(M, b, M.shape[1]), tol)
    return P.F, P.g


def fourier_motzkin(M, b, n_keep, tol=EPS_SET, row_cap=FM_ROW_CAP):
    """Project ``{z : M z <= b}`` onto its first ``n_keep`` coordinates.

    Trailing variables are eliminated one at a time; after each step the
    system is normalised and pruned by LP.
    """
    M = np.asarray(M, dtype=float)
    b = np.asarray(b, dtype=float)
    while M.shape[1] > n_keep:
        j = M.shape[1] - 1
        col = M[:, j]
        scale_ = np.max(np.abs(M), axis=1)
        pos = np.flatnonzero(col > 1e-12 * scale_)
        neg = np.flatnonzero(col < -1e-12 * scale_)
        zero = np.setdiff1d(np.arange(M.shape[0]), np.concatenate([pos, neg]))
        if zero.size + pos.size * neg.size > row_cap:
            raise EliminationBlowup(
                f"elimination would create {zero.size + pos.size * neg.size} rows (cap {row_cap})")
        rows = [M[zero, :j]]
        rhs = [b[zero]]
        if pos.size and neg.size:
            cp_ = col[pos][:, None]
            cn_ = -col[neg][None, :]
            # (row_p / c_p) + (row_n / |c_n|) eliminates variable j
            Mp = M[pos, :j] / cp_
            Mn = M[neg, :j] / cn_.T
            bp = b[pos] / col[pos]
            bn = b[neg] / -col[neg]
            rows.append((Mp[:, None, :] + Mn[None, :, :]).reshape(-1, j))
            rhs.append((bp[:, None] + bn[None, :]).reshape(-1))
        M = np.vstack(rows)
        b = np.concatenate(rhs)
        norms = np.linalg.norm(M, axis=1)
        zero_rows = norms < ROW_NORM_MIN
        if np.any(b[zero_rows] < -tol):
            raise EmptyPolytope("projection is empty")
        M = M[~zero_rows] / norms[~zero_rows, None]
        b = b[~zero_rows] / norms[~zero_rows]
        if M.shape[0]:
            M, b = _prune(M, b, tol)
    return M, b


def predecessor(Omega: HPolytope, A, B, U: HPolytope, tol: float = EPS_SET,
                row_cap: int = FM_ROW_CAP) -> HPolytope:
    """``{x : A x + B u in Omega for some u in U}`` via Fourier-Motzkin on u."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    n, m = B.shape
    if Omega.dim != n or U.dim != m or A.shape != (n, n):
        raise DimensionMismatch("predecessor: inconsistent dimensions")
    M = np.vstack([np.hstack([Omega.F @ A, Omega.F @ B]),
                   np.hstack([np.zeros((U.n_rows, n)), U.F])])
    b = np.concatenate([Omega.g, U.g])
    norms = np.linalg.norm(M, axis=1)
    nz = norms >= ROW_NORM_MIN
    if np.any(b[~nz] < -tol):
        raise EmptyPolytope("predecessor set is empty")
    M, b = M[nz] / norms[nz, None], b[nz] / norms[nz]
    if M.shape[0]:
        M, b = _prune(M, b, tol)
    M, b = fourier_motzkin(M, b, n, tol, row_cap)
    if M.shape[0] == 0:
        return HPolytope(np.zeros((0, n)), np.zeros(0), n)
    F, g = _canonical(M, b)
    return HPolytope(F, g, n)


def _dedupe_points(X, tol=EPS_VERT):
    kept = []
    for x in X:
        if not any(np.max(np.abs(x - k)) <= tol for k in kept):
            kept.append(x)
    return np.array(kept).reshape(-1, X.shape[1])


def _sort_lex(X):
    if X.shape[0] == 0:
        return X
    return X[np.lexsort(X.T[::-1])]


def _check_bounded(P: HPolytope):
    for d in np.vstack([np.eye(P.dim), -np.eye(P.dim)]):
        val, _ = support(P, d)
        if not np.isfinite(val):
            raise UnboundedPolytope("polytope is unbounded")


def vertices(P: HPolytope, tol: float = EPS_VERT) -> VPolytope:
    """Extreme points of a bounded, full-dimensional polytope, sorted lexicographically."""
    if P.n_rows == 0:
        raise UnboundedPolytope("polytope without rows is the whole space")
    _check_bounded(P)
    center, radius = chebyshev_center(P)
    if radius < 1e-9:
        raise DegeneratePolytope("polytope has empty interior")
    n = P.dim
    scale_ = 1.0 + np.abs(P.g).max()
    feas_tol = 1e-9 * scale_
    if n == 1:
        lo = max(-gi / -fi for fi, gi in zip(P.F[:, 0], P.g) if fi < 0)
        hi = min(gi / fi for fi, gi in zip(P.F[:, 0], P.g) if fi > 0)
        return VPolytope(np.array([[lo], [hi]]))
    if n == 2:
        pts = []
        F, g = P.F, P.g
        for i, j in itertools.combinations(range(P.n_rows), 2):
            M = F[[i, j]]
            det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
            if abs(det) < 1e-12:
                continue
            x = np.linalg.solve(M, g[[i, j]])
            if np.all(F @ x <= g + feas_tol):
                pts.append(x)
        pts = np.array(pts)
        # angular order around the center before dedup keeps near-duplicates adjacent
        ang = np.arctan2(pts[:, 1] - center[1], pts[:, 0] - center[0])
        pts = _dedupe_points(pts[np.argsort(ang, kind="stable")], tol)
    else:
        hs = HalfspaceIntersection(np.hstack([P.F, -P.g[:, None]]), center)
        pts = hs.intersections
        pts = pts[np.all(pts @ P.F.T <= P.g + 1e-7 * scale_, axis=1)]
        pts = _dedupe_points(_sort_lex(pts), tol)
    verified = []
    for x in pts:
        active = np.abs(P.F @ x - P.g) <= 1e-7 * scale_
        if active.sum() >= n and np.linalg.matrix_rank(P.F[active], tol=1e-9) == n:
            verified.append(x)
    return VPolytope(_sort_lex(np.array(verified)), n)


def hrep_from_vertices(V: VPolytope, tol: float = 1e-9) -> HPolytope:
    """Facet description of ``conv(V)`` with coplanar qhull facets merged."""
    hull = ConvexHull(V.vertices)
    eq = hull.equations
    F, g = eq[:, :-1], -eq[:, -1]
    norms = np.linalg.norm(F, axis=1)
    F, g = F / norms[:, None], g / norms
    keep = []
    for i in range(F.shape[0]):
        if not any(np.max(np.abs(F[i] - F[k])) <= 1e-7 and abs(g[i] - g[k]) <= 1e-7 * (1 + abs(g[k]))
                   for k in keep):
            keep.append(i)
    Fk, gk = _canonical(F[keep], g[keep])
    return HPolytope(Fk, gk, V.dim)


def _affine_rank(X, tol):
    if X.shape[0] <= 1:
        return 0
    return int(np.linalg.matrix_rank(X[1:] - X[0], tol=tol))


def _pulling_triangulation(face, dim, facet_sets, X, tol):
    """Triangulate a face (vertex index tuple of affine dim ``dim``) by pulling its lowest vertex."""
    if dim == 0:
        return [face]
    apex = face[0]
    face_set = set(face)
    subfaces = set()
    for H in facet_sets:
        G = tuple(sorted(face_set & H))
        if len(G) < dim or apex in G or len(G) == len(face):
            continue
        if _affine_rank(X[list(G)], tol) == dim - 1:
            subfaces.add(G)
    out = []
    for G in sorted(subfaces):
        for s in _pulling_triangulation(G, dim - 1, facet_sets, X, tol):
            out.append((apex,) + s)
    return out


def boundary_triangulation(V: VPolytope, tol: float = 1e-9) -> SimplicialFan:
    """Cone every boundary facet to the origin, triangulating facets by pulling.

    Each facet (and recursively each lower face) is triangulated from its
    lowest-index vertex, so neighbouring facets induce the same triangulation
    on shared faces.
    """
    X = V.vertices
    n = V.dim
    H = hrep_from_vertices(V)
    if np.any(H.g <= tol * (1 + np.abs(H.g).max())):
        raise OriginNotInterior("origin is not in the interior of the polytope")
    scale_ = 1.0 + np.abs(X).max()
    facet_sets = []
    for f, gi in zip(H.F, H.g):
        idx = np.flatnonzero(np.abs(X @ f - gi) <= 1e-7 * scale_)
        facet_sets.append(frozenset(int(i) for i in idx))
    rank_tol = 1e-8 * scale_
    simplices = []
    for Fs in facet_sets:
        face = tuple(sorted(Fs))
        for s in _pulling_triangulation(face, n - 1, facet_sets, X, rank_tol):
            idx = tuple(sorted(s))
            Vk = X[list(idx)].T
            sv = np.linalg.svd(Vk, compute_uv=False)
            if sv[-1] <= 1e-10 * sv[0]:
                raise DegeneratePolytope(f"simplex {idx} is degenerate")
            simplices.append(idx)
    simplices = sorted(set(simplices))
    return SimplicialFan(V, [Simplex(idx, X[list(idx)].T.copy()) for idx in simplices])


def bounding_box(P: HPolytope):
    lo = np.empty(P.dim)
    hi = np.empty(P.dim)
    for i in range(P.dim):
        e = np.zeros(P.dim)
        e[i] = 1.0
        hi[i], _ = support(P, e)
        lo[i] = -support(P, -e)[0]
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise UnboundedPolytope("polytope is unbounded")
    return lo, hi


def volume_estimate(P: HPolytope, n_samples: int = 1_000_000, seed: int = 0,
                    chunk: int = 200_000) -> float:
    """Monte Carlo volume: hit ratio in the bounding box times the box volume."""
    lo, hi = bounding_box(P)
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < n_samples:
        k = min(chunk, n_samples - done)
        x = rng.uniform(lo, hi, size=(k, P.dim))
        hits += int(np.count_nonzero(np.all(x @ P.F.T <= P.g, axis=1)))
        done += k
    return float(np.prod(hi - lo) * hits / n_samples)


def sample_uniform(P: HPolytope, n: int, seed: int = 0):
    """Rejection samples from the bounding box."""
    lo, hi = bounding_box(P)
    rng = np.random.default_rng(seed)
    out = []
    count = 0
    while count < n:
        x = rng.uniform(lo, hi, size=(max(4 * n, 1000), P.dim))
        x = x[np.all(x @ P.F.T <= P.g, axis=1)]
        out.append(x)
        count += x.shape[0]
    return np.vstack(out)[:n]
