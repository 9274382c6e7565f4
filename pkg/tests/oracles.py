"""Brute-force reference computations, written independently of the package.

Nothing here imports from ``maxinv``: every routine works on plain numpy
arrays so that a check against the package compares two separate routes.
"""
from itertools import combinations

import numpy as np


def lp_vertex_enumeration(c, A, b, tol=1e-9):
    """min c'x s.t. Ax <= b by enumerating basic feasible solutions.

    Assumes the feasible set is bounded. Returns ``(x, obj)`` or ``(None, None)``
    when no basic solution is feasible.
    """
    m, n = A.shape
    best_x, best = None, np.inf
    for rows in combinations(range(m), n):
        M = A[list(rows)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, b[list(rows)])
        if np.all(A @ x <= b + tol * (1 + np.abs(b))):
            val = float(c @ x)
            if val < best - 1e-12:
                best, best_x = val, x
    return (best_x, best) if best_x is not None else (None, None)


def qp_active_set_enumeration(H, f, A, b, tol=1e-9):
    """min 1/2 x'Hx + f'x s.t. Ax <= b (H positive definite) by trying every active set.

    The KKT point with a primal-feasible x and nonnegative multipliers is the
    unique minimiser. Returns ``(x, obj)`` or ``(None, None)``.
    """
    n = f.size
    m = A.shape[0]
    for k in range(min(n, m) + 1):
        for S in combinations(range(m), k):
            S = list(S)
            AS = A[S]
            K = np.block([[H, AS.T], [AS, np.zeros((k, k))]])
            if abs(np.linalg.det(K)) < 1e-12:
                continue
            sol = np.linalg.solve(K, np.concatenate([-f, b[S]]))
            x, y = sol[:n], sol[n:]
            if np.all(A @ x <= b + tol) and np.all(y >= -tol):
                return x, float(0.5 * x @ H @ x + f @ x)
    return None, None


def lyapunov_series(A_cl, Qbar, terms=20000, tol=1e-16):
    """Partial sum of sum_k (A_cl')^k Qbar A_cl^k until the increment is negligible."""
    P = np.zeros_like(Qbar, dtype=float)
    T = np.array(Qbar, dtype=float)
    for _ in range(terms):
        P += T
        T = A_cl.T @ T @ A_cl
        if np.abs(T).max() < tol * max(1.0, np.abs(P).max()):
            break
    return P


def vertices_brute(F, g, tol=1e-9):
    """Every feasible intersection of n facet hyperplanes, deduplicated."""
    m, n = F.shape
    pts = []
    for rows in combinations(range(m), n):
        M = F[list(rows)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, g[list(rows)])
        if np.all(F @ x <= g + tol) and not any(np.abs(x - p).max() < 1e-7 for p in pts):
            pts.append(x)
    return np.array(pts)


def polygon_area(V):
    """Shoelace area of a convex polygon given by unordered vertices."""
    c = V.mean(axis=0)
    order = np.argsort(np.arctan2(V[:, 1] - c[1], V[:, 0] - c[0]))
    P = V[order]
    x, y = P[:, 0], P[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def exists_input_scalar(x, F_om, g_om, A, B, u_max, tol=1e-9):
    """For one input with |u| <= u_max: is there u with F_om (Ax + Bu) <= g_om?

    Each row gives a bound on u of the form a u <= r; the answer is whether the
    resulting interval meets [-u_max, u_max].
    """
    a = F_om @ B[:, 0]
    r = g_om - F_om @ (A @ x)
    lo, hi = -u_max, u_max
    for ai, ri in zip(a, r):
        if abs(ai) < 1e-14:
            if ri < -tol:
                return False
        elif ai > 0:
            hi = min(hi, ri / ai)
        else:
            lo = max(lo, ri / ai)
    return lo <= hi + tol


def riccati_recursion(A, B, Q, R, P_T, steps):
    """P_{k} = Q + A'PA - A'PB (R + B'PB)^{-1} B'PA, applied ``steps`` times."""
    P = np.array(P_T, dtype=float)
    for _ in range(steps):
        S = R + B.T @ P @ B
        P = Q + A.T @ P @ A - A.T @ P @ B @ np.linalg.solve(S, B.T @ P @ A)
    return P


def unconstrained_first_gain(A, B, Q, R, P_T, T):
    """First-step gain of the unconstrained T-step LQ problem by direct stacking.

    Builds x = Sx x0 + Su u over the horizon, minimises the stacked quadratic
    in u and reads off the first input's linear dependence on x0.
    """
    n, m = B.shape
    Sx = np.vstack([np.linalg.matrix_power(A, k) for k in range(T + 1)])
    Su = np.zeros(((T + 1) * n, T * m))
    for k in range(1, T + 1):
        for j in range(k):
            Su[k * n:(k + 1) * n, j * m:(j + 1) * m] = np.linalg.matrix_power(A, k - 1 - j) @ B
    Qbar = np.zeros(((T + 1) * n, (T + 1) * n))
    for k in range(T):
        Qbar[k * n:(k + 1) * n, k * n:(k + 1) * n] = Q
    Qbar[T * n:, T * n:] = P_T
    Rbar = np.kron(np.eye(T), R)
    H = Su.T @ Qbar @ Su + Rbar
    K = np.linalg.solve(H, Su.T @ Qbar @ Sx)      # u* = -K x0
    return K[:m]
