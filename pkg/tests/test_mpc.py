import csv
import json

import cvxpy as cp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from maxinv.errors import ConstraintsActive, InfeasibleState
from maxinv.invariance import lqr_invariant_set
from maxinv.lqr import finite_horizon_gain
from maxinv.mpc import (MAX_HORIZON, build_controller, feasible_region_grid, is_feasible,
                        local_gain, rhc_step, simulate)
from maxinv.polytope import HPolytope, sample_uniform


X0_UNSTABLE = np.array([7.99, -1.27])


@pytest.fixture(scope="module")
def lqr_set1(sys1, run1):
    return lqr_invariant_set(sys1, run1.riccati.L_inf)


def planning_cost_oracle(sys, T, X_T, Q_T, x0):
    """Uncondensed planning problem with explicit state variables."""
    n, m = sys.n, sys.m
    x = cp.Variable((T + 1, n))
    u = cp.Variable((T, m))
    cons = [x[0] == x0]
    cost = 0
    for k in range(T):
        cons += [x[k + 1] == sys.A @ x[k] + sys.B @ u[k], sys.U.F @ u[k] <= sys.U.g]
        if k > 0:
            cons.append(sys.X.F @ x[k] <= sys.X.g)
        cost += cp.quad_form(x[k], sys.Q) + cp.quad_form(u[k], sys.R)
    cons.append(X_T.F @ x[T] <= X_T.g)
    cost += cp.quad_form(x[T], Q_T)
    prob = cp.Problem(cp.Minimize(cost), cons)
    prob.solve(solver="CLARABEL")
    return prob.value, (u.value[0] if u.value is not None else None)


# ---------------------------------------------------------------- planning QP

def test_one_step_structure(sys1, run1):
    Q_T = run1.terminal_cost.P
    ctrl = build_controller(sys1, 1, run1.terminal_set, Q_T)
    B, A, R = sys1.B, sys1.A, sys1.R
    np.testing.assert_allclose(ctrl.H, 2 * (R + B.T @ Q_T @ B), rtol=1e-12)
    np.testing.assert_allclose(ctrl.F, 2 * B.T @ Q_T @ A, rtol=1e-12)
    np.testing.assert_allclose(ctrl.Y, sys1.Q + A.T @ Q_T @ A, rtol=1e-12)


def test_origin_gives_zero_input(run1):
    ctrl = build_controller(run1.system, 3, run1.terminal_set, run1.terminal_cost.P)
    u, diag = rhc_step(ctrl, np.zeros(2))
    np.testing.assert_allclose(u, 0.0, atol=1e-12)
    assert abs(diag["objective"]) < 1e-12


@pytest.mark.parametrize("T", [1, 2, 3, 5])
def test_matches_uncondensed_problem(run1, T):
    s = run1.system
    ctrl = build_controller(s, T, run1.terminal_set, run1.terminal_cost.P)
    for x0 in sample_uniform(run1.terminal_set, 5, seed=T):
        u, diag = rhc_step(ctrl, x0)
        ref, u_ref = planning_cost_oracle(s, T, run1.terminal_set, run1.terminal_cost.P, x0)
        assert diag["objective"] == pytest.approx(ref, rel=1e-6, abs=1e-6)
        np.testing.assert_allclose(u, u_ref, atol=1e-4)


def test_controller_validation(sys1, run1):
    C, P = run1.terminal_set, run1.terminal_cost.P
    with pytest.raises(ValueError):
        build_controller(sys1, MAX_HORIZON + 1, C, P)
    with pytest.raises(ValueError):
        build_controller(sys1, 0, C, P)
    with pytest.raises(ValueError):
        build_controller(sys1, 1, C, -P)
    with pytest.raises(ValueError):
        build_controller(sys1, 1, HPolytope.box([20.0, 20.0]), P)


def test_state_outside_constraints(run1):
    ctrl = build_controller(run1.system, 1, run1.terminal_set, run1.terminal_cost.P)
    with pytest.raises(InfeasibleState):
        rhc_step(ctrl, np.array([9.0, 0.0]))
    assert not is_feasible(ctrl, np.array([9.0, 0.0]))


# ---------------------------------------------------------------- local gain

def test_local_gain_matches_finite_horizon(run1):
    s = run1.system
    Q_T = run1.terminal_cost.P
    errs = []
    for T in (1, 2, 4, 8):
        ctrl = build_controller(s, T, run1.terminal_set, Q_T)
        L = local_gain(ctrl)
        np.testing.assert_allclose(L, finite_horizon_gain(s.A, s.B, s.Q, s.R, Q_T, T), atol=1e-7)
        errs.append(np.linalg.norm(L - run1.riccati.L_inf))
    assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))


def test_local_gain_with_riccati_terminal_cost(run1, lqr_set1):
    ctrl = build_controller(run1.system, 2, lqr_set1, run1.riccati.P_inf)
    np.testing.assert_allclose(local_gain(ctrl), run1.riccati.L_inf, atol=1e-7)


def test_local_gain_detects_active_constraints(run1):
    ctrl = build_controller(run1.system, 1, run1.terminal_set, run1.terminal_cost.P)
    with pytest.raises(ConstraintsActive):
        local_gain(ctrl, probe_radius=5.0)


# ---------------------------------------------------------------- closed loop

def test_one_step_controller_drives_to_rest(run1):
    ctrl = build_controller(run1.system, 1, run1.terminal_set, run1.terminal_cost.P)
    traj = simulate(ctrl, X0_UNSTABLE, 200)
    assert traj.feasible_throughout and traj.converged()
    assert traj.steps_to_rest() <= 200


def test_lqr_terminal_set_needs_long_horizon(run1, lqr_set1):
    P = run1.riccati.P_inf
    assert not is_feasible(build_controller(run1.system, 25, lqr_set1, P), X0_UNSTABLE)
    assert is_feasible(build_controller(run1.system, 26, lqr_set1, P), X0_UNSTABLE)


def check_closed_loop(ctrl, x0, steps):
    s = ctrl.sys
    traj = simulate(ctrl, x0, steps)
    assert traj.status[0] == "optimal"
    assert traj.feasible_throughout
    obj = np.array(traj.objectives)
    assert np.all(np.diff(obj) <= 1e-6)
    X = np.array(traj.states)
    U = np.array(traj.inputs)
    assert np.all(s.X.margin(X) >= -1e-9)
    assert np.all(s.U.margin(U) >= -1e-9)
    return traj


@pytest.mark.parametrize("T", range(1, 9))
def test_recursive_feasibility_unstable(run1, T):
    ctrl = build_controller(run1.system, T, run1.terminal_set, run1.terminal_cost.P)
    check_closed_loop(ctrl, X0_UNSTABLE, 120)


@pytest.mark.parametrize("name,T", [("run2", 1), ("run2", 4), ("run3", 1), ("run3", 5)])
def test_recursive_feasibility_other_examples(name, T, request):
    run = request.getfixturevalue(name)
    x0 = {"run2": [4.0, -4.0], "run3": [-10.0, 10.0, 0.0]}[name]
    ctrl = build_controller(run.system, T, run.terminal_set, run.terminal_cost.P)
    check_closed_loop(ctrl, np.array(x0), 60)


@given(seed=st.integers(0, 10_000), T=st.integers(1, 4))
def test_recursive_feasibility_random_starts(run1, seed, T):
    ctrl = build_controller(run1.system, T, run1.terminal_set, run1.terminal_cost.P)
    x0 = sample_uniform(run1.terminal_set, 1, seed=seed)[0]
    check_closed_loop(ctrl, x0, 25)


def test_cost_drops_by_at_least_stage_cost(run1):
    s = run1.system
    ctrl = build_controller(s, 3, run1.terminal_set, run1.terminal_cost.P)
    traj = simulate(ctrl, X0_UNSTABLE, 40)
    for t in range(len(traj.inputs) - 1):
        x, u = traj.states[t], traj.inputs[t]
        stage = x @ s.Q @ x + u @ s.R @ u
        assert traj.objectives[t + 1] <= traj.objectives[t] - stage + 1e-6


def test_zero_steps(run1, tmp_path):
    ctrl = build_controller(run1.system, 1, run1.terminal_set, run1.terminal_cost.P)
    traj = simulate(ctrl, X0_UNSTABLE, 0)
    traj.write_csv(tmp_path / "t.csv", 2, 1)
    assert (tmp_path / "t.csv").read_text().strip() == "t,x1,x2,u1,cost,feasible"


def test_trajectory_export(run1, tmp_path):
    ctrl = build_controller(run1.system, 2, run1.terminal_set, run1.terminal_cost.P)
    traj = simulate(ctrl, X0_UNSTABLE, 10)
    traj.write_csv(tmp_path / "t.csv")
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert len(rows) == 12 and rows[1][-1] == "1"
    np.testing.assert_allclose([float(v) for v in rows[1][1:3]], X0_UNSTABLE)
    d = json.loads(json.dumps(traj.to_dict()))
    assert len(d["states"]) == 11 and d["feasible_throughout"]


def test_infeasible_start_recorded(run1, lqr_set1):
    ctrl = build_controller(run1.system, 3, lqr_set1, run1.riccati.P_inf)
    traj = simulate(ctrl, X0_UNSTABLE, 10)
    assert traj.status == ["infeasible"] and not traj.feasible_throughout
    assert len(traj.states) == 1


# ---------------------------------------------------------------- feasible regions

def test_one_step_region_is_the_maximal_set(run1):
    """Pre(C) within X equals C at the fixed point, so T = 1 feasibility is membership in C."""
    ctrl = build_controller(run1.system, 1, run1.terminal_set, run1.terminal_cost.P)
    grid = feasible_region_grid(ctrl, 31)
    margin = run1.terminal_set.margin(grid.points())
    clear = np.abs(margin) > 1e-6
    assert np.array_equal(grid.feasible.ravel()[clear], (margin > 0)[clear])


def test_regions_nested_in_horizon(run1, lqr_set1):
    P = run1.riccati.P_inf
    grids = [feasible_region_grid(build_controller(run1.system, T, lqr_set1, P), 21).feasible
             for T in (2, 6, 10)]
    for small, big in zip(grids, grids[1:]):
        assert np.all(big[small])
    assert grids[0].sum() < grids[-1].sum()


def test_region_export(run2, tmp_path):
    ctrl = build_controller(run2.system, 1, run2.terminal_set, run2.terminal_cost.P)
    grid = feasible_region_grid(ctrl, 5)
    grid.write_csv(tmp_path / "r.csv")
    rows = list(csv.reader(open(tmp_path / "r.csv")))
    assert rows[0] == ["x1", "x2", "feasible"] and len(rows) == 26
    # C equals X for this plant, so the whole box is feasible
    assert grid.feasible.all()
    assert np.array(grid.to_dict()["feasible"]).shape == (5, 5)
