import json
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from maxinv.errors import NotContractive, OutsideFan, SingularVertexMatrix
from maxinv.polytope import (HPolytope, Simplex, SimplicialFan, VPolytope, boundary_triangulation,
                             hrep_from_vertices, sample_uniform, scale, vertices)
from maxinv.vertex_controls import (PwlFeedback, VertexControlSolution, build_pwl_feedback,
                                    check_vertex_solution, eval_pwl_feedback, locate_many,
                                    locate_simplex, recover_vertex_controls)


def exhaustive_locate(fb, x, tol=1e-9):
    for k, s in enumerate(fb.fan.simplices):
        p = np.linalg.solve(s.V, x)
        if np.all(p >= -tol) and p.sum() <= 1 + tol:
            return k
    return -1


@pytest.fixture(scope="module", params=["run1", "run2"])
def run(request):
    return request.getfixturevalue(request.param)


# ---------------------------------------------------------------- vertex LP

def test_oscillator_controls_admissible(sys2):
    V = vertices(sys2.X)
    sol = recover_vertex_controls(V, sys2, 1.0)
    assert np.all(np.abs(sol.controls) <= 1 + 1e-9)


def test_no_input_stable_plant_zero_controls():
    # B = 0 is outside LinearSystem's reachability contract; the LP only needs these fields
    A = np.array([[0.5, 0.2], [-0.1, 0.4]])
    sys = SimpleNamespace(A=A, B=np.zeros((2, 1)), U=HPolytope.box([1.0]), n=2, m=1)
    sol = recover_vertex_controls(vertices(HPolytope.box([1.0, 1.0])), sys, 1.0)
    np.testing.assert_allclose(sol.controls, 0.0, atol=1e-12)


def test_vertex_images_stay_inside(run):
    s = run.system
    C = run.terminal_set
    V = run.vertices.vertices
    imgs = V @ s.A.T + run.controls.controls @ s.B.T
    assert np.all(C.margin(imgs) >= -1e-7)


def test_solution_invariants(run):
    res = check_vertex_solution(run.vertices, run.system, run.controls)
    assert res["equality"] < 1e-7
    assert res["lambda_excess"] <= 1e-9
    assert res["u_margin"] >= -1e-9
    assert np.all(run.controls.interpolation >= 0)


def test_state_set_not_invariant_for_unstable_plant(sys1):
    with pytest.raises(NotContractive):
        recover_vertex_controls(vertices(sys1.X), sys1, 1.0)


def test_deviation_objective_recovers_linear_law(sys2):
    L = np.array([[-0.1, 0.1]])
    V = vertices(sys2.X)
    sol = recover_vertex_controls(V, sys2, 1.0, "min-deviation-from-linear", L)
    np.testing.assert_allclose(sol.controls, -(V.vertices @ L.T), atol=1e-9)


def test_deviation_objective_needs_reference(sys2):
    with pytest.raises(ValueError):
        recover_vertex_controls(vertices(sys2.X), sys2, 1.0, "min-deviation-from-linear")


def test_feasibility_objective(sys2):
    sol = recover_vertex_controls(vertices(sys2.X), sys2, 1.0, "feasibility")
    assert sol.objective_used == "feasibility"
    assert check_vertex_solution(vertices(sys2.X), sys2, sol)["equality"] < 1e-7


def test_solution_round_trip(run):
    d = json.loads(json.dumps(run.controls.to_dict()))
    back = VertexControlSolution.from_dict(d)
    assert np.array_equal(back.controls, run.controls.controls)


# ---------------------------------------------------------------- PWL feedback

def test_linear_controls_give_common_gain():
    L = np.array([[0.3, -0.7]])
    V = vertices(HPolytope.box([1.0, 2.0]))
    fan = boundary_triangulation(V)
    sol = VertexControlSolution(-(V.vertices @ L.T), np.ones(V.count), np.zeros((4, 4)), "feasibility")
    fb = build_pwl_feedback(fan, sol)
    for Lk in fb.L:
        np.testing.assert_allclose(Lk, L, atol=1e-12)


def test_singular_simplex_rejected():
    V = VPolytope(np.array([[1.0, 0.0], [2.0, 0.0], [-1.0, -1.0]]))
    fan = SimplicialFan(V, [Simplex((0, 1), V.vertices[[0, 1]].T)])
    sol = VertexControlSolution(np.zeros((3, 1)), np.ones(3), np.zeros((3, 3)), "feasibility")
    with pytest.raises(SingularVertexMatrix):
        build_pwl_feedback(fan, sol)


def test_interpolates_vertex_controls(run):
    fb = run.feedback
    for v, u in zip(run.vertices.vertices, run.controls.controls):
        np.testing.assert_allclose(eval_pwl_feedback(fb, v), u, atol=1e-9)


def test_origin(run):
    assert locate_simplex(run.feedback, np.zeros(run.system.n)) == 0
    np.testing.assert_array_equal(eval_pwl_feedback(run.feedback, np.zeros(run.system.n)), 0.0)


def test_vertex_located_in_incident_simplex(run):
    fb = run.feedback
    for i, v in enumerate(run.vertices.vertices):
        k = locate_simplex(fb, v)
        assert i in fb.fan.simplices[k].index_set


def test_locate_matches_exhaustive_search(run):
    fb = run.feedback
    X = sample_uniform(run.terminal_set, 1000, seed=1)
    got = locate_many(fb, X)
    assert all(got[i] == exhaustive_locate(fb, x) for i, x in enumerate(X))


def test_outside_fan_raises(run):
    far = 10 * np.abs(run.vertices.vertices).max() * np.ones(run.system.n)
    with pytest.raises(OutsideFan):
        locate_simplex(run.feedback, far)


def test_admissible_and_contractive_on_samples(run):
    s = run.system
    lam = run.options.lam
    X = sample_uniform(run.terminal_set, 10_000, seed=2)
    U = eval_pwl_feedback(run.feedback, X)
    assert np.all(s.U.margin(U) >= -1e-9)
    Xn = X @ s.A.T + U @ s.B.T
    assert np.all(scale(run.terminal_set, lam).margin(Xn) >= -1e-7)


def test_barycentric_consistency(run):
    fb = run.feedback
    X = sample_uniform(run.terminal_set, 500, seed=3)
    for x in X:
        k = locate_simplex(fb, x)
        s = fb.fan.simplices[k]
        p = np.linalg.solve(s.V, x)
        u_direct = run.controls.controls[list(s.index_set)].T @ p
        np.testing.assert_allclose(eval_pwl_feedback(fb, x), u_direct, atol=1e-9)


@given(seed=st.integers(0, 10_000))
def test_continuity_along_segments(run1, seed):
    """Dense sampling across faces: neighbouring samples differ by a Lipschitz step only."""
    fb = run1.feedback
    C = run1.terminal_set
    a, b = sample_uniform(C, 2, seed=seed)
    t = np.linspace(0.0, 1.0, 20001)
    X = a[None, :] + t[:, None] * (b - a)[None, :]
    U = eval_pwl_feedback(fb, X)
    jumps = np.abs(np.diff(U, axis=0)).max()
    # Lipschitz bound of the largest gain times step length
    step = np.linalg.norm(b - a) / 20000
    lip = max(np.linalg.norm(L, 2) for L in fb.L)
    assert jumps <= lip * step + 1e-7


def test_face_agreement(run):
    """Adjacent simplices give the same control on their shared face."""
    fb = run.feedback
    sims = fb.fan.simplices
    rng = np.random.default_rng(4)
    n = run.system.n
    for i in range(len(sims)):
        for j in range(i + 1, len(sims)):
            shared = sorted(set(sims[i].index_set) & set(sims[j].index_set))
            if len(shared) != n - 1:
                continue
            W = run.vertices.vertices[shared]
            w = rng.dirichlet(np.ones(len(shared) + 1), size=5)[:, 1:]
            for x in w @ W:
                np.testing.assert_allclose(-fb.L[i] @ x, -fb.L[j] @ x, atol=1e-9)


def test_feedback_round_trip(run, tmp_path):
    fb = run.feedback
    fb.write_json(tmp_path / "fan.json")
    back = PwlFeedback.from_dict(json.loads((tmp_path / "fan.json").read_text()))
    X = sample_uniform(run.terminal_set, 100, seed=5)
    np.testing.assert_array_equal(eval_pwl_feedback(back, X), eval_pwl_feedback(fb, X))
    fb.write_vertex_csv(tmp_path / "c.csv", run.controls.controls)
    rows = (tmp_path / "c.csv").read_text().splitlines()
    assert len(rows) == run.vertices.count + 1


def test_hull_of_fan_parent_is_terminal_set(run):
    from maxinv.polytope import set_equal
    assert set_equal(hrep_from_vertices(run.feedback.fan.parent), run.terminal_set, tol=1e-6)


def test_stopping_tolerance_absorbed():
    """A pinned unstable mode leaves vertices up to the set tolerance outside their exact position;
    the LP still returns controls within the equality tolerance."""
    from maxinv.invariance import max_contractive_set
    from maxinv.lqr import LinearSystem
    s = LinearSystem(np.diag([2.0, 0.5]), np.array([[1.0], [1.0]]), np.eye(2), np.eye(1),
                     HPolytope.box([10.0, 10.0]), HPolytope.box([1.0]))
    C, _ = max_contractive_set(s, 1.0)
    V = vertices(C)
    assert np.abs(V.vertices[:, 0]).max() > 1.0    # outer approximation of x1 = +-1
    sol = recover_vertex_controls(V, s, 1.0)
    res = check_vertex_solution(V, s, sol)
    assert res["equality"] <= 1e-7 and res["u_margin"] >= -1e-9
    np.testing.assert_allclose(np.abs(sol.controls), 1.0, atol=1e-9)
