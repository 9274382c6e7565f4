import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from maxinv.lqr import LinearSystem
from maxinv.pipeline import run_pipeline
from maxinv.polytope import HPolytope
from maxinv.problem import load_problem

settings.register_profile("default", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
PROBLEMS = os.path.join(ROOT, "problems")


def problem_path(name):
    return os.path.join(PROBLEMS, f"{name}.json")


def unstable_2d():
    """Unstable plant with a slow stable mode, output-weighted cost."""
    C = np.array([[-1.0, 1.0]])
    return LinearSystem(np.array([[1.1, 2.0], [0.0, 0.95]]), np.array([[0.0], [0.0787]]),
                        C.T @ C, np.eye(1), HPolytope.box([8.0, 8.0]), HPolytope.box([1.0]))


def oscillator_2d():
    return LinearSystem(np.array([[0.0, 1.0], [-1.0, 0.0]]), np.array([[0.0], [1.0]]),
                        np.eye(2), np.eye(1), HPolytope.box([5.0, 5.0]), HPolytope.box([1.0]))


def stable_3d():
    A = np.array([[0.48, 0.45, 0.38], [-0.13, 0.52, -0.54], [-0.58, 0.32, 0.40]])
    return LinearSystem(A, np.array([[0.15], [0.0], [0.14]]), 10 * np.eye(3), np.eye(1),
                        HPolytope.box([10.0] * 3), HPolytope.box([1.0]))


@pytest.fixture(scope="session")
def sys1():
    return unstable_2d()


@pytest.fixture(scope="session")
def sys2():
    return oscillator_2d()


@pytest.fixture(scope="session")
def sys3():
    return stable_3d()


@pytest.fixture(scope="session")
def run1():
    p = load_problem(problem_path("unstable_2d"))
    return run_pipeline(p.system, p.pipeline)


@pytest.fixture(scope="session")
def run2():
    p = load_problem(problem_path("oscillator_2d"))
    return run_pipeline(p.system, p.pipeline)


@pytest.fixture(scope="session")
def run3():
    p = load_problem(problem_path("stable_3d"))
    return run_pipeline(p.system, p.pipeline)
