"""Maximal lambda-contractive terminal sets and certified quadratic terminal costs for linear MPC."""
from .errors import *  # noqa: F401,F403
from .invariance import SetIterationLog, lqr_invariant_set, max_contractive_set
from .lqr import (LinearSystem, RiccatiSolution, finite_horizon_gain, solve_dare,
                  solve_lyapunov)
from .mpc import (MpcController, Trajectory, build_controller, feasible_region_grid,
                  local_gain, rhc_step, simulate)
from .pipeline import PipelineResult, run_pipeline
from .polytope import (HPolytope, Simplex, SimplicialFan, VPolytope, boundary_triangulation,
                       intersect, is_subset, normalize_hrep, predecessor, scale, vertices,
                       volume_estimate)
from .problem import PipelineOptions, Problem, load_problem, parse_problem
from .solvers import (LpProblem, QpProblem, SdpProblem, solve_lp, solve_qp, solve_sdp)
from .terminal_cost import CertReport, TerminalCost, assemble_lmi, certify, compute_terminal_cost
from .vertex_controls import (PwlFeedback, VertexControlSolution, build_pwl_feedback,
                              eval_pwl_feedback, locate_simplex, recover_vertex_controls)

__version__ = "0.1.0"
