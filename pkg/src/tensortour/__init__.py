"""Tensor-network solver for the traveling salesman problem and variants.

Simulated imaginary-time evolution over a superposition of all routes,
constraint projection through sparse MPO filter layers, and an iterative
partial trace that fixes one route variable per sweep.  Includes exact
brute-force oracles for verification, an approximate mode that drops
constraint layers, and a job-reassignment front end.
"""

from .approximate import ApproxConfig, MPSChain, Strategy, mps_truncate, select_layers
from .engine import (SolveReport, SolverConfig, SweepResult, WCache, anchor_candidates,
                     auto_tau, route_amplitude, solve, solve_with_reuse, sweep)
from .errors import (ConfigError, ContractionError, GuardError, InputError,
                     ModelError, NoSurvivingStateError, TensorTourError)
from .jrp import (Assignment, JrpInstance, brute_force_assignment, gains,
                  jrp_to_problem, solve_jrp, swap_orientation)
from .layers import (ChainSpec, LayerKind, LayerSpec, NetworkPlan, build_F_bounds_layer,
                     build_F_layer, build_group_filter, build_plan, build_plus,
                     build_precedence_filter, build_S_layer, build_SK_layer,
                     build_Z_layers)
from .oracle import OracleResult, enumerate_feasible, optimal_set
from .problems import (FORBIDDEN, CostModel, Feasibility, Solution, TourProblem,
                       Variant, absorb_linear, check_feasible, route_cost)
from .tensor import IndexPairing, OpCounter, Tensor, argmax_with_ties, contract, trace_index

__version__ = "0.1.0"

__all__ = [
    "ApproxConfig", "Assignment", "ChainSpec", "ConfigError", "ContractionError",
    "CostModel", "FORBIDDEN", "Feasibility", "GuardError", "IndexPairing",
    "InputError", "JrpInstance", "LayerKind", "LayerSpec", "MPSChain", "ModelError",
    "NetworkPlan", "NoSurvivingStateError", "OpCounter", "OracleResult", "Solution",
    "SolveReport", "SolverConfig", "Strategy", "SweepResult", "Tensor",
    "TensorTourError", "TourProblem", "Variant", "WCache", "absorb_linear",
    "anchor_candidates", "argmax_with_ties", "auto_tau", "brute_force_assignment",
    "build_F_bounds_layer", "build_F_layer", "build_group_filter", "build_plan",
    "build_plus", "build_precedence_filter", "build_S_layer", "build_SK_layer",
    "build_Z_layers", "check_feasible", "contract", "enumerate_feasible", "gains",
    "jrp_to_problem", "mps_truncate", "optimal_set", "route_amplitude", "route_cost",
    "select_layers", "solve", "solve_jrp", "solve_with_reuse", "swap_orientation",
    "sweep", "trace_index",
]
