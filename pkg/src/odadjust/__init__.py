"""Origin-destination demand adjustment for congested networks.

The package estimates demand matrices from partial link-flow observations by
solving a bilevel program: the upper level fits observed flows and prior
demands, the lower level keeps the flows at user equilibrium.  The lower level
is lifted into its optimality system and the whole thing is solved by an
inexact restoration method whose feasibility phase is an ordinary traffic
assignment.
"""

from .driver import (DapResult, IRConfig, IterationRecord, STATUS_CONVERGED,
                     STATUS_MAX_OUTER, STATUS_STALLED, initial_state, solve_dap)
from .errors import (DanglingReference, DimensionMismatch, DuplicateId,
                     InfeasibleTheta, InputError, MalformedInput, MaxIterations,
                     NegativeCoefficient, NegativeCost, NoCandidate,
                     OdAdjustError, ResidualTooLarge, SolverStalled, TooLarge,
                     Unreachable, UnreachableDestination)
from .kkt import (ConstraintResidual, StatePoint, eval_C, eval_C_jacobian,
                  eval_F, eval_F_grad, eval_L, eval_L_grad,
                  recover_multipliers, tangent_space)
from .network import (Commodity, CostFunction, Link, Network,
                      StructureMatrices, aggregate_flows, build_structure,
                      parse_network, serialize_network)
from .projection import TangentSpace, min_norm_solve, project
from .tap import (ShortestPathResult, TapSolution, all_or_nothing,
                  beckmann_objective, line_search_beckmann, relative_gap,
                  shortest_paths, solve_tap)

__version__ = "0.1.0"

__all__ = [
    "Commodity", "ConstraintResidual", "CostFunction", "DapResult",
    "IRConfig", "IterationRecord", "Link", "Network", "ShortestPathResult",
    "StatePoint", "StructureMatrices", "TangentSpace", "TapSolution",
    "aggregate_flows", "all_or_nothing", "beckmann_objective",
    "build_structure", "eval_C", "eval_C_jacobian", "eval_F", "eval_F_grad",
    "eval_L", "eval_L_grad", "initial_state", "line_search_beckmann",
    "min_norm_solve", "parse_network", "project", "recover_multipliers",
    "relative_gap", "serialize_network", "shortest_paths", "solve_dap",
    "solve_tap", "tangent_space",
    "STATUS_CONVERGED", "STATUS_MAX_OUTER", "STATUS_STALLED",
    "OdAdjustError", "InputError", "MalformedInput", "DuplicateId",
    "DanglingReference", "NegativeCoefficient", "UnreachableDestination",
    "DimensionMismatch", "NegativeCost", "Unreachable", "MaxIterations",
    "ResidualTooLarge", "SolverStalled", "NoCandidate", "InfeasibleTheta",
    "TooLarge",
]
