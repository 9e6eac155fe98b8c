"""Optimal control of gradient flows through the weighted energy-dissipation
(WED) variational approach.

The state equation ``y' + grad phi(y) = u`` is replaced by minimization of a
global-in-time functional ``W_eps(., u)``; the resulting bilevel and
penalized control problems converge to the original one as ``eps -> 0``.
"""

from .core import (ControlFamily, ControlPoint, SolveReport, TimeGrid, Trajectory, norm_c0,
                   norm_h1, norm_hsigma, norm_l2, read_trajectory_csv, velocity_l2,
                   write_trajectory_csv)
from .energy import DoubleWell, Energy, Obstacle, Quadratic, energy_from_config
from .exceptions import (CapabilityError, ConfigError, ConstraintError, DomainError, InputError,
                         OracleError, ParameterError, SolverError, WedflowError)
from .flow import FlowProblem, dissipation_identity_residual, solve_gradient_flow
from .optctl import (OptimalPair, SolverOptions, TargetFunctional, eval_J, penalized_state,
                     solve_P, solve_P_eps, solve_P_eps_lambda)
from .problems import ProblemBundle, decay_example
from .wed import (WedProblem, coercivity_gap, epsilon0, euler_lagrange_residual, lemma1_value,
                  m_eps, regularity_terms, wed_minimize, wed_subgradients, wed_value)

__all__ = [
    "ControlFamily", "ControlPoint", "SolveReport", "TimeGrid", "Trajectory", "norm_c0",
    "norm_h1", "norm_hsigma", "norm_l2", "read_trajectory_csv", "velocity_l2",
    "write_trajectory_csv", "DoubleWell", "Energy", "Obstacle", "Quadratic", "energy_from_config",
    "CapabilityError", "ConfigError", "ConstraintError", "DomainError", "InputError",
    "OracleError", "ParameterError", "SolverError", "WedflowError", "FlowProblem",
    "dissipation_identity_residual", "solve_gradient_flow", "OptimalPair", "SolverOptions",
    "TargetFunctional", "eval_J", "penalized_state", "solve_P", "solve_P_eps",
    "solve_P_eps_lambda", "ProblemBundle", "decay_example", "WedProblem", "coercivity_gap",
    "epsilon0", "euler_lagrange_residual", "lemma1_value", "m_eps", "regularity_terms",
    "wed_minimize", "wed_subgradients", "wed_value",
]

__version__ = "0.1.0"
