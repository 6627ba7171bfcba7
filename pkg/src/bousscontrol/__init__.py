"""Boundary control of Boussinesq convection in a rectangle.

Staggered-grid forms and state solver, an exact discrete adjoint for the
boundary cost, and box-constrained optimisation of the pressure (``v1``) and
heat-flux (``v2``) controls.
"""

from .adjoint import (AdjointTrajectory, TangentTrajectory, assemble_gradient, directional_derivative,
                      duality_check, gradient_check, solve_adjoint, solve_tangent)
from .config import ConfigError, RunConfig, load_config
from .forms import (DiscreteForms, PhysicalParams, check_smallness, coercivity_constants, form_a1, form_a2,
                    form_b, form_c, form_identity_battery, lift_v1, lift_v2)
from .grid import (BoundaryFunction, Domain, GridError, ScalarField, VelocityField, build_domain, curl2d,
                   divergence, normal_trace, project_divergence_free, scalar_trace)
from .optimize import (GroupParametrization, OptimizationReport, bang_bang_control, conditional_gradient_solve,
                       optimality_residual, project_admissible, projected_gradient_solve, switching_report)
from .oracle import brute_force_oracle
from .problem import ControlProblem
from .state import (CFLError, ControlPair, CostWeights, NumericalError, StateTrajectory, TimeGrid,
                    evaluate_cost, solve_forward, step_state)

__version__ = "0.1.0"
