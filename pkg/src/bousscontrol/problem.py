"""A bundled control problem: geometry, physics, horizon, data and cost."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adjoint import assemble_gradient, solve_adjoint
from .forms import DiscreteForms, PhysicalParams
from .grid import Domain
from .state import ControlPair, CostWeights, Stepper, TimeGrid, evaluate_cost, solve_forward


@dataclass(eq=False)
class ControlProblem:
    """Everything needed to evaluate ``J(v)`` and its gradient.

    The stepper (and its factorisations) is built once and reused by every
    forward and adjoint solve.
    """

    domain: Domain
    params: PhysicalParams
    time: TimeGrid
    z0: np.ndarray
    w0: np.ndarray
    weights: CostWeights
    bounds: tuple | None = None
    check_cfl: bool = True
    n_forward: int = field(default=0, init=False)

    def __post_init__(self):
        self.forms = DiscreteForms(self.domain, self.params)
        self.stepper = Stepper(self.forms, self.time.dt, self.check_cfl)

    def controls(self, v1=None, v2=None) -> ControlPair:
        """Control pair with the problem's bounds; defaults to the midpoint of
        the admissible box (or zero without bounds)."""
        if self.bounds is not None:
            a1, b1, a2, b2 = self.bounds
            v1 = 0.5 * (np.asarray(a1) + np.asarray(b1)) if v1 is None else v1
            v2 = 0.5 * (np.asarray(a2) + np.asarray(b2)) if v2 is None else v2
        return ControlPair.constant(self.domain, self.time, 0.0 if v1 is None else v1,
                                    0.0 if v2 is None else v2, bounds=self.bounds)

    def forward(self, controls: ControlPair, enforce_bounds=True):
        self.n_forward += 1
        return solve_forward(self.z0, self.w0, controls, time=self.time, stepper=self.stepper,
                             enforce_bounds=enforce_bounds)

    def cost(self, controls: ControlPair, enforce_bounds=True) -> float:
        return evaluate_cost(self.forward(controls, enforce_bounds), controls, self.weights)

    def cost_and_gradient(self, controls: ControlPair, enforce_bounds=True):
        """Returns ``(J, grad_v1, grad_v2, adjoint, trajectory)``."""
        traj = self.forward(controls, enforce_bounds)
        J = evaluate_cost(traj, controls, self.weights)
        adj = solve_adjoint(traj, self.weights)
        g1, g2 = assemble_gradient(adj, self.weights, self.params)
        return J, g1, g2, adj, traj

    def control_inner(self, a1, a2, b1, b2) -> float:
        d = self.domain
        return float(self.time.dt * (np.sum(a1 * b1 * d.faces.length[d.gamma1])
                                     + np.sum(a2 * b2 * d.faces.length[d.gamma2])))
