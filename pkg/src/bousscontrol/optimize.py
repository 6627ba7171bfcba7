"""Box-constrained minimisation of the boundary cost.

Two first-order methods share one termination rule based on the closed-form
optimality residual

    R(v) = sup_{mu in box} sum dt |face| ( -grad . (mu - v) ),

which vanishes exactly when every control value sits at the bound dictated by
the sign of its switching function (or the switching function is zero).
Both methods work on a flat vector ``x`` with lower/upper bounds and a
quadrature measure, so the same code drives the full face-time controls and
low-dimensional restricted parametrisations.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adjoint import SWITCH_SIGN
from .state import ControlPair, NumericalError

log = logging.getLogger(__name__)


class OptimizationError(NumericalError):
    """A forward or adjoint solve failed inside the optimisation loop."""

    def __init__(self, msg, iteration):
        super().__init__(f"iteration {iteration}: {msg}")
        self.iteration = iteration


# -- pointwise building blocks -------------------------------------------------

def project_admissible(v: ControlPair) -> ControlPair:
    """Clip ``v1`` to ``[alpha1, beta1]`` and ``v2`` to ``[alpha2, beta2]``."""
    if not v.has_bounds:
        raise ValueError("project_admissible needs a control pair with bounds")
    for a, b, i in ((v.alpha1, v.beta1, 1), (v.alpha2, v.beta2, 2)):
        if np.any(a > b):
            raise ValueError(f"bounds violate (1.{i + 2}): alpha{i} > beta{i} somewhere")
    return v.with_values(np.clip(v.v1, v.alpha1, v.beta1), np.clip(v.v2, v.alpha2, v.beta2))


def control_measure(domain, time):
    """Quadrature weights ``dt |face|`` for each control value, shaped like
    ``(v1, v2)``."""
    m1 = np.broadcast_to(time.dt * domain.faces.length[domain.gamma1], (time.nt, len(domain.gamma1)))
    m2 = np.broadcast_to(time.dt * domain.faces.length[domain.gamma2], (time.nt, len(domain.gamma2)))
    return np.array(m1), np.array(m2)


def _box_residual(x, g, lo, hi, m):
    return float(np.sum(m * (np.maximum(g, 0.0) * (x - lo) + np.maximum(-g, 0.0) * (hi - x))))


def optimality_residual(v: ControlPair, s1, s2, weights, measure=None) -> float:
    """Closed-form sup of the variational inequality over the box.

    A point with ``s > 0`` contributes ``N s (beta - v)``; with ``s < 0`` it
    contributes ``N s (alpha - v)``. ``measure`` is the pair of quadrature
    weights (defaults to unit weights).
    """
    m1, m2 = measure if measure is not None else (np.ones_like(v.v1), np.ones_like(v.v2))
    g1 = SWITCH_SIGN * weights.N1 * np.asarray(s1)
    g2 = SWITCH_SIGN * weights.N2 * np.asarray(s2)
    return (_box_residual(v.v1, g1, v.alpha1, v.beta1, m1)
            + _box_residual(v.v2, g2, v.alpha2, v.beta2, m2))


def _bang(s, lo, hi, tie_tol):
    return np.where(s > tie_tol, hi, np.where(s < -tie_tol, lo, 0.5 * (lo + hi)))


def bang_bang_control(s1, s2, bounds: ControlPair, tie_tol=0.0) -> ControlPair:
    """``beta`` where ``s > tie_tol``, ``alpha`` where ``s < -tie_tol``, and the
    midpoint of the box inside the tie band."""
    b = bounds
    return b.with_values(_bang(np.asarray(s1), b.alpha1, b.beta1, tie_tol),
                         _bang(np.asarray(s2), b.alpha2, b.beta2, tie_tol))


def _at_bound(x, lo, hi, atol):
    lower = np.abs(x - lo) <= atol
    upper = np.abs(x - hi) <= atol
    return lower, upper


def switching_report(adj, v: ControlPair, tol=None, tol_frac=0.0, measure=None) -> dict:
    """Sign structure of the switching functions and agreement of ``v`` with
    the bang-bang rule on ``{|s| > tol}``.

    ``adj`` is an :class:`AdjointTrajectory` or an ``(s1, s2)`` pair. With
    ``tol=None`` the tie band is ``1e-8 max|s|``.
    """
    s1, s2 = (adj.s1, adj.s2) if hasattr(adj, "s1") else adj
    if measure is None:
        measure = (np.ones_like(v.v1), np.ones_like(v.v2))
    smax = max(np.max(np.abs(s1), initial=0.0), np.max(np.abs(s2), initial=0.0))
    if tol is None:
        tol = 1e-8 * smax
    out = {"tie_tol": float(tol)}
    agree = 0.0
    total = 0.0
    for name, s, x, lo, hi, m in (("s1", s1, v.v1, v.alpha1, v.beta1, measure[0]),
                                  ("s2", s2, v.v2, v.alpha2, v.beta2, measure[1])):
        mtot = float(np.sum(m))
        pos, neg = s > tol, s < -tol
        tie = ~(pos | neg)
        atol = 1e-12 * np.max(np.abs(hi - lo), initial=1.0)
        lower, upper = _at_bound(x, lo, hi, atol)
        ok = (pos & upper) | (neg & lower)
        out[name] = {"pos": float(np.sum(m[pos]) / mtot), "neg": float(np.sum(m[neg]) / mtot),
                     "tie": float(np.sum(m[tie]) / mtot),
                     "agreement": float(np.sum(m[ok]) / np.sum(m[~tie])) if np.any(~tie) else 1.0}
        agree += float(np.sum(m[ok]))
        total += float(np.sum(m[~tie]))
    out["agreement"] = agree / total if total > 0 else 1.0
    out["bang_bang_verified"] = bool(total > 0 and out["agreement"] >= 1.0 - tol_frac)
    return out


# -- generic box problem -------------------------------------------------------

class BoxProblem:
    """Flat view of a control problem: ``x`` in ``[lo, hi]`` with quadrature
    weights ``m`` so that ``<a, b> = sum m a b``."""

    def __init__(self, problem, template: ControlPair, parametrization=None):
        self.problem = problem
        self.template = template
        self.par = parametrization
        if parametrization is None:
            m1, m2 = control_measure(problem.domain, problem.time)
            self.m = np.concatenate([m1.ravel(), m2.ravel()])
            self.lo = np.concatenate([template.alpha1.ravel(), template.alpha2.ravel()])
            self.hi = np.concatenate([template.beta1.ravel(), template.beta2.ravel()])
        else:
            self.m = np.ones(parametrization.size)
            self.lo, self.hi = parametrization.lower.copy(), parametrization.upper.copy()
        self.last_adjoint = None
        self.start_forward = problem.n_forward

    def controls(self, x) -> ControlPair:
        if self.par is None:
            return self.template.unflat(x)
        return self.par.controls(x, self.template)

    def evaluate(self, x, gradient=True):
        v = self.controls(x)
        if not gradient:
            return self.problem.cost(v), None
        J, g1, g2, adj, _ = self.problem.cost_and_gradient(v)
        self.last_adjoint = adj
        g = np.concatenate([g1.ravel(), g2.ravel()])
        if self.par is not None:
            m1, m2 = control_measure(self.problem.domain, self.problem.time)
            g = self.par.pullback(g * np.concatenate([m1.ravel(), m2.ravel()]))
        return J, g

    def residual(self, x, g) -> float:
        return _box_residual(x, g, self.lo, self.hi, self.m)

    def fractions(self, x):
        span = np.maximum(self.hi - self.lo, 1e-300)
        lower = np.abs(x - self.lo) <= 1e-12 * span
        upper = (np.abs(x - self.hi) <= 1e-12 * span) & ~lower
        n = float(x.size)
        return float(lower.sum() / n), float(upper.sum() / n), float(1.0 - (lower.sum() + upper.sum()) / n)


@dataclass
class OptimizationReport:
    """History and final state of one optimisation run."""

    method: str
    controls: ControlPair
    x: np.ndarray
    J: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    step_size: list = field(default_factory=list)
    frac_lower: list = field(default_factory=list)
    frac_upper: list = field(default_factory=list)
    frac_interior: list = field(default_factory=list)
    termination: str = ""
    tol: float = 0.0
    switching: dict = field(default_factory=dict)
    s1_sign: np.ndarray | None = None
    s2_sign: np.ndarray | None = None
    adjoint: object = None
    n_forward: int = 0

    @property
    def n_iter(self) -> int:
        return len(self.J) - 1

    @property
    def J_final(self) -> float:
        return self.J[-1]

    @property
    def converged(self) -> bool:
        return self.termination == "residual"

    def summary(self) -> dict:
        return {"method": self.method, "iterations": self.n_iter, "J_initial": self.J[0],
                "J_final": self.J[-1], "residual_initial": self.residual[0],
                "residual_final": self.residual[-1], "tol": self.tol, "termination": self.termination,
                "forward_solves": self.n_forward, "switching": self.switching}

    def write_convergence_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["iter", "J", "residual", "step_size", "frac_lower", "frac_upper", "frac_interior"])
            for i in range(len(self.J)):
                wr.writerow([i, repr(float(self.J[i])), repr(float(self.residual[i])),
                             repr(float(self.step_size[i])), repr(self.frac_lower[i]),
                             repr(self.frac_upper[i]), repr(self.frac_interior[i])])
        return path


def _record(rep, box, x, J, R, step):
    lo, up, inn = box.fractions(x)
    rep.J.append(float(J))
    rep.residual.append(float(R))
    rep.step_size.append(float(step))
    rep.frac_lower.append(lo)
    rep.frac_upper.append(up)
    rep.frac_interior.append(inn)


def _finish(rep, box, x, g, reason):
    rep.x = x
    rep.controls = box.controls(x)
    rep.termination = reason
    s = SWITCH_SIGN * g
    if box.par is None:
        adj = box.last_adjoint
        rep.adjoint = adj
        rep.s1_sign, rep.s2_sign = np.sign(adj.s1), np.sign(adj.s2)
        m = control_measure(box.problem.domain, box.problem.time)
        rep.switching = switching_report(adj, rep.controls, measure=m)
    else:
        rep.s1_sign = np.sign(s)
        tol = 1e-8 * np.max(np.abs(s), initial=0.0)
        lower, upper = _at_bound(x, box.lo, box.hi, 1e-12 * np.max(box.hi - box.lo))
        active = np.abs(s) > tol
        ok = ((s > tol) & upper) | ((s < -tol) & lower)
        agree = float(ok.sum() / active.sum()) if active.any() else 1.0
        rep.switching = {"tie_tol": float(tol), "agreement": agree, "bang_bang_verified": bool(active.any() and agree == 1.0)}
    rep.n_forward = box.problem.n_forward - box.start_forward
    log.info("%s finished after %d iterations (%s): J=%.10g R=%.3e", rep.method, rep.n_iter, reason,
             rep.J[-1], rep.residual[-1])
    return rep


def _eval(box, x, it, gradient=True):
    try:
        return box.evaluate(x, gradient)
    except NumericalError as exc:
        raise OptimizationError(str(exc), it) from exc


def _setup(problem, v0, parametrization, x0):
    template = v0 if v0 is not None else problem.controls()
    if not template.has_bounds:
        raise ValueError("optimisation needs bounded controls")
    box = BoxProblem(problem, template, parametrization)
    if x0 is None:
        x0 = template.flat() if parametrization is None else 0.5 * (box.lo + box.hi)
    x0 = np.asarray(x0, dtype=float)
    if np.any(x0 < box.lo) or np.any(x0 > box.hi):
        raise ValueError("initial control is not admissible")
    return box, x0


def projected_gradient_solve(problem, v0: ControlPair | None = None, *, tol_rel=1e-6, tol_abs=0.0,
                             max_iter=200, sigma0=1.0, armijo_c=1e-4, max_backtrack=60,
                             parametrization=None, x0=None) -> OptimizationReport:
    """Projected gradient with Armijo backtracking along the projection arc.

    Each iteration tries ``sigma0, sigma0/2, ...`` until
    ``J(x+) <= J(x) + c <grad, x+ - x>``. Stops when
    ``R <= max(tol_rel R(v0), tol_abs)`` or after ``max_iter`` iterations.
    """
    box, x = _setup(problem, v0, parametrization, x0)
    J, g = _eval(box, x, 0)
    R = box.residual(x, g)
    tol = max(tol_rel * R, tol_abs)
    rep = OptimizationReport("projected_gradient", None, x, tol=tol)
    _record(rep, box, x, J, R, 0.0)
    reason = "max_iter"
    for it in range(1, max_iter + 1):
        if R <= tol:
            reason = "residual"
            break
        sigma = sigma0
        for _ in range(max_backtrack):
            xn = np.clip(x - sigma * g, box.lo, box.hi)
            dec = float(np.sum(box.m * g * (xn - x)))
            if dec == 0.0:
                break
            Jn, _ = _eval(box, xn, it, gradient=False)
            if Jn <= J + armijo_c * dec:
                break
            sigma *= 0.5
        else:
            reason = "line_search"
            break
        if dec == 0.0:
            reason = "stagnation"
            break
        x = xn
        J, g = _eval(box, x, it)
        R = box.residual(x, g)
        _record(rep, box, x, J, R, sigma)
    else:
        if R <= tol:
            reason = "residual"
    return _finish(rep, box, x, g, reason)


def conditional_gradient_solve(problem, v0: ControlPair | None = None, *, tol_rel=1e-6, tol_abs=0.0,
                               max_iter=200, armijo_c=1e-4, max_backtrack=60,
                               parametrization=None, x0=None) -> OptimizationReport:
    """Conditional gradient (Frank-Wolfe) over the box.

    The linearised subproblem is solved by the bang-bang vertex of the
    current switching functions; its duality gap ``<grad, x - vertex>``
    equals the optimality residual and is recorded every iteration.
    """
    box, x = _setup(problem, v0, parametrization, x0)
    J, g = _eval(box, x, 0)
    R = box.residual(x, g)
    tol = max(tol_rel * R, tol_abs)
    rep = OptimizationReport("conditional_gradient", None, x, tol=tol)
    _record(rep, box, x, J, R, 0.0)
    reason = "max_iter"
    for it in range(1, max_iter + 1):
        if R <= tol:
            reason = "residual"
            break
        vertex = _bang(SWITCH_SIGN * g, box.lo, box.hi, 0.0)
        d = vertex - x
        slope = float(np.sum(box.m * g * d))
        gamma = 1.0
        for _ in range(max_backtrack):
            Jn, _ = _eval(box, x + gamma * d, it, gradient=False)
            if Jn <= J + armijo_c * gamma * slope:
                break
            gamma *= 0.5
        else:
            reason = "line_search"
            break
        x = np.clip(x + gamma * d, box.lo, box.hi)
        J, g = _eval(box, x, it)
        R = box.residual(x, g)
        _record(rep, box, x, J, R, gamma)
    else:
        if R <= tol:
            reason = "residual"
    return _finish(rep, box, x, g, reason)


# -- restricted parametrisation ------------------------------------------------

class GroupParametrization:
    """Controls constant in time on groups of faces: parameter ``j`` sets the
    value of every face in ``groups[j]`` (a ``(part, mask)`` pair).

    Faces not covered by any group take the ``fill`` value of their part.
    """

    def __init__(self, domain, groups, lower, upper, fill=(None, None)):
        self.domain = domain
        self.groups = [(int(p), np.asarray(mask, dtype=bool)) for p, mask in groups]
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.fill = fill
        if len(self.groups) != self.lower.size or self.lower.shape != self.upper.shape:
            raise ValueError("one lower/upper bound per group is required")
        if np.any(self.lower > self.upper):
            raise ValueError("parameter bounds violate lower <= upper")

    @property
    def size(self) -> int:
        return len(self.groups)

    def controls(self, theta, template: ControlPair) -> ControlPair:
        v1 = template.v1.copy() if self.fill[0] is None else np.full_like(template.v1, self.fill[0])
        v2 = template.v2.copy() if self.fill[1] is None else np.full_like(template.v2, self.fill[1])
        for t, (part, mask) in zip(theta, self.groups):
            (v1 if part == 1 else v2)[:, mask] = t
        return template.with_values(v1, v2)

    def pullback(self, cov):
        """Chain rule: maps a covector on the flat controls to parameters."""
        d = self.domain
        n1, n2 = len(d.gamma1), len(d.gamma2)
        nt = cov.size // (n1 + n2)
        c1 = cov[: nt * n1].reshape(nt, n1)
        c2 = cov[nt * n1:].reshape(nt, n2)
        return np.array([np.sum((c1 if part == 1 else c2)[:, mask]) for part, mask in self.groups])

    @classmethod
    def inlet_outlet_walls(cls, domain, bounds):
        """Three parameters: ``v1`` on the left wall, ``v1`` on the right wall
        and ``v2`` on all of Gamma2. ``bounds = (a1, b1, a2, b2)`` scalars."""
        side1 = domain.faces.side[domain.gamma1]
        a1, b1, a2, b2 = bounds
        groups = [(1, side1 == "left"), (1, side1 == "right"), (2, np.ones(len(domain.gamma2), bool))]
        return cls(domain, groups, [a1, a1, a2], [b1, b1, b2])
