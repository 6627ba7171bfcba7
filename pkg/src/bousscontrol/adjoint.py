"""Tangent and adjoint solvers, gradient assembly and verification.

The tangent recursion is the exact derivative of :meth:`Stepper.step`, and the
adjoint recursion is its exact transpose, so the gradient is the derivative
of the discrete cost (up to roundoff). The adjoint fields ``p`` and ``q`` at
level ``n`` represent the sensitivity of the cost accrued after ``t_n`` to
the state at ``t_n``; hence ``p(T) = q(T) = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .state import ControlPair, CostWeights, StateTrajectory

# Switching functions are minus the cost gradient density divided by the
# weight of the matching cost term: the minimiser takes the upper bound where
# the switching function is positive.
SWITCH_SIGN = -1.0


@dataclass(eq=False)
class TangentTrajectory:
    g: np.ndarray
    eta: np.ndarray


@dataclass(eq=False)
class AdjointTrajectory:
    """Adjoint state and derived boundary quantities.

    ``p``, ``q`` are fields at levels ``0..nt``; ``lam_z``, ``lam_w`` are the
    raw covectors ``dJ/dz_n``, ``dJ/dw_n``. ``cov1``, ``cov2`` hold
    ``dJ/dv[m]`` from the state pathway for each control interval, and
    ``s1``, ``s2`` are the switching functions on the same intervals.
    """

    base: StateTrajectory
    weights: CostWeights
    p: np.ndarray
    q: np.ndarray
    lam_z: np.ndarray
    lam_w: np.ndarray
    cov1: np.ndarray
    cov2: np.ndarray
    s1: np.ndarray = field(default_factory=lambda: np.zeros(0))
    s2: np.ndarray = field(default_factory=lambda: np.zeros(0))
    residual: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def max_div_p(self) -> float:
        D = self.base.domain.ops.D
        return float(np.max(np.abs(self.p @ D.T)))


def _check_dv(base, dv):
    v1, v2 = (dv.v1, dv.v2) if isinstance(dv, ControlPair) else dv
    v1, v2 = np.asarray(v1, dtype=float), np.asarray(v2, dtype=float)
    if v1.shape != base.controls.v1.shape or v2.shape != base.controls.v2.shape:
        raise ValueError("perturbation does not match the base trajectory grids")
    return v1, v2


def solve_tangent(base: StateTrajectory, dv) -> TangentTrajectory:
    """Linearised response ``(g, eta)`` to a control perturbation ``dv``
    (a :class:`ControlPair` or a ``(dv1, dv2)`` tuple), with ``g(0) = eta(0) = 0``."""
    dv1, dv2 = _check_dv(base, dv)
    st = base.stepper
    nt = base.time.nt
    g = np.zeros_like(base.z)
    eta = np.zeros_like(base.w)
    for m in range(nt):
        g[m + 1], eta[m + 1] = st.tangent(base.z[m], base.w[m], g[m], eta[m], dv1[m], dv2[m])
    return TangentTrajectory(g, eta)


def _sources(base: StateTrajectory, weights: CostWeights):
    f = base.stepper.forms
    tau = base.time.trapezoid
    src_z = weights.N1 * tau[:, None] * (weights.r1 @ f.L1.T)
    if weights.objective_form == "trace":
        src_w = weights.N2 * tau[:, None] * (weights.r2 @ f.L2.T)
    else:
        src_w = np.zeros_like(base.w)
    return src_z, src_w


def solve_adjoint(base: StateTrajectory, weights: CostWeights) -> AdjointTrajectory:
    """Backward sweep through the transposed tangent steps.

    Sources are ``N1 H1 r1`` and ``N2 H2 r2`` weighted by the trapezoidal
    time quadrature of the cost, so the result is the gradient of the full
    cost.
    """
    nt = base.time.nt
    if base.z.shape[0] != nt + 1 or base.w.shape[0] != nt + 1:
        raise ValueError("base trajectory is missing time levels")
    if weights.r1.shape[0] != nt + 1:
        raise ValueError("cost weights do not match the trajectory")
    st = base.stepper
    src_z, src_w = _sources(base, weights)
    lam_z = np.zeros_like(base.z)
    lam_w = np.zeros_like(base.w)
    cov1 = np.zeros_like(base.controls.v1)
    cov2 = np.zeros_like(base.controls.v2)
    lam_z[nt], lam_w[nt] = src_z[nt], src_w[nt]
    for m in range(nt - 1, -1, -1):
        lz, lw, cov1[m], cov2[m] = st.adjoint(base.z[m], base.w[m], lam_z[m + 1], lam_w[m + 1])
        lam_z[m] = src_z[m] + lz
        lam_w[m] = src_w[m] + lw
    p, q = _adjoint_fields(base, lam_z - src_z, lam_w - src_w)
    adj = AdjointTrajectory(base, weights, p, q, lam_z, lam_w, cov1, cov2)
    g1, g2 = assemble_gradient(adj, weights)
    adj.s1 = SWITCH_SIGN * g1 / weights.N1
    adj.s2 = SWITCH_SIGN * g2 / weights.N2
    adj.residual = adjoint_residual(adj)
    return adj


def _adjoint_fields(base, mu_z, mu_w):
    # Riesz representatives: divergence-free for velocity, mass-scaled for temperature
    st = base.stepper
    fz = st.fz
    p = np.zeros_like(mu_z)
    for n in range(mu_z.shape[0]):
        p[n, fz] = st._project(st.minv * mu_z[n, fz])[0]
    q = mu_w / st.forms.Mc
    return p, q


def assemble_gradient(adj: AdjointTrajectory, weights: CostWeights, params=None):
    """Gradient densities ``(grad_v1, grad_v2)`` with respect to the control
    inner product ``sum_m dt sum_faces v u |face|``.

    In flux form the explicit term ``-N2 r2 / k`` is added to ``grad_v2``.
    """
    base = adj.base
    d = base.domain
    dt = base.time.dt
    len1 = d.faces.length[d.gamma1]
    len2 = d.faces.length[d.gamma2]
    g1 = adj.cov1 / (dt * len1)
    g2 = adj.cov2 / (dt * len2)
    if weights.objective_form == "flux":
        k = (params or base.params).k
        g2 = g2 - weights.N2 * weights.r2[1:] / k
    return g1, g2


def control_inner(base: StateTrajectory, a1, a2, b1, b2) -> float:
    """``<a, b>`` in the control space (face lengths times dt)."""
    d = base.domain
    dt = base.time.dt
    return float(dt * (np.sum(a1 * b1 * d.faces.length[d.gamma1]) + np.sum(a2 * b2 * d.faces.length[d.gamma2])))


def directional_derivative(base: StateTrajectory, dv, weights: CostWeights) -> float:
    """``N1 int <H1 r1, g> dt + N2 int <H2 r2, eta> dt`` from the tangent
    solution (plus the explicit control term in flux form)."""
    dv1, dv2 = _check_dv(base, dv)
    tan = solve_tangent(base, (dv1, dv2))
    src_z, src_w = _sources(base, weights)
    val = float(np.sum(src_z * tan.g) + np.sum(src_w * tan.eta))
    if weights.objective_form == "flux":
        d = base.domain
        val += float(base.time.dt * np.sum(weights.N2 * weights.r2[1:] * (-dv2 / base.params.k)
                                           * d.faces.length[d.gamma2]))
    return val


def duality_check(base: StateTrajectory, dv, weights: CostWeights, adjoint: AdjointTrajectory | None = None) -> float:
    """Relative gap between the tangent pairing and ``<grad, dv>``.

    Passing an ``adjoint`` computed from another base trajectory exposes a
    stale checkpoint as a large gap.
    """
    dv1, dv2 = _check_dv(base, dv)
    adj = adjoint if adjoint is not None else solve_adjoint(base, weights)
    primal = directional_derivative(base, (dv1, dv2), weights)
    g1, g2 = assemble_gradient(adj, weights, base.params)
    dual = control_inner(base, g1, g2, dv1, dv2)
    return abs(primal - dual) / max(1.0, abs(primal))


def adjoint_residual(adj: AdjointTrajectory) -> np.ndarray:
    """Relative residual of the continuous adjoint equations evaluated on the
    discrete adjoint fields, one value per interval (diagnostic only).

    Velocity part: ``-M p' + nu K p + JB(z)^T p + Cz(w)^T q - N1 H1 r1``,
    tested against divergence-free fields.
    """
    base = adj.base
    st = base.stepper
    f = st.forms
    dt = base.time.dt
    nt = base.time.nt
    w = adj.weights
    fz = st.fz
    out = np.zeros(nt)
    src = w.N1 * (w.r1 @ f.L1.T)
    for n in range(nt):
        p0, p1, q0 = adj.p[n], adj.p[n + 1], adj.q[n]
        terms = [f.Mu * (p0 - p1) / dt, st.params.nu * (f.K @ p0), f.JB(base.z[n]).T @ p0,
                 f.Cz(base.w[n]).T @ q0, -src[n]]
        proj = [st._project_T(t[fz]) for t in terms]
        scale = sum(np.linalg.norm(t) for t in proj)
        out[n] = np.linalg.norm(sum(proj)) / scale if scale > 0 else 0.0
    return out


@dataclass
class GradientCheckReport:
    epsilons: list
    adjoint_dd: float
    fd_dd: list
    rel_errors: list
    floor: list
    min_error: float
    orders: list
    decay_ok: bool
    passed: bool

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def table(self) -> str:
        lines = [f"adjoint directional derivative: {self.adjoint_dd:.12e}",
                 f"{'eps':>10} {'central FD':>20} {'rel error':>12} {'floor':>10}"]
        for e, fd, r, fl in zip(self.epsilons, self.fd_dd, self.rel_errors, self.floor):
            lines.append(f"{e:10.3e} {fd:20.12e} {r:12.3e} {fl:10.1e}")
        lines.append(f"min error {self.min_error:.3e}; observed orders {['%.2f' % o for o in self.orders]}")
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines)


DEFAULT_EPSILONS = tuple(1e-2 * 0.5 ** k for k in range(11))


def gradient_check(problem, controls: ControlPair, epsilons=DEFAULT_EPSILONS, direction=None, seed=0,
                   flip_sign=False, tol=1e-4) -> GradientCheckReport:
    """Compare ``<grad J, d>`` with central differences
    ``(J(v + eps d) - J(v - eps d)) / (2 eps)`` over ``epsilons``.

    PASS requires the smallest relative error to be ``<= tol`` and the error
    to fall at second order while it stays above the roundoff floor.
    """
    rng = np.random.default_rng(seed)
    if direction is None:
        span1 = (controls.beta1 - controls.alpha1) if controls.has_bounds else np.ones_like(controls.v1)
        span2 = (controls.beta2 - controls.alpha2) if controls.has_bounds else np.ones_like(controls.v2)
        direction = (span1 * rng.uniform(-1, 1, controls.v1.shape), span2 * rng.uniform(-1, 1, controls.v2.shape))
    d1, d2 = direction
    J0, g1, g2, _, base = problem.cost_and_gradient(controls)
    dd = control_inner(base, g1, g2, d1, d2)
    if flip_sign:
        dd = -dd
    fds, errs, floors = [], [], []
    eps_mach = np.finfo(float).eps
    for eps in epsilons:
        Jp = problem.cost(controls.with_values(controls.v1 + eps * d1, controls.v2 + eps * d2), enforce_bounds=False)
        Jm = problem.cost(controls.with_values(controls.v1 - eps * d1, controls.v2 - eps * d2), enforce_bounds=False)
        fd = (Jp - Jm) / (2 * eps)
        fds.append(fd)
        scale = max(abs(dd), 1e-300)
        errs.append(abs(fd - dd) / scale)
        floors.append(4 * eps_mach * max(abs(Jp), abs(Jm), abs(J0)) / (eps * scale))
    orders = []
    decay_ok = True
    for i in range(len(epsilons) - 1):
        if errs[i + 1] <= floors[i + 1] or errs[i] <= floors[i]:
            break
        order = np.log(errs[i] / errs[i + 1]) / np.log(epsilons[i] / epsilons[i + 1])
        orders.append(float(order))
        if order < 1.5:
            decay_ok = False
    if not orders:
        # the error never rose above roundoff: nothing to measure, accept only
        # if every sample sits at the floor
        decay_ok = all(e <= 10 * fl for e, fl in zip(errs, floors))
    min_err = float(min(errs))
    return GradientCheckReport(list(map(float, epsilons)), float(dd), [float(x) for x in fds],
                               [float(x) for x in errs], [float(x) for x in floors], min_err, orders,
                               decay_ok, bool(min_err <= tol and decay_ok))
