"""Forward Boussinesq solver with total-pressure control on Gamma1 and heat-flux
control on Gamma2, plus the boundary cost functional.

One step (first-order IMEX with a pressure projection):

1. predictor: ``(M/dt + nu K) z* = M z/dt - B(z, z) - beta F w``
2. projection: ``z' = z* - dt M^-1 (L1 v1 - D^T W P)`` with ``D z' = 0``,
   i.e. a Poisson problem for the total pressure ``P`` with ``P = v1`` on
   Gamma1 and homogeneous Neumann data on Gamma2;
3. temperature: ``(Mc/dt + k A2) w' = Mc w/dt - C(z) w - L2 v2``.

``L1 v1`` and ``L2 v2`` are the boundary lifts of the controls. The lift of
``v1`` enters with a minus sign because it is the boundary part of the
pressure gradient; ``-k dw/dn = v2`` likewise removes heat through Gamma2.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .forms import DiscreteForms, PhysicalParams
from .grid import (
    GAMMA1,
    GAMMA2,
    BoundaryFunction,
    Domain,
    GridError,
    ScalarField,
    VelocityField,
    project_divergence_free,
    write_boundary_csv,
    write_field_csv,
)

log = logging.getLogger(__name__)

DIV_TOL = 1e-10


class NumericalError(RuntimeError):
    """A solve failed or produced non-finite values."""


class CFLError(NumericalError):
    def __init__(self, dt, limit, step=None):
        self.dt = dt
        self.limit = limit
        where = "" if step is None else f" at step {step}"
        super().__init__(f"CFL violation{where}: dt={dt:.4g} exceeds {limit:.4g}; try dt <= {limit:.4g}")


@dataclass(frozen=True)
class TimeGrid:
    T: float
    nt: int

    def __post_init__(self):
        if not self.T > 0 or int(self.nt) != self.nt or self.nt < 1:
            raise ValueError("T > 0 and an integer nt >= 1 are required")

    @property
    def dt(self) -> float:
        return self.T / self.nt

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.nt + 1)

    @property
    def trapezoid(self) -> np.ndarray:
        w = np.full(self.nt + 1, self.dt)
        w[[0, -1]] *= 0.5
        return w


def cfl_limit(d: Domain, params: PhysicalParams, zmax: float) -> float:
    h = d.h
    lims = [h * h / (4 * params.nu), h * h / (4 * params.k)]
    if zmax > 0:
        lims.append(h / zmax)
    return 0.5 * min(lims)


def _as_levels(x, nlev, nf, name):
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        a = np.full((nlev, nf), float(a))
    elif a.ndim == 1:
        if a.shape != (nf,):
            raise GridError(f"{name}: expected {nf} face values, got {a.shape}")
        a = np.tile(a, (nlev, 1))
    if a.shape != (nlev, nf):
        raise GridError(f"{name}: expected shape {(nlev, nf)}, got {a.shape}")
    return a.copy()


@dataclass(eq=False)
class ControlPair:
    """Piecewise-constant controls: ``v1[m]``, ``v2[m]`` act on ``(t_m, t_{m+1})``.

    Arrays have shape ``(nt, n_faces_of_part)``. Bounds may be ``None`` for
    plain simulation.
    """

    v1: np.ndarray
    v2: np.ndarray
    alpha1: np.ndarray | None = None
    beta1: np.ndarray | None = None
    alpha2: np.ndarray | None = None
    beta2: np.ndarray | None = None

    def __post_init__(self):
        self.v1 = np.asarray(self.v1, dtype=float)
        self.v2 = np.asarray(self.v2, dtype=float)
        if self.v1.ndim != 2 or self.v2.ndim != 2 or self.v1.shape[0] != self.v2.shape[0]:
            raise GridError("v1 and v2 must be (nt, faces) arrays with the same nt")
        for name, ref in (("alpha1", self.v1), ("beta1", self.v1), ("alpha2", self.v2), ("beta2", self.v2)):
            val = getattr(self, name)
            if val is not None:
                setattr(self, name, _as_levels(val, *ref.shape, name))
        if self.has_bounds:
            for i, (a, b) in enumerate(((self.alpha1, self.beta1), (self.alpha2, self.beta2)), start=1):
                if np.any(a <= 0):
                    raise ValueError(f"bounds violate (1.{i + 2}): alpha{i} must be > 0")
                if np.any(a > b):
                    raise ValueError(f"bounds violate (1.{i + 2}): alpha{i} > beta{i} somewhere")

    @classmethod
    def constant(cls, domain: Domain, time: TimeGrid, v1=0.0, v2=0.0, bounds=None) -> "ControlPair":
        n1, n2 = len(domain.gamma1), len(domain.gamma2)
        kw = {}
        if bounds is not None:
            a1, b1, a2, b2 = bounds
            kw = dict(alpha1=_as_levels(a1, time.nt, n1, "alpha1"), beta1=_as_levels(b1, time.nt, n1, "beta1"),
                      alpha2=_as_levels(a2, time.nt, n2, "alpha2"), beta2=_as_levels(b2, time.nt, n2, "beta2"))
        return cls(_as_levels(v1, time.nt, n1, "v1"), _as_levels(v2, time.nt, n2, "v2"), **kw)

    @property
    def has_bounds(self) -> bool:
        return all(getattr(self, n) is not None for n in ("alpha1", "beta1", "alpha2", "beta2"))

    @property
    def nt(self) -> int:
        return self.v1.shape[0]

    def is_admissible(self) -> bool:
        if not self.has_bounds:
            return True
        return bool(np.all((self.alpha1 <= self.v1) & (self.v1 <= self.beta1))
                    and np.all((self.alpha2 <= self.v2) & (self.v2 <= self.beta2)))

    def with_values(self, v1, v2) -> "ControlPair":
        return ControlPair(np.array(v1, dtype=float), np.array(v2, dtype=float),
                           self.alpha1, self.beta1, self.alpha2, self.beta2)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.v1.ravel(), self.v2.ravel()])

    def unflat(self, x) -> "ControlPair":
        n = self.v1.size
        return self.with_values(np.reshape(x[:n], self.v1.shape), np.reshape(x[n:], self.v2.shape))

    def boundary_functions(self, domain: Domain, time: TimeGrid):
        """``(v1, v2)`` as :class:`BoundaryFunction` objects stamped with the
        right end of each control interval."""
        t = time.times[1:]
        return (BoundaryFunction(domain, GAMMA1, self.v1, times=t), BoundaryFunction(domain, GAMMA2, self.v2, times=t))


@dataclass(eq=False)
class CostWeights:
    """Weights ``N1``, ``N2`` and the densities ``r1`` on Gamma1 x [0, T],
    ``r2`` on Gamma2 x [0, T], given at every time level (``(nt + 1, faces)``).

    ``objective_form`` selects how the heat term is measured: ``"trace"``
    integrates ``r2 w`` over Gamma2, ``"flux"`` integrates ``r2 dw/dn`` with
    ``dw/dn = -v2/k`` taken from the boundary condition.
    """

    N1: float
    N2: float
    r1: np.ndarray
    r2: np.ndarray
    objective_form: str = "trace"

    def __post_init__(self):
        if not (self.N1 > 0 and self.N2 > 0):
            raise ValueError("N1, N2 > 0 required")
        if self.objective_form not in ("trace", "flux"):
            raise ValueError("objective_form must be 'trace' or 'flux'")
        self.r1 = np.asarray(self.r1, dtype=float)
        self.r2 = np.asarray(self.r2, dtype=float)
        if self.r1.ndim != 2 or self.r2.ndim != 2 or self.r1.shape[0] != self.r2.shape[0]:
            raise GridError("r1 and r2 must be (nt + 1, faces) arrays")

    @classmethod
    def constant(cls, domain: Domain, time: TimeGrid, N1=1.0, N2=1.0, r1=0.0, r2=0.0, objective_form="trace"):
        return cls(N1, N2, _as_levels(r1, time.nt + 1, len(domain.gamma1), "r1"),
                   _as_levels(r2, time.nt + 1, len(domain.gamma2), "r2"), objective_form)


class Stepper:
    """Factorised operators for one ``(forms, dt)`` pair.

    Velocities are full vectors; only entries in ``domain.free_dofs`` are
    ever nonzero.
    """

    def __init__(self, forms: DiscreteForms, dt: float, check_cfl: bool = True):
        self.forms = forms
        self.domain = d = forms.domain
        self.params = p = forms.params
        self.dt = float(dt)
        self.check_cfl = check_cfl
        self.fz = fz = d.free_dofs
        self.minv = 1.0 / forms.Mu[fz]
        self.Df = d.ops.D[:, fz].tocsr()
        self.L1f = forms.L1[fz, :].tocsr()
        self.Fbeta = (p.beta * forms.F).tocsr()
        try:
            Sz = (sp.diags(forms.Mu / dt) + p.nu * forms.K)[fz][:, fz].tocsc()
            self._Sz = spla.splu(Sz)
            Lp = (self.Df @ sp.diags(self.minv) @ self.Df.T).tocsc()
            self._pin = len(d.gamma1) == 0
            if self._pin:
                Lp = Lp.tolil()
                Lp[0, :] = 0.0
                Lp[:, 0] = 0.0
                Lp[0, 0] = 1.0
                Lp = Lp.tocsc()
            self._Lp = spla.splu(Lp)
            self._Sw = spla.splu((sp.diags(forms.Mc / dt) + p.k * forms.A2).tocsc())
        except RuntimeError as exc:
            raise NumericalError(f"factorisation failed: {exc}") from exc

    # -- projection ---------------------------------------------------------
    def _project(self, y):
        r = self.Df @ y
        if self._pin:
            r[0] = 0.0
        phi = self._Lp.solve(r)
        return y - self.minv * (self.Df.T @ phi), phi

    def _project_T(self, ly):
        t = self.minv * ly
        r = self.Df @ t
        if self._pin:
            r[0] = 0.0
        phi = self._Lp.solve(r, trans="T")
        return ly - self.Df.T @ phi

    # -- forward --------------------------------------------------------------
    def step(self, z, w, v1, v2, step_index=None):
        """Advance ``(z, w)`` by one step with controls ``v1`` (Gamma1 faces)
        and ``v2`` (Gamma2 faces). Returns ``(z', w', P')``."""
        f, dt, fz = self.forms, self.dt, self.fz
        if self.check_cfl:
            lim = cfl_limit(self.domain, self.params, float(np.max(np.abs(z), initial=0.0)))
            if dt > lim * (1 + 1e-12):
                raise CFLError(dt, lim, step_index)
        rhs = f.Mu * z / dt - f.Bvec(z, z) - self.Fbeta @ w
        y = self._Sz.solve(rhs[fz]) - dt * self.minv * (self.L1f @ v1)
        zf, phi = self._project(y)
        z1 = np.zeros_like(z)
        z1[fz] = zf
        P = -phi / (dt * self.domain.hx * self.domain.hy)
        w1 = self._Sw.solve(f.Mc * w / dt - f.Cmat(z) @ w - f.L2 @ v2)
        if not (np.all(np.isfinite(z1)) and np.all(np.isfinite(w1))):
            raise NumericalError(f"non-finite state at step {step_index}")
        return z1, w1, P

    # -- linearisation about (z, w) ------------------------------------------
    def tangent(self, z, w, g, eta, dv1, dv2):
        f, dt, fz = self.forms, self.dt, self.fz
        a = f.Mu * g / dt - f.JB(z) @ g - self.Fbeta @ eta
        y = self._Sz.solve(a[fz]) - dt * self.minv * (self.L1f @ dv1)
        g1 = np.zeros_like(g)
        g1[fz] = self._project(y)[0]
        eta1 = self._Sw.solve(f.Mc * eta / dt - f.Cmat(z) @ eta - f.Cz(w) @ g - f.L2 @ dv2)
        return g1, eta1

    def adjoint(self, z, w, lg1, leta1):
        """Transpose of :meth:`tangent`: maps covectors on ``(g', eta')`` to
        covectors on ``(g, eta, dv1, dv2)``."""
        f, dt, fz = self.forms, self.dt, self.fz
        lb = self._Sw.solve(leta1, trans="T")
        leta = f.Mc * lb / dt - f.Cmat(z).T @ lb
        lg = -(f.Cz(w).T @ lb)
        ldv2 = -(f.L2.T @ lb)
        ly = self._project_T(lg1[fz])
        ldv1 = -dt * (self.L1f.T @ (self.minv * ly))
        la = np.zeros_like(lg)
        la[fz] = self._Sz.solve(ly, trans="T")
        lg += f.Mu * la / dt - f.JB(z).T @ la
        leta -= self.Fbeta.T @ la
        lg[np.setdiff1d(np.arange(len(lg)), fz)] = 0.0
        return lg, leta, ldv1, ldv2


def step_state(z: VelocityField, w: ScalarField, v1, v2, params: PhysicalParams, dt: float,
               forms: DiscreteForms | None = None, check_cfl=True):
    """One forward step on field objects; returns ``(z', w', P')`` fields."""
    d = z.domain
    forms = forms or DiscreteForms(d, params)
    st = Stepper(forms, dt, check_cfl)
    v1 = v1.values if isinstance(v1, BoundaryFunction) else np.broadcast_to(np.asarray(v1, float), (len(d.gamma1),))
    v2 = v2.values if isinstance(v2, BoundaryFunction) else np.broadcast_to(np.asarray(v2, float), (len(d.gamma2),))
    z1, w1, P = st.step(z.vector(), w.vector(), v1, v2)
    return VelocityField.from_vector(d, z1), ScalarField.from_vector(d, w1), ScalarField.from_vector(d, P)


@dataclass(eq=False)
class StateTrajectory:
    """Stored forward solution. Arrays are indexed by time level ``0..nt``.

    ``P[0]`` is zero (total pressure is produced by the projection and is
    defined from the first step on).
    """

    stepper: Stepper
    time: TimeGrid
    controls: ControlPair
    z: np.ndarray
    w: np.ndarray
    P: np.ndarray
    kinetic: np.ndarray = field(default_factory=lambda: np.zeros(0))
    thermal: np.ndarray = field(default_factory=lambda: np.zeros(0))
    cfl: np.ndarray = field(default_factory=lambda: np.zeros(0))
    max_div: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def domain(self) -> Domain:
        return self.stepper.domain

    @property
    def params(self) -> PhysicalParams:
        return self.stepper.params

    def velocity(self, n) -> VelocityField:
        return VelocityField.from_vector(self.domain, self.z[n])

    def temperature(self, n) -> ScalarField:
        return ScalarField.from_vector(self.domain, self.w[n])

    def pressure(self, n) -> ScalarField:
        return ScalarField.from_vector(self.domain, self.P[n])

    def static_pressure(self, n) -> ScalarField:
        """``pi = P - |z|^2 / 2`` with cell-averaged kinetic energy density."""
        d = self.domain
        z = self.velocity(n)
        ke = 0.25 * ((z.u[:-1] ** 2 + z.u[1:] ** 2) + (z.v[:, :-1] ** 2 + z.v[:, 1:] ** 2))
        return ScalarField(d, self.pressure(n).values - ke)

    def sup_norms(self):
        """Sup norms of velocity and temperature over the run (a proxy
        diagnostic for the regularity of the optimal state)."""
        return float(np.max(np.abs(self.z))), float(np.max(np.abs(self.w)))


def _as_vec(x, kind, d):
    if isinstance(x, (VelocityField, ScalarField)):
        return x.vector()
    x = np.asarray(x, dtype=float)
    n = d.n_vel if kind == "vel" else d.n_cells
    return x.ravel() if x.size == n else np.broadcast_to(x, (n,)).copy()


def solve_forward(z0, w0, controls: ControlPair, params: PhysicalParams | None = None,
                  time: TimeGrid | None = None, *, domain: Domain | None = None,
                  stepper: Stepper | None = None, check_cfl=True, enforce_bounds=True) -> StateTrajectory:
    """Integrate from ``(z0, w0)`` over the control horizon.

    Either pass ``stepper`` (reused factorisations) or ``params``, ``time``
    and a domain (taken from ``z0`` when it is a field).
    """
    if stepper is None:
        if domain is None:
            if not isinstance(z0, VelocityField):
                raise GridError("domain is required when z0 is not a VelocityField")
            domain = z0.domain
        stepper = Stepper(DiscreteForms(domain, params or PhysicalParams()), time.dt, check_cfl)
    d = stepper.domain
    if time is None:
        time = TimeGrid(stepper.dt * controls.nt, controls.nt)
    if not np.isclose(time.dt, stepper.dt, rtol=1e-12, atol=0.0) or controls.nt != time.nt:
        raise GridError("controls, time grid and stepper disagree on the step")
    if controls.v1.shape[1] != len(d.gamma1) or controls.v2.shape[1] != len(d.gamma2):
        raise GridError("controls do not match the boundary partition")
    if enforce_bounds and controls.has_bounds and not controls.is_admissible():
        raise ValueError("controls are not admissible (outside [alpha, beta])")
    z = _as_vec(z0, "vel", d)
    w = _as_vec(w0, "cell", d)
    if np.max(np.abs(d.ops.D @ z), initial=0.0) > DIV_TOL or not VelocityField.from_vector(d, z).is_admissible():
        z = project_divergence_free(VelocityField.from_vector(d, z)).vector()
    nt = time.nt
    Z = np.zeros((nt + 1, d.n_vel))
    W = np.zeros((nt + 1, d.n_cells))
    P = np.zeros((nt + 1, d.n_cells))
    Z[0], W[0] = z, w
    cfl = np.zeros(nt)
    for m in range(nt):
        zmax = float(np.max(np.abs(Z[m]), initial=0.0))
        cfl[m] = stepper.dt / cfl_limit(d, stepper.params, zmax)
        Z[m + 1], W[m + 1], P[m + 1] = stepper.step(Z[m], W[m], controls.v1[m], controls.v2[m], step_index=m)
    f = stepper.forms
    kinetic = 0.5 * np.einsum("ij,j,ij->i", Z, f.Mu, Z)
    thermal = 0.5 * np.einsum("ij,j,ij->i", W, f.Mc, W)
    max_div = np.max(np.abs(Z @ d.ops.D.T), axis=1)
    return StateTrajectory(stepper, time, controls, Z, W, P, kinetic, thermal, cfl, max_div)


def evaluate_cost(traj: StateTrajectory, controls: ControlPair, weights: CostWeights) -> float:
    """Boundary cost: ``N1 int int r1 z.n + N2 int int r2 (w or dw/dn)``.

    Trapezoidal in time over the stored levels, midpoint on faces. In flux
    form the heat term uses ``dw/dn = -v2/k`` on each control interval with
    ``r2`` taken at the interval's right end.
    """
    d = traj.domain
    if weights.r1.shape != (traj.time.nt + 1, len(d.gamma1)) or weights.r2.shape != (traj.time.nt + 1, len(d.gamma2)):
        raise GridError("cost weights do not match the trajectory grids")
    if controls.v1.shape != (traj.time.nt, len(d.gamma1)):
        raise GridError("controls do not match the trajectory grids")
    f = traj.stepper.forms
    tau = traj.time.trapezoid
    J1 = weights.N1 * np.sum(tau * np.einsum("mf,mf->m", weights.r1, traj.z @ f.L1))
    if weights.objective_form == "trace":
        J2 = weights.N2 * np.sum(tau * np.einsum("mf,mf->m", weights.r2, traj.w @ f.L2))
    else:
        lengths = d.faces.length[d.gamma2]
        J2 = weights.N2 * traj.time.dt * np.sum(weights.r2[1:] * (-controls.v2 / traj.params.k) * lengths)
    return float(J1 + J2)


def write_checkpoint(traj: StateTrajectory, out_dir, params_record: dict | None = None) -> Path:
    """Per-step CSV field dumps plus a ``manifest.json`` sidecar."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for n in range(traj.time.nt + 1):
        z = traj.velocity(n)
        for comp in ("u", "v"):
            files.append(write_field_csv(out / f"z{comp}_{n:05d}.csv", z, comp).name)
        files.append(write_field_csv(out / f"w_{n:05d}.csv", traj.temperature(n)).name)
        files.append(write_field_csv(out / f"P_{n:05d}.csv", traj.pressure(n)).name)
    b1, b2 = traj.controls.boundary_functions(traj.domain, traj.time)
    files.append(write_boundary_csv(out / "v1.csv", b1).name)
    files.append(write_boundary_csv(out / "v2.csv", b2).name)
    p = traj.params
    manifest = {
        "steps": traj.time.nt,
        "dt": traj.time.dt,
        "T": traj.time.T,
        "grid": {"Lx": traj.domain.Lx, "Ly": traj.domain.Ly, "nx": traj.domain.nx, "ny": traj.domain.ny},
        "params": params_record or {"nu": p.nu, "k": p.k, "beta": p.beta,
                                    "xi": np.asarray(p.xi, dtype=float).tolist()},
        "kinetic_energy": traj.kinetic.tolist(),
        "thermal_energy": traj.thermal.tolist(),
        "cfl": traj.cfl.tolist(),
        "max_div": traj.max_div.tolist(),
        "files": files,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path
