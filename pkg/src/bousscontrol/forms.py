"""Discrete bilinear/trilinear forms, boundary lifts and coercivity constants.

All forms are assembled from the stencil matrices in :mod:`bousscontrol.grid`:

* ``a1(u, v) = sum_nodes W (rot u)(rot v)``
* ``a2(w, phi) = sum_faces W grad(w) grad(phi)`` (homogeneous Dirichlet on
  Gamma1, natural on Gamma2)
* ``b(u, v, phi) = sum_nodes W rot(u) (v_x phi_y - v_y phi_x)`` which is the
  rotational form ``(rot u x v) . phi``; it vanishes identically for ``phi = v``.
* ``c(z, w, phi) = 1/2 sum_interior_faces F_f (phi_L w_R - phi_R w_L)`` with
  face flux ``F_f``, skew in ``(w, phi)`` by construction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import (
    GAMMA1,
    GAMMA2,
    BoundaryFunction,
    Domain,
    GridError,
    ScalarField,
    VelocityField,
    _check_same,
    _closure,
)


@dataclass(frozen=True)
class PhysicalParams:
    """Viscosity ``nu``, conductivity ``k``, expansion ``beta`` and the buoyancy
    direction ``xi`` (a 2-vector, or an array of shape ``(2, nx, ny)``)."""

    nu: float = 0.05
    k: float = 0.05
    beta: float = 1.0
    xi: tuple | np.ndarray = (0.0, -1.0)

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError("ν > 0 required")
        if not self.k > 0:
            raise ValueError("k > 0 required")
        if not self.beta >= 0:
            raise ValueError("β ≥ 0 required")
        xi = np.asarray(self.xi, dtype=float)
        if xi.shape[0] != 2 or not np.all(np.isfinite(xi)):
            raise ValueError("ξ must be a finite 2-vector or a (2, nx, ny) field")

    @property
    def xi_norm_inf(self) -> float:
        return float(np.max(np.abs(np.asarray(self.xi, dtype=float))))


class FormError(GridError):
    pass


@dataclass(frozen=True, eq=False)
class DiscreteForms:
    """Assembled operators for one domain and parameter set.

    Matrices act on full velocity vectors (see :meth:`VelocityField.vector`)
    and cell vectors. ``K`` represents ``a1``, ``A2`` represents ``a2``,
    ``F`` the buoyancy pairing ``(xi w, psi)`` (without ``beta``), ``L1`` maps
    Gamma1 face values to the covector of ``<H1 v1, .>`` and ``L2`` maps Gamma2
    face values to ``<H2 v2, .>``.
    """

    domain: Domain
    params: PhysicalParams = field(default_factory=PhysicalParams)

    @cached_property
    def K(self) -> sp.csr_matrix:
        ops = self.domain.ops
        C = ops.nodes["bc"].curl
        K = (C.T @ sp.diags(ops.w_node) @ C).tocsr()
        return ((K + K.T) * 0.5).tocsr()

    @cached_property
    def A2(self) -> sp.csr_matrix:
        G, wts = self.domain.ops.sgrad["bc"]
        A = (G.T @ sp.diags(wts) @ G).tocsr()
        return ((A + A.T) * 0.5).tocsr()

    @cached_property
    def Mu(self) -> np.ndarray:
        return self.domain.ops.w_vel

    @cached_property
    def Mc(self) -> np.ndarray:
        return self.domain.ops.w_cell

    @cached_property
    def H1_vel(self) -> sp.csr_matrix:
        """Gram matrix of the discrete H1 norm on velocities."""
        ops = self.domain.ops
        nd = ops.nodes["bc"]
        wc = sp.diags(ops.w_cell)
        wn = sp.diags(ops.w_node)
        H = (sp.diags(ops.w_vel) + ops.Dudx.T @ wc @ ops.Dudx + ops.Dvdy.T @ wc @ ops.Dvdy
             + nd.dudy.T @ wn @ nd.dudy + nd.dvdx.T @ wn @ nd.dvdx)
        return ((H + H.T) * 0.5).tocsr()

    @cached_property
    def H1_cell(self) -> sp.csr_matrix:
        return (sp.diags(self.Mc) + self.A2).tocsr()

    @cached_property
    def F(self) -> sp.csr_matrix:
        d = self.domain
        nx, ny = d.nx, d.ny
        xi = np.asarray(self.params.xi, dtype=float)
        if xi.ndim == 1:
            xi = np.broadcast_to(xi[:, None, None], (2, nx, ny))
        if xi.shape != (2, nx, ny):
            raise FormError(f"ξ field must have shape (2, {nx}, {ny})")
        w = d.ops.w_vel
        r, c, v = [], [], []
        for i in range(nx + 1):
            for j in range(ny):
                f = int(d.iu(i, j))
                for ci in (i - 1, i):
                    if 0 <= ci < nx:  # outside cells carry w = 0 on Gamma1
                        r.append(f)
                        c.append(int(d.ic(ci, j)))
                        v.append(0.5 * w[f] * xi[0, ci, j])
        for i in range(nx):
            for j in range(ny + 1):
                f = int(d.iv(i, j))
                for cj in (j - 1, j):
                    if 0 <= cj < ny:
                        r.append(f)
                        c.append(int(d.ic(i, cj)))
                        v.append(0.5 * w[f] * xi[1, i, cj])
        F = sp.csr_matrix((v, (r, c)), shape=(d.n_vel, d.n_cells))
        # wall normals on Gamma2 are pinned to zero
        mask = np.ones(d.n_vel)
        mask[d.faces.dof[d.gamma2]] = 0.0
        return (sp.diags(mask) @ F).tocsr()

    @cached_property
    def L1(self) -> sp.csr_matrix:
        d = self.domain
        ids = d.gamma1
        f = d.faces
        return sp.csr_matrix((f.sign[ids] * f.length[ids], (f.dof[ids], np.arange(len(ids)))),
                             shape=(d.n_vel, len(ids)))

    @cached_property
    def L2(self) -> sp.csr_matrix:
        d = self.domain
        ids = d.gamma2
        T = d.ops.trace[ids, :]
        return (T.T @ sp.diags(d.faces.length[ids])).tocsr()

    @cached_property
    def _faces(self):
        # interior faces for c: (flux dof, area, left cell, right cell)
        d = self.domain
        dofs, area, left, right = [], [], [], []
        for i in range(1, d.nx):
            for j in range(d.ny):
                dofs.append(int(d.iu(i, j)))
                area.append(d.hy)
                left.append(int(d.ic(i - 1, j)))
                right.append(int(d.ic(i, j)))
        for i in range(d.nx):
            for j in range(1, d.ny):
                dofs.append(int(d.iv(i, j)))
                area.append(d.hx)
                left.append(int(d.ic(i, j - 1)))
                right.append(int(d.ic(i, j)))
        return tuple(np.asarray(a) for a in (dofs, area, left, right))

    # -- trilinear pieces as vectors/matrices ---------------------------
    def Bvec(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Covector ``phi -> b(u, v, phi)``."""
        nd = self.domain.ops.nodes["bc"]
        W = self.domain.ops.w_node * (nd.curl @ u)
        return nd.Iv.T @ (W * (nd.Iu @ v)) - nd.Iu.T @ (W * (nd.Iv @ v))

    def JB(self, z: np.ndarray) -> sp.csr_matrix:
        """Jacobian of ``z -> Bvec(z, z)``: ``g -> Bvec(g, z) + Bvec(z, g)``."""
        nd = self.domain.ops.nodes["bc"]
        wn = self.domain.ops.w_node
        om = nd.curl @ z
        zx, zy = nd.Iu @ z, nd.Iv @ z
        first = (nd.Iv.T @ sp.diags(wn * zx) - nd.Iu.T @ sp.diags(wn * zy)) @ nd.curl
        second = nd.Iv.T @ sp.diags(wn * om) @ nd.Iu - nd.Iu.T @ sp.diags(wn * om) @ nd.Iv
        return (first + second).tocsr()

    def Cmat(self, z: np.ndarray) -> sp.csr_matrix:
        """Matrix of ``(w, phi) -> c(z, w, phi)``: ``c = phi @ Cmat(z) @ w``."""
        dofs, area, left, right = self._faces
        F = 0.5 * area * z[dofs]
        n = self.domain.n_cells
        return sp.csr_matrix((np.concatenate([F, -F]), (np.concatenate([left, right]), np.concatenate([right, left]))),
                             shape=(n, n))

    def Cz(self, w: np.ndarray) -> sp.csr_matrix:
        """Matrix of ``z -> Cmat(z) @ w`` (linear in the velocity)."""
        dofs, area, left, right = self._faces
        d = self.domain
        return sp.csr_matrix((np.concatenate([0.5 * area * w[right], -0.5 * area * w[left]]),
                              (np.concatenate([left, right]), np.concatenate([dofs, dofs]))),
                             shape=(d.n_cells, d.n_vel))

    # -- coordinate-format export ---------------------------------------
    def export_coo(self, name: str, path) -> None:
        """Write one assembled matrix (``K``, ``A2``, ``F``, ``L1``, ``L2``, ``D``)
        as ``row col value`` lines."""
        mats = {"K": self.K, "A2": self.A2, "F": self.F, "L1": self.L1, "L2": self.L2, "D": self.domain.ops.D}
        if name not in mats:
            raise FormError(f"unknown matrix {name!r}; choose from {sorted(mats)}")
        m = mats[name].tocoo()
        order = np.lexsort((m.col, m.row))
        with open(path, "w") as fh:
            fh.write(f"# {name} shape {m.shape[0]} {m.shape[1]}\n")
            for k in order:
                fh.write(f"{m.row[k]} {m.col[k]} {float(m.data[k])!r}\n")


def read_coo(path) -> sp.csr_matrix:
    with open(path) as fh:
        header = fh.readline().split()
        shape = (int(header[-2]), int(header[-1]))
        data = np.loadtxt(fh, ndmin=2)
    if data.size == 0:
        return sp.csr_matrix(shape)
    return sp.csr_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=shape)


# ---------------------------------------------------------------------------
# form evaluations on field objects
# ---------------------------------------------------------------------------

def _div_warn(z: VelocityField, name: str):
    div = z.domain.ops.D @ z.vector()
    if np.max(np.abs(div), initial=0.0) > 1e-8:
        warnings.warn(f"{name}: advecting field is not divergence-free (max |div| = {np.max(np.abs(div)):.2e})",
                      RuntimeWarning, stacklevel=3)


def form_a1(u: VelocityField, v: VelocityField, closure="bc") -> float:
    """``(rot u, rot v)`` with node vorticities and trapezoidal node weights."""
    _check_same(u, v)
    ops = u.domain.ops
    C = ops.nodes[_closure(closure)].curl
    return float(np.dot(ops.w_node * (C @ u.vector()), C @ v.vector()))


def form_a2(w: ScalarField, phi: ScalarField, closure="bc") -> float:
    """``sum_j (dw/dx_j, dphi/dx_j)`` with face-centred gradients."""
    _check_same(w, phi)
    G, wts = w.domain.ops.sgrad[_closure(closure)]
    return float(np.dot(wts * (G @ w.vector()), G @ phi.vector()))


def form_b(u: VelocityField, v: VelocityField, phi: VelocityField, closure="bc") -> float:
    """Rotational advection form ``((rot u) x v) . phi``.

    Pointwise skew in ``(v, phi)``, so ``b(u, v, v) = 0`` for any fields.
    """
    _check_same(u, v)
    _check_same(u, phi)
    _div_warn(u, "form_b")
    ops = u.domain.ops
    nd = ops.nodes[_closure(closure)]
    om = nd.curl @ u.vector()
    vx, vy = nd.Iu @ v.vector(), nd.Iv @ v.vector()
    px, py = nd.Iu @ phi.vector(), nd.Iv @ phi.vector()
    return float(np.sum(ops.w_node * om * (vx * py - vy * px)))


def form_c(z: VelocityField, w: ScalarField, phi: ScalarField) -> float:
    """Skew-symmetric central advection form ``c(z, w, phi)``."""
    if not (z.domain.same_as(w.domain) and z.domain.same_as(phi.domain)):
        raise GridError("fields live on different domains")
    _check_same(w, phi)
    _div_warn(z, "form_c")
    forms = DiscreteForms(z.domain)
    return float(phi.vector() @ (forms.Cmat(z.vector()) @ w.vector()))


class LinearFunctional:
    """A boundary lift viewed as a linear functional on test fields."""

    def __init__(self, domain: Domain, covector: np.ndarray, kind: type):
        self.domain = domain
        self.covector = covector
        self.kind = kind

    def __call__(self, psi) -> float:
        if not isinstance(psi, self.kind) or not psi.domain.same_as(self.domain):
            raise GridError(f"functional acts on {self.kind.__name__} of the same domain")
        return float(np.dot(self.covector, psi.vector()))


def lift_v1(v1: BoundaryFunction) -> LinearFunctional:
    """``psi -> sum_{Gamma1} v1 (psi . n) |face|``."""
    if v1.part != GAMMA1 or v1.values.ndim != 1:
        raise GridError("lift_v1 needs a single-level boundary function on Gamma1")
    return LinearFunctional(v1.domain, DiscreteForms(v1.domain).L1 @ v1.values, VelocityField)


def lift_v2(v2: BoundaryFunction) -> LinearFunctional:
    """``phi -> sum_{Gamma2} v2 trace(phi) |face|`` with the two-cell
    extrapolated trace ``1.5 phi_1 - 0.5 phi_2``."""
    if v2.part != GAMMA2 or v2.values.ndim != 1:
        raise GridError("lift_v2 needs a single-level boundary function on Gamma2")
    return LinearFunctional(v2.domain, DiscreteForms(v2.domain).L2 @ v2.values, ScalarField)


# ---------------------------------------------------------------------------
# coercivity and the smallness condition
# ---------------------------------------------------------------------------

def admissible_velocity_basis(d: Domain) -> np.ndarray:
    """Orthonormal basis (full-vector coordinates) of discretely
    divergence-free velocities with zero normal flow on Gamma2."""
    fz = d.free_dofs
    Df = d.ops.D[:, fz].toarray()
    Q, R = np.linalg.qr(Df.T, mode="complete")
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > 1e-10 * diag.max()))
    Z = np.zeros((d.n_vel, len(fz) - rank))
    Z[fz] = Q[:, rank:]
    return Z


DENSE_LIMIT = 32 * 32


def coercivity_constants(d: Domain, forms: DiscreteForms | None = None, method="auto"):
    """Smallest ratios ``a1(u,u)/|u|_1^2`` over admissible divergence-free
    velocities and ``a2(w,w)/|w|_1^2`` over temperatures vanishing on Gamma1.

    ``method`` is ``"dense"`` (default up to 32 x 32 cells), ``"iterative"``
    or ``"auto"``.
    """
    forms = forms or DiscreteForms(d)
    if method == "auto":
        method = "dense" if d.n_cells <= DENSE_LIMIT else "iterative"
    try:
        if method == "dense":
            Z = admissible_velocity_basis(d)
            Kr = Z.T @ (forms.K @ Z)
            Hr = Z.T @ (forms.H1_vel @ Z)
            c1 = sla.eigh(0.5 * (Kr + Kr.T), 0.5 * (Hr + Hr.T), eigvals_only=True, subset_by_index=[0, 0])[0]
            c1p = sla.eigh(forms.A2.toarray(), forms.H1_cell.toarray(), eigvals_only=True,
                           subset_by_index=[0, 0])[0]
        elif method == "iterative":
            c1 = _iterative_c1(d, forms)
            vals = spla.eigsh(forms.A2.tocsc(), k=1, M=forms.H1_cell.tocsc(), sigma=0.0, which="LM",
                              return_eigenvectors=False)
            c1p = float(vals[0])
        else:
            raise ValueError(f"unknown method {method!r}")
    except (np.linalg.LinAlgError, spla.ArpackError, spla.ArpackNoConvergence) as exc:
        raise FormError(f"coercivity eigensolve failed: {exc}") from exc
    return float(c1), float(c1p)


def _iterative_c1(d: Domain, forms: DiscreteForms) -> float:
    # largest mu of H x = mu K x on divergence-free fields via saddle-point solves
    fz = d.free_dofs
    K = forms.K[fz][:, fz]
    H = forms.H1_vel[fz][:, fz]
    Df = d.ops.D[:, fz]
    nc = d.n_cells
    S = sp.bmat([[K, Df.T], [Df, None]]).tocsc()
    if len(d.gamma1) == 0:
        S = S.tolil()
        S[-nc, :] = 0.0
        S[:, -nc] = 0.0
        S[-nc, -nc] = 1.0
        S = S.tocsc()
    lu = spla.splu(S)
    n = len(fz)

    def apply(y):
        rhs = np.concatenate([H @ y, np.zeros(nc)])
        return lu.solve(rhs)[:n]

    op = spla.LinearOperator((n, n), matvec=apply, dtype=float)
    mu = spla.eigs(op, k=1, which="LM", return_eigenvectors=False, tol=1e-12)
    return float(1.0 / np.real(mu[0]))


@dataclass(frozen=True)
class SmallnessReport:
    passes: bool
    lhs: float
    rhs: float
    margin: float


def check_smallness(params: PhysicalParams, c1: float, c1_prime: float) -> SmallnessReport:
    """Compare ``beta |xi| (beta |xi| + 1) / (nu c1)`` against ``k c1' / 2``."""
    bx = params.beta * params.xi_norm_inf
    lhs = bx * (bx + 1.0) / (params.nu * c1)
    rhs = params.k * c1_prime / 2.0
    return SmallnessReport(passes=bool(lhs <= rhs), lhs=lhs, rhs=rhs, margin=rhs - lhs)


# ---------------------------------------------------------------------------
# boundedness diagnostics
# ---------------------------------------------------------------------------

def random_admissible_velocity(d: Domain, rng: np.random.Generator, smooth=False) -> VelocityField:
    """Random divergence-free field with zero wall-normal flow.

    With ``smooth=True`` the field is a random combination of low Fourier
    modes before projection, so discrete norms converge under refinement.
    """
    from .grid import project_divergence_free

    if smooth:
        a = rng.standard_normal((2, 3, 3))
        def fu(x, y):
            return sum(a[0, m, n] * np.cos(m * np.pi * x / d.Lx) * np.sin((n + 1) * np.pi * y / d.Ly)
                       for m in range(3) for n in range(3))
        def fv(x, y):
            return sum(a[1, m, n] * np.sin((m + 1) * np.pi * x / d.Lx) * np.cos(n * np.pi * y / d.Ly)
                       for m in range(3) for n in range(3))
        z = d.sample_velocity(fu, fv)
    else:
        z = VelocityField.from_vector(d, rng.standard_normal(d.n_vel))
    return project_divergence_free(z)


def random_scalar(d: Domain, rng: np.random.Generator, smooth=False) -> ScalarField:
    if smooth:
        a = rng.standard_normal((3, 3))
        return d.sample_scalar(lambda x, y: sum(a[m, n] * np.sin((m + 1) * np.pi * x / d.Lx)
                                                * np.cos(n * np.pi * y / d.Ly)
                                                for m in range(3) for n in range(3)))
    return ScalarField(d, rng.standard_normal((d.nx, d.ny)))


def h1_norm(f, forms: DiscreteForms) -> float:
    x = f.vector()
    G = forms.H1_vel if isinstance(f, VelocityField) else forms.H1_cell
    return float(np.sqrt(x @ (G @ x)))


def trilinear_bounds(d: Domain, samples=20, seed=0):
    """Largest observed ``|b|/(|u|_1 |v|_1 |w|_1)`` and ``|c|/(|z|_1 |w|_1 |phi|_1)``
    over smooth random admissible fields (a proxy for the continuity constants)."""
    rng = np.random.default_rng(seed)
    forms = DiscreteForms(d)
    cb = cc = 0.0
    for _ in range(samples):
        u, v, w = (random_admissible_velocity(d, rng, smooth=True) for _ in range(3))
        cb = max(cb, abs(form_b(u, v, w)) / (h1_norm(u, forms) * h1_norm(v, forms) * h1_norm(w, forms)))
        z = random_admissible_velocity(d, rng, smooth=True)
        s, t = random_scalar(d, rng, smooth=True), random_scalar(d, rng, smooth=True)
        cc = max(cc, abs(form_c(z, s, t)) / (h1_norm(z, forms) * h1_norm(s, forms) * h1_norm(t, forms)))
    return cb, cc


@dataclass(frozen=True)
class IdentityCheck:
    name: str
    value: float
    tol: float
    passed: bool


def form_identity_battery(d: Domain, params: PhysicalParams | None = None, samples=200, seed=0, tol=1e-12):
    """Skew-symmetry and coercivity checks on seeded random admissible fields.

    Trilinear values are scaled by the product of the H1 norms of their
    arguments. Coercivity is checked as ``min a(u,u)/|u|_1^2 >= c`` up to a
    relative ``1e-10``. Returns a list of :class:`IdentityCheck`.
    """
    forms = DiscreteForms(d, params or PhysicalParams())
    c1, c1p = coercivity_constants(d, forms)
    rng = np.random.default_rng(seed)
    worst = dict(b_vv=0.0, c_ww=0.0, b_anti=0.0, c_anti=0.0)
    ratio1 = ratio2 = np.inf
    for i in range(samples):
        smooth = bool(i % 2)
        u, v, w = (random_admissible_velocity(d, rng, smooth) for _ in range(3))
        nu_, nv, nw = (h1_norm(f, forms) for f in (u, v, w))
        worst["b_vv"] = max(worst["b_vv"], abs(form_b(u, v, v)) / (nu_ * nv * nv))
        worst["b_anti"] = max(worst["b_anti"], abs(form_b(u, v, w) + form_b(u, w, v)) / (nu_ * nv * nw))
        s, t = random_scalar(d, rng, smooth), random_scalar(d, rng, smooth)
        ns, nt_ = h1_norm(s, forms), h1_norm(t, forms)
        worst["c_ww"] = max(worst["c_ww"], abs(form_c(u, s, s)) / (nu_ * ns * ns))
        worst["c_anti"] = max(worst["c_anti"], abs(form_c(u, s, t) + form_c(u, t, s)) / (nu_ * ns * nt_))
        ratio1 = min(ratio1, form_a1(u, u) / nu_ ** 2)
        ratio2 = min(ratio2, form_a2(s, s) / ns ** 2)
    out = [IdentityCheck("b(u,v,v) = 0", worst["b_vv"], tol, worst["b_vv"] <= tol),
           IdentityCheck("c(z,w,w) = 0", worst["c_ww"], tol, worst["c_ww"] <= tol),
           IdentityCheck("b(u,v,w) + b(u,w,v) = 0", worst["b_anti"], tol, worst["b_anti"] <= tol),
           IdentityCheck("c(z,w,phi) + c(z,phi,w) = 0", worst["c_anti"], tol, worst["c_anti"] <= tol),
           IdentityCheck("c1 > 0", c1, 0.0, c1 > 0),
           IdentityCheck("c1' > 0", c1p, 0.0, c1p > 0),
           IdentityCheck("min a1(u,u)/|u|_1^2 >= c1", ratio1 - c1, 1e-10 * c1, ratio1 >= c1 * (1 - 1e-10)),
           IdentityCheck("min a2(w,w)/|w|_1^2 >= c1'", ratio2 - c1p, 1e-10 * c1p, ratio2 >= c1p * (1 - 1e-10))]
    return out
