"""Staggered (MAC) grid geometry, field containers and discrete operators.

Layout on a rectangle [0, Lx] x [0, Ly] split into nx x ny cells:

* ``u`` lives on vertical faces, array shape ``(nx + 1, ny)``;
* ``v`` lives on horizontal faces, array shape ``(nx, ny + 1)``;
* scalars (temperature, total pressure) live at cell centres, ``(nx, ny)``;
* vorticity lives at grid nodes, ``(nx + 1, ny + 1)``.

The boundary is a list of faces ordered left (bottom to top), right,
bottom (left to right), top. Every face carries a label, 1 for the
pressure-controlled part and 2 for the wall part, and an outward unit normal.

Tangential velocity is never stored: on every boundary face it is zero
(``z_xi = 0`` on part 1, ``z = 0`` on part 2). Operators that need the wall
value of a tangential component take a ``closure`` argument: ``"bc"`` uses the
zero wall value, ``"extrapolate"`` extrapolates linearly from the two nearest
interior values (useful to check stencils on analytic, non-admissible fields).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import scipy.sparse as sp

GAMMA1 = 1
GAMMA2 = 2
_PART_NAMES = {GAMMA1: "Gamma1", GAMMA2: "Gamma2", "Gamma1": GAMMA1, "Gamma2": GAMMA2}
CLOSURES = ("bc", "extrapolate")


class GridError(ValueError):
    """Raised for invalid geometry or mismatched field layouts."""


def part_id(part) -> int:
    """Normalise a boundary part given as 1, 2, "Gamma1" or "Gamma2"."""
    if part in (GAMMA1, GAMMA2):
        return int(part)
    try:
        return _PART_NAMES[part]
    except (KeyError, TypeError):
        raise GridError(f"unknown boundary part {part!r}") from None


@dataclass(frozen=True, eq=False)
class Domain:
    """Rectangular domain with a labelled boundary.

    ``labels`` holds one entry per boundary face (see module docstring for the
    ordering). Build instances with :func:`build_domain`.
    """

    Lx: float
    Ly: float
    nx: int
    ny: int
    labels: tuple

    @property
    def hx(self) -> float:
        return self.Lx / self.nx

    @property
    def hy(self) -> float:
        return self.Ly / self.ny

    @property
    def h(self) -> float:
        return min(self.hx, self.hy)

    @property
    def n_boundary(self) -> int:
        return 2 * (self.nx + self.ny)

    @property
    def n_u(self) -> int:
        return (self.nx + 1) * self.ny

    @property
    def n_vel(self) -> int:
        return self.n_u + self.nx * (self.ny + 1)

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    def same_as(self, other: "Domain") -> bool:
        return self is other or (
            (self.Lx, self.Ly, self.nx, self.ny, self.labels)
            == (other.Lx, other.Ly, other.nx, other.ny, other.labels)
        )

    # -- index helpers -------------------------------------------------
    def iu(self, i, j):
        return np.asarray(i) * self.ny + np.asarray(j)

    def iv(self, i, j):
        return self.n_u + np.asarray(i) * (self.ny + 1) + np.asarray(j)

    def ic(self, i, j):
        return np.asarray(i) * self.ny + np.asarray(j)

    def inode(self, i, j):
        return np.asarray(i) * (self.ny + 1) + np.asarray(j)

    # -- boundary face table -------------------------------------------
    @cached_property
    def faces(self) -> SimpleNamespace:
        """Per-face geometry: side, centre, normal, length, velocity dof,
        outward sign of that dof, adjacent cell and the next cell inward."""
        nx, ny, hx, hy = self.nx, self.ny, self.hx, self.hy
        jj = np.arange(ny)
        ii = np.arange(nx)
        side = np.array(["left"] * ny + ["right"] * ny + ["bottom"] * nx + ["top"] * nx)
        cx = np.concatenate([np.zeros(ny), np.full(ny, self.Lx), (ii + 0.5) * hx, (ii + 0.5) * hx])
        cy = np.concatenate([(jj + 0.5) * hy, (jj + 0.5) * hy, np.zeros(nx), np.full(nx, self.Ly)])
        normal = np.zeros((self.n_boundary, 2))
        normal[:ny, 0] = -1.0
        normal[ny:2 * ny, 0] = 1.0
        normal[2 * ny:2 * ny + nx, 1] = -1.0
        normal[2 * ny + nx:, 1] = 1.0
        length = np.concatenate([np.full(2 * ny, hy), np.full(2 * nx, hx)])
        dof = np.concatenate([self.iu(0, jj), self.iu(nx, jj), self.iv(ii, 0), self.iv(ii, ny)])
        sign = np.concatenate([-np.ones(ny), np.ones(ny), -np.ones(nx), np.ones(nx)])
        cell = np.concatenate([self.ic(0, jj), self.ic(nx - 1, jj), self.ic(ii, 0), self.ic(ii, ny - 1)])
        cell2 = np.concatenate([self.ic(1, jj), self.ic(nx - 2, jj), self.ic(ii, 1), self.ic(ii, ny - 2)])
        # arc coordinate along the face's own side
        s = np.concatenate([cy[:2 * ny], cx[2 * ny:]])
        labels = np.asarray(self.labels, dtype=int)
        return SimpleNamespace(
            side=side, center=np.column_stack([cx, cy]), normal=normal, length=length,
            dof=dof, sign=sign, cell=cell, cell2=cell2, s=s, labels=labels,
        )

    def part_faces(self, part) -> np.ndarray:
        """Boundary face ids belonging to ``part``."""
        return np.flatnonzero(self.faces.labels == part_id(part))

    @cached_property
    def gamma1(self) -> np.ndarray:
        return self.part_faces(GAMMA1)

    @cached_property
    def gamma2(self) -> np.ndarray:
        return self.part_faces(GAMMA2)

    @cached_property
    def free_dofs(self) -> np.ndarray:
        """Velocity dofs not pinned by the wall condition (normal faces on Gamma2)."""
        mask = np.ones(self.n_vel, dtype=bool)
        mask[self.faces.dof[self.gamma2]] = False
        return np.flatnonzero(mask)

    @cached_property
    def ops(self) -> SimpleNamespace:
        return _assemble_operators(self)

    # -- coordinates -----------------------------------------------------
    def cell_centers(self):
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def u_points(self):
        x = np.arange(self.nx + 1) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def v_points(self):
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = np.arange(self.ny + 1) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def nodes(self):
        x = np.arange(self.nx + 1) * self.hx
        y = np.arange(self.ny + 1) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def sample_velocity(self, fu, fv) -> "VelocityField":
        """Sample ``u = fu(x, y)`` and ``v = fv(x, y)`` at face centres."""
        xu, yu = self.u_points()
        xv, yv = self.v_points()
        u = np.broadcast_to(np.asarray(fu(xu, yu), dtype=float), xu.shape).copy()
        v = np.broadcast_to(np.asarray(fv(xv, yv), dtype=float), xv.shape).copy()
        return VelocityField(self, u, v)

    def sample_scalar(self, f) -> "ScalarField":
        x, y = self.cell_centers()
        return ScalarField(self, np.broadcast_to(np.asarray(f(x, y), dtype=float), x.shape).copy())


def build_domain(Lx=1.0, Ly=1.0, nx=8, ny=8, partition=None) -> Domain:
    """Create a :class:`Domain`.

    ``partition`` overrides the default split (part 1 on x = 0 and x = Lx,
    part 2 on y = 0 and y = Ly). It may be a sequence with one label per
    boundary face, or a mapping from side name (``left``, ``right``,
    ``bottom``, ``top``) to a label.
    """
    if not (Lx > 0 and Ly > 0):
        raise GridError("Lx and Ly must be positive")
    if int(nx) != nx or int(ny) != ny or nx < 4 or ny < 4:
        raise GridError(f"nx and ny must be integers >= 4, got nx={nx}, ny={ny}")
    nx, ny = int(nx), int(ny)
    sides = {"left": GAMMA1, "right": GAMMA1, "bottom": GAMMA2, "top": GAMMA2}
    counts = {"left": ny, "right": ny, "bottom": nx, "top": nx}
    if partition is None:
        labels = [sides[s] for s in counts for _ in range(counts[s])]
    elif isinstance(partition, dict):
        unknown = set(partition) - set(sides)
        if unknown:
            raise GridError(f"unknown side(s) in partition: {sorted(unknown)}")
        sides.update({k: part_id(v) for k, v in partition.items()})
        labels = [sides[s] for s in counts for _ in range(counts[s])]
    else:
        labels = [part_id(p) for p in partition]
        if len(labels) != 2 * (nx + ny):
            raise GridError(f"partition needs {2 * (nx + ny)} labels, got {len(labels)}")
    if GAMMA2 not in labels:
        raise GridError("Γ₂ empty: at least one boundary face must belong to Gamma2")
    return Domain(float(Lx), float(Ly), nx, ny, tuple(labels))


# ---------------------------------------------------------------------------
# field containers
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class VelocityField:
    """Staggered velocity: ``u`` on vertical faces, ``v`` on horizontal faces."""

    domain: Domain
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        d = self.domain
        self.u = np.asarray(self.u, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.u.shape != (d.nx + 1, d.ny) or self.v.shape != (d.nx, d.ny + 1):
            raise GridError(
                f"velocity shapes {self.u.shape}, {self.v.shape} do not match "
                f"({d.nx + 1}, {d.ny}), ({d.nx}, {d.ny + 1})"
            )

    @classmethod
    def zeros(cls, domain: Domain) -> "VelocityField":
        return cls(domain, np.zeros((domain.nx + 1, domain.ny)), np.zeros((domain.nx, domain.ny + 1)))

    @classmethod
    def from_vector(cls, domain: Domain, x) -> "VelocityField":
        x = np.asarray(x, dtype=float)
        if x.shape != (domain.n_vel,):
            raise GridError(f"velocity vector must have length {domain.n_vel}")
        return cls(domain, x[:domain.n_u].reshape(domain.nx + 1, domain.ny).copy(),
                   x[domain.n_u:].reshape(domain.nx, domain.ny + 1).copy())

    def vector(self) -> np.ndarray:
        return np.concatenate([self.u.ravel(), self.v.ravel()])

    def is_admissible(self, atol=0.0) -> bool:
        """Normal velocity vanishes on every Gamma2 face."""
        x = self.vector()
        return bool(np.all(np.abs(x[self.domain.faces.dof[self.domain.gamma2]]) <= atol))


@dataclass(eq=False)
class ScalarField:
    """Cell-centred scalar (temperature or total pressure)."""

    domain: Domain
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.domain.nx, self.domain.ny):
            raise GridError(f"scalar shape {self.values.shape} != ({self.domain.nx}, {self.domain.ny})")

    @classmethod
    def zeros(cls, domain: Domain) -> "ScalarField":
        return cls(domain, np.zeros((domain.nx, domain.ny)))

    @classmethod
    def from_vector(cls, domain: Domain, x) -> "ScalarField":
        return cls(domain, np.asarray(x, dtype=float).reshape(domain.nx, domain.ny).copy())

    def vector(self) -> np.ndarray:
        return self.values.ravel().copy()


@dataclass(eq=False)
class BoundaryFunction:
    """Values on the faces of one boundary part, optionally per time level.

    ``values`` has shape ``(n_faces,)`` or ``(n_times, n_faces)`` where
    ``n_faces`` is the number of faces of ``part``.
    """

    domain: Domain
    part: int
    values: np.ndarray
    times: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.part = part_id(self.part)
        self.values = np.asarray(self.values, dtype=float)
        n = len(self.face_ids)
        if self.values.shape[-1:] != (n,) or self.values.ndim > 2:
            raise GridError(f"boundary function on {_PART_NAMES[self.part]} needs {n} values per level")
        if self.times is not None:
            self.times = np.asarray(self.times, dtype=float)
            if self.values.ndim != 2 or len(self.times) != self.values.shape[0]:
                raise GridError("times must match the leading axis of values")

    @property
    def face_ids(self) -> np.ndarray:
        return self.domain.part_faces(self.part)

    @classmethod
    def constant(cls, domain: Domain, part, value=0.0) -> "BoundaryFunction":
        return cls(domain, part, np.full(len(domain.part_faces(part)), float(value)))


def _check_same(a, b):
    if type(a) is not type(b):
        raise GridError(f"layout mismatch: {type(a).__name__} vs {type(b).__name__}")
    if not a.domain.same_as(b.domain):
        raise GridError("fields live on different domains")


# ---------------------------------------------------------------------------
# operator assembly
# ---------------------------------------------------------------------------

def _assemble_operators(d: Domain) -> SimpleNamespace:
    nx, ny, hx, hy = d.nx, d.ny, d.hx, d.hy
    nn = (nx + 1) * (ny + 1)

    # quadrature weights
    wu = np.full((nx + 1, ny), hx * hy)
    wu[0, :] *= 0.5
    wu[-1, :] *= 0.5
    wv = np.full((nx, ny + 1), hx * hy)
    wv[:, 0] *= 0.5
    wv[:, -1] *= 0.5
    w_vel = np.concatenate([wu.ravel(), wv.ravel()])
    w_node = np.full((nx + 1, ny + 1), hx * hy)
    w_node[0, :] *= 0.5
    w_node[-1, :] *= 0.5
    w_node[:, 0] *= 0.5
    w_node[:, -1] *= 0.5
    w_node = w_node.ravel()
    w_cell = np.full(d.n_cells, hx * hy)

    # divergence: cells x velocity
    I, J = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    c = d.ic(I, J).ravel()
    rows = np.concatenate([c, c, c, c])
    cols = np.concatenate([d.iu(I + 1, J).ravel(), d.iu(I, J).ravel(), d.iv(I, J + 1).ravel(), d.iv(I, J).ravel()])
    vals = np.concatenate([np.full(c.size, 1 / hx), np.full(c.size, -1 / hx),
                           np.full(c.size, 1 / hy), np.full(c.size, -1 / hy)])
    D = sp.csr_matrix((vals, (rows, cols)), shape=(d.n_cells, d.n_vel))

    def node_ops(closure):
        # dv/dx, du/dy at nodes and the node interpolants of u and v
        dvdx, dudy, iu_n, iv_n = ([], [], []), ([], [], []), ([], [], []), ([], [], [])

        def add(t, r, cc, val):
            t[0].append(r)
            t[1].append(cc)
            t[2].append(val)

        ext = closure == "extrapolate"
        for i in range(nx + 1):
            for j in range(ny + 1):
                n = int(d.inode(i, j))
                # dv/dx from v at x=(i-1/2)hx and x=(i+1/2)hx
                if 0 < i < nx:
                    add(dvdx, n, int(d.iv(i, j)), 1 / hx)
                    add(dvdx, n, int(d.iv(i - 1, j)), -1 / hx)
                    add(iv_n, n, int(d.iv(i, j)), 0.5)
                    add(iv_n, n, int(d.iv(i - 1, j)), 0.5)
                else:
                    a, b, s = (0, 1, 1.0) if i == 0 else (nx - 1, nx - 2, -1.0)
                    # wall value vw = 0 (bc) or 1.5 v_a - 0.5 v_b; derivative (v_a - vw)/(hx/2) * s
                    add(dvdx, n, int(d.iv(a, j)), s * 2 / hx * (1 - (1.5 if ext else 0.0)))
                    if ext:
                        add(dvdx, n, int(d.iv(b, j)), s * 2 / hx * 0.5)
                        add(iv_n, n, int(d.iv(a, j)), 1.5)
                        add(iv_n, n, int(d.iv(b, j)), -0.5)
                if 0 < j < ny:
                    add(dudy, n, int(d.iu(i, j)), 1 / hy)
                    add(dudy, n, int(d.iu(i, j - 1)), -1 / hy)
                    add(iu_n, n, int(d.iu(i, j)), 0.5)
                    add(iu_n, n, int(d.iu(i, j - 1)), 0.5)
                else:
                    a, b, s = (0, 1, 1.0) if j == 0 else (ny - 1, ny - 2, -1.0)
                    add(dudy, n, int(d.iu(i, a)), s * 2 / hy * (1 - (1.5 if ext else 0.0)))
                    if ext:
                        add(dudy, n, int(d.iu(i, b)), s * 2 / hy * 0.5)
                        add(iu_n, n, int(d.iu(i, a)), 1.5)
                        add(iu_n, n, int(d.iu(i, b)), -0.5)

        def mat(t):
            return sp.csr_matrix((t[2], (t[0], t[1])), shape=(nn, d.n_vel))

        Dvdx, Dudy = mat(dvdx), mat(dudy)
        return SimpleNamespace(curl=(Dvdx - Dudy).tocsr(), dvdx=Dvdx, dudy=Dudy, Iu=mat(iu_n), Iv=mat(iv_n))

    nodes = {cl: node_ops(cl) for cl in CLOSURES}

    # cell-centred gradients of u (d/dx) and v (d/dy), used in the H1 norm
    Dudx = sp.csr_matrix((np.concatenate([np.full(c.size, 1 / hx), np.full(c.size, -1 / hx)]),
                          (np.concatenate([c, c]), np.concatenate([d.iu(I + 1, J).ravel(), d.iu(I, J).ravel()]))),
                         shape=(d.n_cells, d.n_vel))
    Dvdy = sp.csr_matrix((np.concatenate([np.full(c.size, 1 / hy), np.full(c.size, -1 / hy)]),
                          (np.concatenate([c, c]), np.concatenate([d.iv(I, J + 1).ravel(), d.iv(I, J).ravel()]))),
                         shape=(d.n_cells, d.n_vel))

    f = d.faces
    # boundary trace of cell scalars: linear extrapolation from the two nearest cells
    nb = d.n_boundary
    trace = sp.csr_matrix((np.concatenate([np.full(nb, 1.5), np.full(nb, -0.5)]),
                           (np.concatenate([np.arange(nb), np.arange(nb)]), np.concatenate([f.cell, f.cell2]))),
                          shape=(nb, d.n_cells))
    # normal component of the velocity on each boundary face
    normal = sp.csr_matrix((f.sign, (np.arange(nb), f.dof)), shape=(nb, d.n_vel))

    # scalar face gradients: interior faces, then boundary faces
    def scalar_grad(closure):
        r, cc, val, wts = [], [], [], []
        k = 0
        for i in range(nx - 1):
            for j in range(ny):
                r += [k, k]
                cc += [int(d.ic(i + 1, j)), int(d.ic(i, j))]
                val += [1 / hx, -1 / hx]
                wts.append(hx * hy)
                k += 1
        for i in range(nx):
            for j in range(ny - 1):
                r += [k, k]
                cc += [int(d.ic(i, j + 1)), int(d.ic(i, j))]
                val += [1 / hy, -1 / hy]
                wts.append(hx * hy)
                k += 1
        for b in range(nb):
            hn = hx if f.side[b] in ("left", "right") else hy
            if closure == "extrapolate":
                # outward derivative (trace - w_c)/(hn/2) with trace = 1.5 w_c - 0.5 w_2
                r += [k, k]
                cc += [int(f.cell[b]), int(f.cell2[b])]
                val += [1.0 / hn, -1.0 / hn]
            elif f.labels[b] == GAMMA1:
                # homogeneous Dirichlet: (0 - w_c)/(hn/2)
                r.append(k)
                cc.append(int(f.cell[b]))
                val.append(-2.0 / hn)
            else:
                # natural (flux) boundary: no gradient contribution from the form
                r.append(k)
                cc.append(int(f.cell[b]))
                val.append(0.0)
            wts.append(0.5 * hx * hy)
            k += 1
        return sp.csr_matrix((val, (r, cc)), shape=(k, d.n_cells)), np.asarray(wts)

    sgrad = {cl: scalar_grad(cl) for cl in CLOSURES}

    return SimpleNamespace(
        D=D, w_vel=w_vel, w_node=w_node, w_cell=w_cell, nodes=nodes,
        Dudx=Dudx, Dvdy=Dvdy, trace=trace, normal=normal, sgrad=sgrad,
    )


def _closure(closure):
    if closure not in CLOSURES:
        raise GridError(f"closure must be one of {CLOSURES}, got {closure!r}")
    return closure


# ---------------------------------------------------------------------------
# differential / trace operators
# ---------------------------------------------------------------------------

def divergence(z: VelocityField, d: Domain | None = None) -> ScalarField:
    """Cell-centred divergence of a staggered velocity field."""
    d = _resolve(z, d)
    return ScalarField.from_vector(d, d.ops.D @ z.vector())


def curl2d(z: VelocityField, d: Domain | None = None, closure="bc") -> np.ndarray:
    """Node-centred vorticity ``dv/dx - du/dy``, shape ``(nx + 1, ny + 1)``."""
    d = _resolve(z, d)
    return (d.ops.nodes[_closure(closure)].curl @ z.vector()).reshape(d.nx + 1, d.ny + 1)


def normal_trace(z: VelocityField, part, d: Domain | None = None) -> BoundaryFunction:
    """Outward normal component ``z . n`` on each face of ``part``."""
    d = _resolve(z, d)
    ids = d.part_faces(part)
    return BoundaryFunction(d, part, (d.ops.normal @ z.vector())[ids])


def scalar_trace(w: ScalarField, part, d: Domain | None = None) -> BoundaryFunction:
    """Boundary values of a cell scalar by two-cell linear extrapolation."""
    d = _resolve(w, d)
    ids = d.part_faces(part)
    return BoundaryFunction(d, part, (d.ops.trace @ w.vector())[ids])


def inner_product(a, b, d: Domain | None = None) -> float:
    """L2 inner product by midpoint quadrature (half weights on boundary faces)."""
    _check_same(a, b)
    d = _resolve(a, d)
    if isinstance(a, VelocityField):
        return float(np.dot(a.vector() * d.ops.w_vel, b.vector()))
    if isinstance(a, ScalarField):
        return float(np.dot(a.vector() * d.ops.w_cell, b.vector()))
    raise GridError(f"no inner product for {type(a).__name__}")


def boundary_integral(f: BoundaryFunction, g: BoundaryFunction, part=None) -> float:
    """Integral of ``f * g`` over a boundary part (time levels are summed)."""
    if not f.domain.same_as(g.domain):
        raise GridError("boundary functions live on different domains")
    if f.part != g.part or (part is not None and part_id(part) != f.part):
        raise GridError("boundary functions must live on the same part")
    lengths = f.domain.faces.length[f.face_ids]
    return float(np.sum(f.values * g.values * lengths))


def _resolve(fld, d):
    if d is not None and not fld.domain.same_as(d):
        raise GridError("field does not belong to the given domain")
    return fld.domain


def project_divergence_free(z: VelocityField) -> VelocityField:
    """Mass-weighted orthogonal projection onto discretely divergence-free,
    admissible fields (homogeneous pressure data on Gamma1)."""
    d = z.domain
    x = z.vector()
    x[d.faces.dof[d.gamma2]] = 0.0
    return VelocityField.from_vector(d, velocity_projector(d)(x))


def velocity_projector(d: Domain):
    """Return ``P(x)``, the projection used by :func:`project_divergence_free`."""
    cache = d.__dict__.setdefault("_projector", None)
    if cache is None:
        from scipy.sparse.linalg import splu

        fz = d.free_dofs
        Df = d.ops.D[:, fz]
        minv = 1.0 / d.ops.w_vel[fz]
        L = (Df @ sp.diags(minv) @ Df.T).tocsc()
        pin = len(d.gamma1) == 0
        if pin:
            L = L.tolil()
            L[0, :] = 0.0
            L[0, 0] = 1.0
            L = L.tocsc()
        lu = splu(L)

        def proj(x):
            x = np.array(x, dtype=float)
            r = Df @ x[fz]
            if pin:
                r[0] = 0.0
            phi = lu.solve(r)
            x[fz] -= minv * (Df.T @ phi)
            return x

        cache = proj
        d.__dict__["_projector"] = cache
    return cache


# ---------------------------------------------------------------------------
# CSV dumps
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    return repr(float(x))


def write_field_csv(path, fld, component=None) -> Path:
    """Dump a field as ``i,j,x,y,value``.

    For a :class:`VelocityField` pass ``component="u"`` or ``"v"``.
    """
    path = Path(path)
    d = fld.domain
    if isinstance(fld, ScalarField):
        X, Y = d.cell_centers()
        vals = fld.values
    elif isinstance(fld, VelocityField):
        if component == "u":
            X, Y = d.u_points()
            vals = fld.u
        elif component == "v":
            X, Y = d.v_points()
            vals = fld.v
        else:
            raise GridError("component must be 'u' or 'v' for velocity dumps")
    else:
        raise GridError(f"cannot dump {type(fld).__name__}")
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["i", "j", "x", "y", "value"])
        for i in range(vals.shape[0]):
            for j in range(vals.shape[1]):
                wr.writerow([i, j, _fmt(X[i, j]), _fmt(Y[i, j]), _fmt(vals[i, j])])
    return path


def write_boundary_csv(path, bf: BoundaryFunction, times=None) -> Path:
    """Dump a boundary function as ``face_id,s,t,value``."""
    path = Path(path)
    ids = bf.face_ids
    s = bf.domain.faces.s[ids]
    vals = np.atleast_2d(bf.values)
    if times is None:
        times = bf.times if bf.times is not None else np.zeros(vals.shape[0])
    if len(times) != vals.shape[0]:
        raise GridError("times must match the number of value rows")
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["face_id", "s", "t", "value"])
        for k, t in enumerate(times):
            for f_id, sf, val in zip(ids, s, vals[k]):
                wr.writerow([int(f_id), _fmt(sf), _fmt(t), _fmt(val)])
    return path


def read_boundary_csv(path, domain: Domain, part) -> BoundaryFunction:
    """Inverse of :func:`write_boundary_csv`."""
    ids = domain.part_faces(part)
    pos = {int(f): k for k, f in enumerate(ids)}
    rows = {}
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.setdefault(float(rec["t"]), {})[int(rec["face_id"])] = float(rec["value"])
    times = sorted(rows)
    vals = np.zeros((len(times), len(ids)))
    for k, t in enumerate(times):
        for f_id, val in rows[t].items():
            vals[k, pos[f_id]] = val
    return BoundaryFunction(domain, part, vals, times=np.array(times))
