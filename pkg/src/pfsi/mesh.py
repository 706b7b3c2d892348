"""Cell-centred finite-volume operators on the reference channel grid.

Cells are indexed ``(i, j)`` with ``i`` along the periodic axis and ``j`` along
the wall-normal axis; flat index ``i * nz + j``. The mapped geometry enters
only through metric arrays:

* ``J`` (cell volumes ratio), defined from node heights so that
  ``J_new - J_old`` equals the discrete divergence of the mesh flux exactly;
* ``b = dz/dzeta`` on x-faces and ``a = dz/dx`` on z-faces, both from node
  heights, so the Piola identity ``Dx b - Dz a = 0`` holds to rounding;
* the conductivity ``A = [[b, -a], [-a, (1 + a^2) / b]]`` of the pulled-back
  Laplacian.

Operators act on an *extended* vector ``[phi (N), g_bottom (nx), g_top (nx)]``
so Dirichlet wall data enter linearly.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fourier
from .errors import LinearSolveFailure
from .geometry import HanzawaMap, ReferenceGeometry

DIRICHLET = "dirichlet"
NEUMANN = "neumann"


@dataclass(frozen=True)
class ChannelGrid:
    nx: int
    nz: int
    extent: tuple = (1.0, 1.0)
    periodic_z: bool = False

    def __post_init__(self):
        if self.nx < 4 or self.nz < 4:
            raise ValueError("need at least 4 cells per direction")

    @property
    def hx(self):
        return self.extent[0] / self.nx

    @property
    def hz(self):
        return self.extent[1] / self.nz

    @property
    def shape(self):
        return (self.nx, self.nz)

    @property
    def size(self):
        return self.nx * self.nz

    @property
    def cell_volume(self):
        return self.hx * self.hz

    @property
    def x_nodes(self):
        return np.arange(self.nx) * self.hx

    @property
    def x_centers(self):
        return (np.arange(self.nx) + 0.5) * self.hx

    @property
    def z_nodes(self):
        return np.arange(self.nz + 1) * self.hz

    @property
    def z_centers(self):
        return (np.arange(self.nz) + 0.5) * self.hz

    @property
    def n_zfaces(self):
        return self.nz if self.periodic_z else self.nz + 1

    def reference_centers(self):
        X, Z = np.meshgrid(self.x_centers, self.z_centers, indexing="ij")
        return np.stack([X, Z], axis=-1)


def _idx(nz, i, j):
    return i * nz + j


class Discretization:
    """Metrics and operators for one displacement of the flexible wall.

    ``eta`` is sampled at the structure nodes ``x_i = i * hx`` (one per grid
    column). Immutable once built; operators are assembled lazily and cached.
    """

    def __init__(self, grid, geometry=None, eta=None):
        self.grid = grid
        if geometry is None:
            geometry = ReferenceGeometry(dim=2, extent=tuple(grid.extent),
                                         tube_halfwidth=0.4 * grid.extent[1])
        self.geometry = geometry
        nx = grid.nx
        eta = np.zeros(nx) if eta is None else np.asarray(eta, dtype=float)
        if eta.shape != (nx,):
            raise ValueError("eta must have one sample per grid column")
        if grid.periodic_z and np.any(eta):
            raise ValueError("a fully periodic box cannot carry a flexible wall")
        self.hmap = HanzawaMap(geometry, eta)
        self.eta_nodes = self.hmap.eta
        P = grid.extent[0]
        moving = bool(np.any(eta))
        self.moving = moving
        if moving:
            self.eta_centers = fourier.shift(eta, P, 0.5 * grid.hx)
            self.deta_nodes = fourier.shift(eta, P, 0.0, deriv=1)
            self.deta_centers = fourier.shift(eta, P, 0.5 * grid.hx, deriv=1)
        else:
            self.eta_centers = np.zeros(nx)
            self.deta_nodes = np.zeros(nx)
            self.deta_centers = np.zeros(nx)
        self._build_metrics()

    # -- metrics -------------------------------------------------------------
    def _build_metrics(self):
        g = self.grid
        H = g.extent[1]
        cut = self.geometry.cutoff
        zn = g.z_nodes
        zc = g.z_centers
        sn = zn - H
        sc = zc - H
        if g.periodic_z:
            phin = np.zeros_like(zn)
            phic = np.zeros_like(zc)
            dphin = np.zeros_like(zn)
            dphic = np.zeros_like(zc)
        else:
            phin, phic = cut(sn), cut(sc)
            dphin, dphic = cut.derivative(sn), cut.derivative(sc)
        self.cutoff_nodes = phin
        # node heights (nx, nz+1)
        self.z_node_heights = zn[None, :] + self.eta_nodes[:, None] * phin[None, :]
        self.J = 1.0 + self.eta_centers[:, None] * np.diff(phin)[None, :] / g.hz
        self.a_cell = self.deta_centers[:, None] * phic[None, :]
        self.b_cell = 1.0 + self.eta_centers[:, None] * dphic[None, :]
        # x-faces (nx, nz): located at (x_i, zc_j)
        self.bx = np.diff(self.z_node_heights, axis=1) / g.hz
        self.ax = self.deta_nodes[:, None] * phic[None, :]
        # z-faces: located at (xc_i, zn_j)
        nzf = g.n_zfaces
        zh = self.z_node_heights[:, :nzf]
        self.az = (np.roll(zh, -1, axis=0) - zh) / g.hx
        self.bz = 1.0 + self.eta_centers[:, None] * dphin[None, :nzf]
        self.cutoff_zfaces = phin[:nzf]
        if np.any(self.J <= 0) or np.any(self.bx <= 0) or np.any(self.bz <= 0):
            from .errors import SingularJacobian
            raise SingularJacobian("mapped grid folded (non-positive Jacobian)")

    @property
    def physical_centers(self):
        g = self.grid
        H = g.extent[1]
        X, Z = np.meshgrid(g.x_centers, g.z_centers, indexing="ij")
        if g.periodic_z:
            return np.stack([X, Z], axis=0)
        Zp = Z + self.eta_centers[:, None] * self.geometry.cutoff(Z - H)
        return np.stack([X, Zp], axis=0)

    def B_cell(self):
        """``F^{-T}`` at cell centres, shape (2, 2, nx, nz)."""
        a, b = self.a_cell, self.b_cell
        B = np.zeros((2, 2) + a.shape)
        B[0, 0] = 1.0
        B[0, 1] = -a / b
        B[1, 1] = 1.0 / b
        return B

    def volume(self):
        return float(np.sum(self.J) * self.grid.cell_volume)

    def integrate(self, field):
        """J-weighted quadrature over the deformed domain (last two axes)."""
        return np.sum(field * self.J, axis=(-2, -1)) * self.grid.cell_volume

    # -- elementary sparse operators -----------------------------------------
    @cached_property
    def _n_ext(self):
        return self.grid.size + 2 * self.grid.nx

    def _wall_col(self, side, i):
        g = self.grid
        return g.size + (0 if side == "bottom" else g.nx) + i

    def _coo(self, rows, cols, vals, shape):
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=shape)

    @cached_property
    def Gx(self):
        """cells -> x-faces difference ``(phi_i - phi_{i-1}) / hx`` (ext columns)."""
        g = self.grid
        I, Jj = np.meshgrid(np.arange(g.nx), np.arange(g.nz), indexing="ij")
        r = _idx(g.nz, I, Jj).ravel()
        c_here = r
        c_left = _idx(g.nz, (I - 1) % g.nx, Jj).ravel()
        return self._coo([r, r], [c_here, c_left],
                         [np.full(r.size, 1 / g.hx), np.full(r.size, -1 / g.hx)],
                         (g.size, self._n_ext))

    @cached_property
    def Ax(self):
        g = self.grid
        I, Jj = np.meshgrid(np.arange(g.nx), np.arange(g.nz), indexing="ij")
        r = _idx(g.nz, I, Jj).ravel()
        c_left = _idx(g.nz, (I - 1) % g.nx, Jj).ravel()
        return self._coo([r, r], [r, c_left], [np.full(r.size, 0.5)] * 2, (g.size, self._n_ext))

    @cached_property
    def Cx(self):
        """Central x-derivative at cells (ext columns, wall data unused)."""
        g = self.grid
        I, Jj = np.meshgrid(np.arange(g.nx), np.arange(g.nz), indexing="ij")
        r = _idx(g.nz, I, Jj).ravel()
        cr = _idx(g.nz, (I + 1) % g.nx, Jj).ravel()
        cl = _idx(g.nz, (I - 1) % g.nx, Jj).ravel()
        h2 = 2 * g.hx
        return self._coo([r, r], [cr, cl], [np.full(r.size, 1 / h2), np.full(r.size, -1 / h2)],
                         (g.size, self._n_ext))

    def Cz(self, bc):
        """Central z-derivative at cells; wall rows use second-order one-sided stencils."""
        return self._cached(("Cz", bc), lambda: self._build_Cz(bc))

    def _build_Cz(self, bc):
        g = self.grid
        h = g.hz
        rows, cols, vals = [], [], []
        I, Jj = np.meshgrid(np.arange(g.nx), np.arange(g.nz), indexing="ij")
        if g.periodic_z:
            r = _idx(g.nz, I, Jj).ravel()
            rows += [r, r]
            cols += [_idx(g.nz, I, (Jj + 1) % g.nz).ravel(), _idx(g.nz, I, (Jj - 1) % g.nz).ravel()]
            vals += [np.full(r.size, 0.5 / h), np.full(r.size, -0.5 / h)]
            return self._coo(rows, cols, vals, (g.size, self._n_ext))
        Ii, Jm = np.meshgrid(np.arange(g.nx), np.arange(1, g.nz - 1), indexing="ij")
        r = _idx(g.nz, Ii, Jm).ravel()
        rows += [r, r]
        cols += [_idx(g.nz, Ii, Jm + 1).ravel(), _idx(g.nz, Ii, Jm - 1).ravel()]
        vals += [np.full(r.size, 0.5 / h), np.full(r.size, -0.5 / h)]
        i = np.arange(g.nx)
        nz = g.nz
        for side, j0, sgn in (("bottom", 0, 1), ("top", nz - 1, -1)):
            r = _idx(nz, i, j0)
            if bc == DIRICHLET:
                # quadratic through wall value, cell j0 and its inner neighbour
                stencil = [(None, -4.0 / 3.0), (0, 1.0), (1, 1.0 / 3.0)]
            else:
                stencil = [(0, -1.5), (1, 2.0), (2, -0.5)]
            for off, w in stencil:
                rows.append(r)
                if off is None:
                    cols.append(self._wall_col(side, i))
                else:
                    cols.append(_idx(nz, i, j0 + sgn * off))
                vals.append(np.full(i.size, sgn * w / h))
        return self._coo(rows, cols, vals, (g.size, self._n_ext))

    def Gz(self, bc):
        """cells -> z-faces difference; wall rows second order for Dirichlet, zero otherwise."""
        return self._cached(("Gz", bc), lambda: self._build_Gz(bc))

    def _build_Gz(self, bc):
        g = self.grid
        h = g.hz
        nz, nzf = g.nz, g.n_zfaces
        rows, cols, vals = [], [], []
        shape = (g.nx * nzf, self._n_ext)
        if g.periodic_z:
            I, Jj = np.meshgrid(np.arange(g.nx), np.arange(nz), indexing="ij")
            r = (I * nzf + Jj).ravel()
            rows += [r, r]
            cols += [_idx(nz, I, Jj).ravel(), _idx(nz, I, (Jj - 1) % nz).ravel()]
            vals += [np.full(r.size, 1 / h), np.full(r.size, -1 / h)]
            return self._coo(rows, cols, vals, shape)
        I, Jj = np.meshgrid(np.arange(g.nx), np.arange(1, nz), indexing="ij")
        r = (I * nzf + Jj).ravel()
        rows += [r, r]
        cols += [_idx(nz, I, Jj).ravel(), _idx(nz, I, Jj - 1).ravel()]
        vals += [np.full(r.size, 1 / h), np.full(r.size, -1 / h)]
        if bc == DIRICHLET:
            i = np.arange(g.nx)
            # quadratic through wall value and the two nearest cells, derivative at the wall
            for side, jf, j0, sgn in (("bottom", 0, 0, 1), ("top", nz, nz - 1, -1)):
                r = i * nzf + jf
                for off, w in ((None, -8.0 / 3.0), (0, 3.0), (1, -1.0 / 3.0)):
                    rows.append(r)
                    cols.append(self._wall_col(side, i) if off is None else _idx(nz, i, j0 + sgn * off))
                    vals.append(np.full(i.size, sgn * w / h))
        return self._coo(rows, cols, vals, shape)

    def Az(self, bc):
        """cells -> z-faces average; wall rows take the wall value (Dirichlet) or the adjacent cell."""
        return self._cached(("Az", bc), lambda: self._build_Az(bc))

    def _build_Az(self, bc):
        g = self.grid
        nz, nzf = g.nz, g.n_zfaces
        shape = (g.nx * nzf, self._n_ext)
        rows, cols, vals = [], [], []
        if g.periodic_z:
            I, Jj = np.meshgrid(np.arange(g.nx), np.arange(nz), indexing="ij")
            r = (I * nzf + Jj).ravel()
            rows += [r, r]
            cols += [_idx(nz, I, Jj).ravel(), _idx(nz, I, (Jj - 1) % nz).ravel()]
            vals += [np.full(r.size, 0.5)] * 2
            return self._coo(rows, cols, vals, shape)
        I, Jj = np.meshgrid(np.arange(g.nx), np.arange(1, nz), indexing="ij")
        r = (I * nzf + Jj).ravel()
        rows += [r, r]
        cols += [_idx(nz, I, Jj).ravel(), _idx(nz, I, Jj - 1).ravel()]
        vals += [np.full(r.size, 0.5)] * 2
        i = np.arange(g.nx)
        for side, jf, j0 in (("bottom", 0, 0), ("top", nz, nz - 1)):
            rows.append(i * nzf + jf)
            cols.append(self._wall_col(side, i) if bc == DIRICHLET else _idx(nz, i, j0))
            vals.append(np.ones(i.size))
        return self._coo(rows, cols, vals, shape)

    def tangential_wall_derivative(self):
        """Central x-derivative of wall data placed on the wall z-face rows."""
        return self._cached("Tw", self._build_Tw)

    def _build_Tw(self):
        g = self.grid
        nzf = g.n_zfaces
        shape = (g.nx * nzf, self._n_ext)
        if g.periodic_z:
            return sp.csr_matrix(shape)
        i = np.arange(g.nx)
        rows, cols, vals = [], [], []
        for side, jf in (("bottom", 0), ("top", g.nz)):
            r = i * nzf + jf
            rows += [r, r]
            cols += [self._wall_col(side, (i + 1) % g.nx), self._wall_col(side, (i - 1) % g.nx)]
            vals += [np.full(i.size, 0.5 / g.hx), np.full(i.size, -0.5 / g.hx)]
        return self._coo(rows, cols, vals, shape)

    @cached_property
    def Dx(self):
        """x-face values -> cell divergence contribution ``(F_{i+1} - F_i) / hx``."""
        g = self.grid
        I, Jj = np.meshgrid(np.arange(g.nx), np.arange(g.nz), indexing="ij")
        r = _idx(g.nz, I, Jj).ravel()
        return self._coo([r, r], [_idx(g.nz, (I + 1) % g.nx, Jj).ravel(), r],
                         [np.full(r.size, 1 / g.hx), np.full(r.size, -1 / g.hx)],
                         (g.size, g.size))

    @cached_property
    def Dz(self):
        g = self.grid
        nzf = g.n_zfaces
        I, Jj = np.meshgrid(np.arange(g.nx), np.arange(g.nz), indexing="ij")
        r = _idx(g.nz, I, Jj).ravel()
        up = (I * nzf + (Jj + 1) % nzf).ravel()
        return self._coo([r, r], [up, (I * nzf + Jj).ravel()],
                         [np.full(r.size, 1 / g.hz), np.full(r.size, -1 / g.hz)],
                         (g.size, g.nx * nzf))

    def _cached(self, key, builder):
        cache = self.__dict__.setdefault("_op_cache", {})
        if key not in cache:
            cache[key] = builder()
        return cache[key]

    def _wall_rows(self):
        g = self.grid
        if g.periodic_z:
            return np.array([], dtype=int)
        nzf = g.n_zfaces
        i = np.arange(g.nx)
        return np.concatenate([i * nzf, i * nzf + g.nz])

    # -- composite operators -------------------------------------------------
    def flux_x(self, bc):
        """x-face normal flux of ``A grad phi`` (ext columns)."""
        def build():
            cross = self.Ax @ self._ext(self.Cz(bc))
            return sp.diags(self.bx.ravel()) @ self.Gx + sp.diags(-self.ax.ravel()) @ cross
        return self._cached(("Fx", bc), build)

    def flux_z(self, bc):
        def build():
            tang = self.Az(bc) @ self._ext(self.Cx)
            if bc == DIRICHLET:
                tang = tang + self.tangential_wall_derivative()
            A21 = -self.az.ravel()
            A22 = ((1.0 + self.az**2) / self.bz).ravel()
            F = sp.diags(A21) @ tang + sp.diags(A22) @ self.Gz(bc)
            if bc == NEUMANN:
                keep = np.ones(F.shape[0])
                keep[self._wall_rows()] = 0.0
                F = sp.diags(keep) @ F
            return F.tocsr()
        return self._cached(("Fz", bc), build)

    def _ext(self, M):
        """Promote a cells->cells operator (ext columns) to ext->ext with zero wall rows."""
        pad = sp.csr_matrix((self._n_ext - M.shape[0], self._n_ext))
        return sp.vstack([M, pad]).tocsr()

    def laplacian(self, bc):
        """``div(A grad .)`` with ext columns; rows are J-weighted (reference volume)."""
        return self._cached(("L", bc), lambda: (self.Dx @ self.flux_x(bc) + self.Dz @ self.flux_z(bc)).tocsr())

    def split(self, M):
        """Split an ext-column operator into its cell block and its wall-data block."""
        N = self.grid.size
        return M[:, :N].tocsc(), M[:, N:].tocsr()

    def ext(self, field, bottom=None, top=None):
        nx = self.grid.nx
        b = np.zeros(nx) if bottom is None else np.broadcast_to(bottom, (nx,))
        t = np.zeros(nx) if top is None else np.broadcast_to(top, (nx,))
        return np.concatenate([np.ravel(field), b, t])

    def projection_factor(self):
        """LU of ``div A grad`` with zero-flux walls, first cell pinned."""
        def build():
            P = (self.Dx @ self.flux_x(NEUMANN) + self.Dz @ self.flux_z(NEUMANN))[:, :self.grid.size]
            P = P.tolil()
            P[0, :] = 0.0
            P[0, 0] = 1.0
            try:
                return spla.splu(P.tocsc())
            except RuntimeError as exc:
                raise LinearSolveFailure(str(exc)) from exc
        return self._cached("Pfac", build)

    def factor(self, key, matrix_builder):
        def build():
            try:
                return spla.splu(matrix_builder().tocsc())
            except RuntimeError as exc:
                raise LinearSolveFailure(str(exc)) from exc
        return self._cached(("fac", key), build)

    # -- field-level helpers ---------------------------------------------------
    def gradient(self, field, bc, bottom=None, top=None):
        """Physical gradient ``B grad_ref`` at cell centres, shape (2, nx, nz)."""
        e = self.ext(field, bottom, top)
        gx = (self.Cx @ e).reshape(self.grid.shape)
        gz = (self.Cz(bc) @ e).reshape(self.grid.shape)
        B = self.B_cell()
        return np.stack([B[0, 0] * gx + B[0, 1] * gz, B[1, 0] * gx + B[1, 1] * gz])

    def face_flux_of(self, vec, bottom=None, top=None):
        """Contravariant face fluxes ``J F^{-1} u`` of a cell vector field.

        ``bottom``/``top`` are (2, nx) wall velocities (Dirichlet rows).
        """
        g = self.grid
        bot = np.zeros((2, g.nx)) if bottom is None else np.asarray(bottom)
        tp = np.zeros((2, g.nx)) if top is None else np.asarray(top)
        u1 = self.ext(vec[0], bot[0], tp[0])
        u2 = self.ext(vec[1], bot[1], tp[1])
        Vx = self.bx * (self.Ax @ u1).reshape(g.shape)
        Az = self.Az(DIRICHLET)
        Vz = (-self.az * (Az @ u1).reshape(g.nx, g.n_zfaces) + (Az @ u2).reshape(g.nx, g.n_zfaces))
        return Vx, Vz

    def divergence(self, Vx, Vz):
        return (self.Dx @ Vx.ravel() + self.Dz @ Vz.ravel()).reshape(self.grid.shape)

    def mesh_flux(self, old, dt):
        """Mesh flux through z-faces for the wall motion from ``old`` to ``self``."""
        rate = (self.eta_centers - old.eta_centers) / dt
        return rate[:, None] * self.cutoff_zfaces[None, :]
