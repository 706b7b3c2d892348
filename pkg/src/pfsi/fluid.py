"""Incompressible solvent on the moving channel, written on the reference grid.

Momentum is advanced with backward-Euler viscosity and explicit conservative
advection in ALE form (face fluxes relative to the mesh motion), followed by
an incremental pressure projection. The projection acts on contravariant face
fluxes ``V = J F^{-1} u``, so ``div V = 0`` holds to solver precision on every
deformed grid; cell velocities are corrected with the matching pressure
gradient.
"""
from dataclasses import dataclass, replace

import numpy as np

from .errors import CFLViolation, LinearSolveFailure, ProjectionSolveFailure
from .mesh import DIRICHLET, NEUMANN, Discretization

# weights of the quadratic extrapolation from the three cells nearest to a wall
_EXTRAP = np.array([15.0, -10.0, 3.0]) / 8.0


@dataclass(frozen=True)
class FluidState:
    """Cell velocities and pressure plus the divergence-free face fluxes.

    ``wall_bottom``/``wall_top`` hold the Dirichlet velocity (2, nx) at the
    wall-face centres; they are part of the state because gradients near the
    walls depend on them.
    """

    velocity: np.ndarray
    pressure: np.ndarray
    flux_x: np.ndarray
    flux_z: np.ndarray
    disc: Discretization
    wall_bottom: np.ndarray = None
    wall_top: np.ndarray = None
    time: float = 0.0

    @classmethod
    def rest(cls, disc, time=0.0):
        g = disc.grid
        return cls(np.zeros((2,) + g.shape), np.zeros(g.shape), np.zeros(g.shape),
                   np.zeros((g.nx, g.n_zfaces)), disc, np.zeros((2, g.nx)), np.zeros((2, g.nx)), time)

    @classmethod
    def from_velocity(cls, disc, velocity, pressure=None, wall_bottom=None, wall_top=None, time=0.0):
        """State with face fluxes interpolated from the cell field (not projected)."""
        g = disc.grid
        wb = np.zeros((2, g.nx)) if wall_bottom is None else np.asarray(wall_bottom, dtype=float)
        wt = np.zeros((2, g.nx)) if wall_top is None else np.asarray(wall_top, dtype=float)
        Vx, Vz = disc.face_flux_of(velocity, wb, wt)
        p = np.zeros(g.shape) if pressure is None else np.asarray(pressure, dtype=float)
        return cls(np.asarray(velocity, dtype=float), p, Vx, Vz, disc, wb, wt, time)

    def kinetic_energy(self):
        return 0.5 * float(self.disc.integrate(np.sum(self.velocity**2, axis=0)))

    def divergence(self):
        return self.disc.divergence(self.flux_x, self.flux_z)

    def velocity_gradient(self):
        """``grad u`` at cell centres, ``G[i, j] = d u_i / d x_j``, shape (2, 2, nx, nz)."""
        return np.stack([
            self.disc.gradient(self.velocity[i], DIRICHLET, self.wall_bottom[i], self.wall_top[i])
            for i in range(2)])

    def dissipation(self):
        G = self.velocity_gradient()
        return float(self.disc.integrate(np.sum(G**2, axis=(0, 1))))


def project_divergence_free(disc, flux_x, flux_z, dt=1.0):
    """Remove the gradient part of face fluxes: solve ``div A grad phi = div V / dt``.

    Returns ``(flux_x, flux_z, phi)`` with ``div V = 0`` up to the solver
    residual. Wall fluxes are left untouched.
    """
    g = disc.grid
    rhs = disc.divergence(flux_x, flux_z).ravel() / dt
    rhs -= rhs.mean()
    rhs[0] = 0.0
    try:
        phi = disc.projection_factor().solve(rhs)
    except (RuntimeError, LinearSolveFailure) as exc:
        raise ProjectionSolveFailure(str(exc)) from exc
    if not np.all(np.isfinite(phi)):
        raise ProjectionSolveFailure("non-finite projection potential")
    phi -= phi.mean()
    e = disc.ext(phi)
    Vx = flux_x - dt * (disc.flux_x(NEUMANN) @ e).reshape(g.shape)
    Vz = flux_z - dt * (disc.flux_z(NEUMANN) @ e).reshape(g.nx, g.n_zfaces)
    return Vx, Vz, phi.reshape(g.shape)


def _advection(disc, field_ext, Vx, Vz_rel):
    g = disc.grid
    fx = Vx.ravel() * (disc.Ax @ field_ext)
    fz = Vz_rel.ravel() * (disc.Az(DIRICHLET) @ field_ext)
    return (disc.Dx @ fx + disc.Dz @ fz).reshape(g.shape)


def stress_divergence(disc, stress):
    """Piola-form ``J div_x T`` at cells for a symmetric (2, 2, nx, nz) tensor field."""
    g = disc.grid
    out = np.empty((2,) + g.shape)
    for i in range(2):
        t1 = disc.ext(stress[i, 0])
        t2 = disc.ext(stress[i, 1])
        fx = disc.bx.ravel() * (disc.Ax @ t1)
        Az = disc.Az(NEUMANN)
        fz = -disc.az.ravel() * (Az @ t1) + Az @ t2
        out[i] = (disc.Dx @ fx + disc.Dz @ fz).reshape(g.shape)
    return out


def courant_number(disc, flux_x, flux_z, mesh_flux, dt):
    g = disc.grid
    rel = np.abs(flux_z - mesh_flux)
    return dt * (float(np.max(np.abs(flux_x))) / g.hx + float(np.max(rel)) / g.hz) / float(np.min(disc.J))


def step_fluid(state, dt, disc_new=None, wall_top=None, wall_bottom=None, body_force=None,
               extra_stress=None, viscosity=1.0, cfl_limit=0.5):
    """One ALE projection step from ``state`` (on ``state.disc``) to ``disc_new``.

    ``body_force`` is the physical force (2, nx, nz) at the new cell centres,
    ``extra_stress`` the polymeric stress as a full (2, 2, nx, nz) tensor.
    Wall velocities are (2, nx); their net normal flux must vanish.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    old = state.disc
    new = old if disc_new is None else disc_new
    g = new.grid
    wb = np.zeros((2, g.nx)) if wall_bottom is None else np.asarray(wall_bottom, dtype=float)
    wt = np.zeros((2, g.nx)) if wall_top is None else np.asarray(wall_top, dtype=float)
    W = new.mesh_flux(old, dt) if new is not old else np.zeros((g.nx, g.n_zfaces))

    cfl = courant_number(old, state.flux_x, state.flux_z, W, dt)
    if cfl > cfl_limit:
        raise CFLViolation(f"Courant number {cfl:.4g} exceeds {cfl_limit}", courant=cfl, limit=cfl_limit)

    u0 = state.velocity
    Vz_rel = state.flux_z - W
    gp = new.gradient(state.pressure, NEUMANN) * new.J
    rhs = np.empty((2,) + g.shape)
    for i in range(2):
        e_old = old.ext(u0[i], state.wall_bottom[i], state.wall_top[i])
        rhs[i] = old.J * u0[i] - dt * _advection(old, e_old, state.flux_x, Vz_rel) - dt * gp[i]
    if body_force is not None:
        rhs += dt * new.J * np.asarray(body_force, dtype=float)
    if extra_stress is not None:
        rhs += dt * stress_divergence(new, extra_stress)

    L = new.laplacian(DIRICHLET)
    Lc, Lw = new.split(L)
    key = ("momentum", dt, viscosity)

    def matrix():
        import scipy.sparse as sp
        return sp.diags(new.J.ravel()) - dt * viscosity * Lc

    lu = new.factor(key, matrix)
    ustar = np.empty_like(rhs)
    for i in range(2):
        b = rhs[i].ravel() + dt * viscosity * (Lw @ np.concatenate([wb[i], wt[i]]))
        ustar[i] = lu.solve(b).reshape(g.shape)
    if not np.all(np.isfinite(ustar)):
        raise LinearSolveFailure("momentum solve produced non-finite values")

    Vx, Vz = new.face_flux_of(ustar, wb, wt)
    Vx, Vz, phi = project_divergence_free(new, Vx, Vz, dt)
    u = ustar - dt * new.gradient(phi, NEUMANN)
    return replace(state, velocity=u, pressure=state.pressure + phi, flux_x=Vx, flux_z=Vz,
                   disc=new, wall_bottom=wb, wall_top=wt, time=state.time + dt)


def _wall_extrapolate(field):
    """Quadratic extrapolation of a (..., nx, nz) cell field to the top wall."""
    return (_EXTRAP[0] * field[..., -1] + _EXTRAP[1] * field[..., -2] + _EXTRAP[2] * field[..., -3])


def wall_velocity_gradient(state):
    """Physical ``grad u`` at the top-wall face centres, shape (2, 2, nx)."""
    disc = state.disc
    g = disc.grid
    h = g.hz
    u = state.velocity
    wt = state.wall_top
    G = np.empty((2, 2, g.nx))
    a = disc.deta_centers
    b = disc.bz[:, -1]
    for i in range(2):
        dzeta = -(-8.0 / 3.0 * wt[i] + 3.0 * u[i, :, -1] - 1.0 / 3.0 * u[i, :, -2]) / h
        dxi = (np.roll(wt[i], -1) - np.roll(wt[i], 1)) / (2 * g.hx)
        G[i, 0] = dxi - a / b * dzeta
        G[i, 1] = dzeta / b
    return G


def compute_stress_S(state, extra_stress=None, viscosity=1.0):
    """Total stress ``nu (grad u + grad u^T) - p I + T`` at cell centres."""
    G = state.velocity_gradient()
    S = viscosity * (G + np.swapaxes(G, 0, 1))
    S[0, 0] -= state.pressure
    S[1, 1] -= state.pressure
    if extra_stress is not None:
        S = S + extra_stress
    return S


def wall_stress(state, extra_stress=None, viscosity=1.0, pressure_shift=0.0):
    """Total stress at the top-wall face centres, shape (2, 2, nx)."""
    G = wall_velocity_gradient(state)
    S = viscosity * (G + np.swapaxes(G, 0, 1))
    p = _wall_extrapolate(state.pressure) + pressure_shift
    S[0, 0] -= p
    S[1, 1] -= p
    if extra_stress is not None:
        S = S + _wall_extrapolate(extra_stress)
    return S


def compute_structure_traction(S, boundary):
    """Normal load ``-(S n) . e_d`` per unit reference area on the shell.

    ``S`` has shape (d, d, P) at the ``P`` boundary points of ``boundary``
    (a :class:`~pfsi.geometry.DeformedBoundary`). The surface Jacobian turns
    the physical traction into a load per reference area.
    """
    S = np.asarray(S, dtype=float)
    n = boundary.normal * boundary.surface_jacobian[:, None]
    Sn = np.einsum("ijp,pj->pi", S, n)
    return -Sn[:, -1]
