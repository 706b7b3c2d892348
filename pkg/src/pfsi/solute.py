"""Polymer number density and Oldroyd-B extra stress on the moving domain.

Both fields are stored J-weighted on the reference grid and advanced in
conservative ALE form, so the discrete mass ``sum(J rho) h^2`` is exactly
conserved and constants are preserved on a moving grid.

* density: Crank-Nicolson diffusion with explicit central advection;
* stress: IMEX Heun / Crank-Nicolson (explicit advection, upper-convected and
  ``2 rho I`` source; implicit diffusion and relaxation), second order for
  homogeneous problems.

Without a discretization (``flow=None``) the fields are spatially uniform
arrays and only the source terms act; this is the homogeneous mode used for
ODE comparisons, available in two and three dimensions.
"""
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .errors import NegativeDensity, SymmetryLoss
from .fluid import _advection
from .mesh import NEUMANN


def sym_index(dim):
    """Upper-triangle index pairs in storage order, e.g. 11, 12, 22 in 2D."""
    return [(i, j) for i in range(dim) for j in range(i, dim)]


def n_components(dim):
    return dim * (dim + 1) // 2


def dim_from_components(ncomp):
    for d in (1, 2, 3):
        if n_components(d) == ncomp:
            return d
    raise ValueError(f"{ncomp} is not a symmetric-matrix component count")


def to_full(stress):
    """(ncomp, ...) upper-triangle storage -> (d, d, ...) symmetric tensor."""
    stress = np.asarray(stress, dtype=float)
    d = dim_from_components(stress.shape[0])
    full = np.empty((d, d) + stress.shape[1:])
    for k, (i, j) in enumerate(sym_index(d)):
        full[i, j] = stress[k]
        full[j, i] = stress[k]
    return full


def from_full(tensor, check=True, tol=1e-12):
    """(d, d, ...) -> upper-triangle storage; raises SymmetryLoss if asymmetric."""
    tensor = np.asarray(tensor, dtype=float)
    d = tensor.shape[0]
    if check:
        skew = np.max(np.abs(tensor - np.swapaxes(tensor, 0, 1)), initial=0.0)
        scale = max(1.0, float(np.max(np.abs(tensor), initial=0.0)))
        if skew > tol * scale:
            raise SymmetryLoss(f"stress asymmetry {skew:.3g}")
    return np.stack([tensor[i, j] for i, j in sym_index(d)])


def identity_components(dim, shape=()):
    out = np.zeros((n_components(dim),) + tuple(shape))
    for k, (i, j) in enumerate(sym_index(dim)):
        if i == j:
            out[k] = 1.0
    return out


@dataclass(frozen=True)
class SoluteState:
    density: np.ndarray
    stress: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        rho = np.asarray(self.density, dtype=float)
        T = np.asarray(self.stress, dtype=float)
        if T.shape[1:] != rho.shape:
            raise ValueError("stress components must share the density's shape")
        dim_from_components(T.shape[0])
        object.__setattr__(self, "density", rho)
        object.__setattr__(self, "stress", T)

    @property
    def dim(self):
        return dim_from_components(self.stress.shape[0])

    @classmethod
    def equilibrium(cls, density, dim=2, time=0.0):
        rho = np.asarray(density, dtype=float)
        return cls(rho, identity_components(dim, rho.shape) * rho, time)

    def full_stress(self):
        return to_full(self.stress)

    def trace(self):
        return sum(self.stress[k] for k, (i, j) in enumerate(sym_index(self.dim)) if i == j)


@dataclass(frozen=True)
class FlowStep:
    """Everything the solute needs about one fluid step ``t_n -> t_{n+1}``.

    The advective transport uses the end-of-step face fluxes relative to the
    mesh motion; at the flexible wall these vanish identically because the
    wall velocity equals the mesh velocity there.
    """

    disc_old: object
    disc_new: object
    flux_x: np.ndarray
    flux_z_rel: np.ndarray
    grad_u_old: np.ndarray
    grad_u_new: np.ndarray

    @classmethod
    def between(cls, fluid_old, fluid_new, dt):
        W = fluid_new.disc.mesh_flux(fluid_old.disc, dt)
        return cls(fluid_old.disc, fluid_new.disc, fluid_new.flux_x, fluid_new.flux_z - W,
                   fluid_old.velocity_gradient(), fluid_new.velocity_gradient())

    @classmethod
    def frozen(cls, fluid):
        G = fluid.velocity_gradient()
        return cls(fluid.disc, fluid.disc, fluid.flux_x, fluid.flux_z, G, G)

    def courant(self, dt):
        g = self.disc_new.grid
        return dt * (float(np.max(np.abs(self.flux_x))) / g.hx
                     + float(np.max(np.abs(self.flux_z_rel))) / g.hz) / float(np.min(self.disc_new.J))


def _homogeneous_grad(grad_u, dim):
    if grad_u is None:
        z = np.zeros((dim, dim))
        return z, z
    if isinstance(grad_u, tuple):
        return np.asarray(grad_u[0], dtype=float), np.asarray(grad_u[1], dtype=float)
    G = np.asarray(grad_u, dtype=float)
    return G, G


def _expand(G, shape):
    G = np.asarray(G, dtype=float)
    extra = len(shape) - (G.ndim - 2)
    return G.reshape(G.shape[:2] + (1,) * extra + G.shape[2:]) if extra > 0 else G


def _upper_convected(T_sym, G, rho):
    """``G T + T G^T + 2 rho I`` in component storage."""
    T = to_full(T_sym)
    G = _expand(G, T.shape[2:])
    GT = np.einsum("ik...,kj...->ij...", G, T)
    src = GT + np.swapaxes(GT, 0, 1)
    d = T.shape[0]
    for i in range(d):
        src[i, i] = src[i, i] + 2.0 * rho
    return from_full(src, check=False)


def _diffusion_factor(disc, dt, relax, key):
    """LU of ``J (1 + relax dt) - (dt/2) L`` with zero-flux walls."""
    Lc = disc.split(disc.laplacian(NEUMANN))[0]

    def matrix():
        return sp.diags(disc.J.ravel() * (1.0 + relax * dt)) - 0.5 * dt * Lc
    return disc.factor((key, dt), matrix), Lc


def step_density(state, dt, flow=None, tol_pos=1e-10, cfl_limit=0.5):
    """One density step; returns a new state with only ``density`` updated."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if flow is None:
        return replace(state, time=state.time + dt)
    _check_cfl(flow, dt, cfl_limit)
    old, new = flow.disc_old, flow.disc_new
    g = new.grid
    rho = state.density
    lu, _ = _diffusion_factor(new, dt, 0.0, "rho")
    L_old = old.split(old.laplacian(NEUMANN))[0]
    rhs = (old.J * rho).ravel() + 0.5 * dt * (L_old @ rho.ravel())
    rhs -= dt * _advection(new, new.ext(rho), flow.flux_x, flow.flux_z_rel).ravel()
    rho_new = lu.solve(rhs).reshape(g.shape)
    lo = float(np.min(rho_new))
    if lo < -tol_pos:
        raise NegativeDensity(f"min density {lo:.3e} below -{tol_pos:g}")
    return replace(state, density=rho_new, time=state.time + dt)


def _check_cfl(flow, dt, limit):
    from .errors import CFLViolation
    c = flow.courant(dt)
    if c > limit:
        raise CFLViolation(f"Courant number {c:.4g} exceeds {limit}", courant=c, limit=limit)


def step_stress(state, dt, flow=None, grad_u=None, density_new=None, cfl_limit=0.5):
    """One Heun / Crank-Nicolson step for the extra stress.

    ``density_new`` is rho at the end of the step (defaults to the current
    density). In homogeneous mode ``grad_u`` is a (d, d) array or a pair
    ``(grad_old, grad_new)``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    T0 = state.stress
    rho0 = state.density
    rho1 = rho0 if density_new is None else np.asarray(density_new, dtype=float)
    d = state.dim
    if flow is None:
        G0, G1 = _homogeneous_grad(grad_u, d)
        E0 = _upper_convected(T0, G0, rho0)
        I0 = -2.0 * T0
        Ts = (T0 + 0.5 * dt * I0 + dt * E0) / (1.0 + dt)
        E1 = _upper_convected(Ts, G1, rho1)
        T1 = (T0 + 0.5 * dt * I0 + 0.5 * dt * (E0 + E1)) / (1.0 + dt)
        return replace(state, stress=T1, time=state.time + dt)

    _check_cfl(flow, dt, cfl_limit)
    old, new = flow.disc_old, flow.disc_new
    g = new.grid
    lu, _ = _diffusion_factor(new, dt, 1.0, "stress")
    L_old = old.split(old.laplacian(NEUMANN))[0]

    def explicit(T, G, rho, disc):
        src = disc.J * _upper_convected(T, G, rho)
        for k in range(T.shape[0]):
            src[k] -= _advection(new, new.ext(T[k]), flow.flux_x, flow.flux_z_rel)
        return src

    base = np.empty_like(T0)
    for k in range(T0.shape[0]):
        base[k] = (old.J * T0[k] + 0.5 * dt * ((L_old @ T0[k].ravel()).reshape(g.shape)
                                              - 2.0 * old.J * T0[k]))
    E0 = explicit(T0, flow.grad_u_old, rho0, old)
    Ts = np.stack([lu.solve((base[k] + dt * E0[k]).ravel()).reshape(g.shape) for k in range(T0.shape[0])])
    E1 = explicit(Ts, flow.grad_u_new, rho1, new)
    T1 = np.stack([lu.solve((base[k] + 0.5 * dt * (E0[k] + E1[k])).ravel()).reshape(g.shape)
                   for k in range(T0.shape[0])])
    return replace(state, stress=T1, time=state.time + dt)


def step_solute(state, dt, flow=None, grad_u=None, tol_pos=1e-10, cfl_limit=0.5):
    """Density then stress, the stress step using the updated density."""
    mid = step_density(state, dt, flow, tol_pos=tol_pos, cfl_limit=cfl_limit)
    out = step_stress(state, dt, flow, grad_u, density_new=mid.density, cfl_limit=cfl_limit)
    return replace(out, density=mid.density)


@dataclass(frozen=True)
class PositivityReport:
    min_density: float
    min_density_at: tuple
    min_eigenvalue: float
    min_eigenvalue_at: tuple


def check_positivity(state):
    """Pointwise minima of rho and of the smallest eigenvalue of T."""
    rho = np.atleast_1d(state.density)
    T = to_full(state.stress.reshape((state.stress.shape[0],) + rho.shape))
    mats = np.moveaxis(T, (0, 1), (-2, -1))
    eig = np.linalg.eigvalsh(mats)[..., 0]
    i_rho = np.unravel_index(int(np.argmin(rho)), rho.shape)
    i_eig = np.unravel_index(int(np.argmin(eig)), eig.shape)
    return PositivityReport(float(rho[i_rho]), tuple(int(i) for i in i_rho),
                            float(eig[i_eig]), tuple(int(i) for i in i_eig))


def total_mass(state, disc=None):
    if disc is None:
        return float(np.mean(state.density))
    return float(disc.integrate(state.density))


def trace_identity_residual(old, new, dt, flow=None, grad_u=None):
    """Discrete residual of ``1/2 d/dt int tr T + int tr T - int T:grad u - d int rho``.

    Time derivative by difference, the other terms by the trapezoid rule on
    the two states; integrals are J-weighted (mean value in homogeneous mode).
    """
    d = old.dim
    if flow is None:
        G0, G1 = _homogeneous_grad(grad_u, d)

        def integ(f, which):
            return float(np.mean(f))
    else:
        G0, G1 = flow.grad_u_old, flow.grad_u_new
        discs = (flow.disc_old, flow.disc_new)

        def integ(f, which):
            return float(discs[which].integrate(f))

    def terms(state, G, which):
        T = state.full_stress()
        Gx = _expand(G, T.shape[2:])
        work = np.einsum("ij...,ij...->...", T, Gx * np.ones_like(T))
        return (integ(state.trace(), which), integ(work, which), integ(state.density, which))

    tr0, w0, m0 = terms(old, G0, 0)
    tr1, w1, m1 = terms(new, G1, 1)
    return (0.5 * (tr1 - tr0) / dt + 0.5 * (tr0 + tr1) - 0.5 * (w0 + w1) - d * 0.5 * (m0 + m1))
