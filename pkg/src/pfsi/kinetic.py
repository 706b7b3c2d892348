"""Hookean-dumbbell Fokker-Planck solver on a truncated configuration box.

The configuration operator ``div_q(M grad_q(f / M))`` is discretized in the
conservative form with face fluxes

    F_{i+1/2} = -(M_{i+1/2} / dq) (f_{i+1} / M_{i+1} - f_i / M_i),

with the exact Gaussian at the face. Because ``M`` is a product of 1D
Gaussians the operator is a Kronecker sum of 1D operators, annihilates the
sampled Maxwellian exactly and conserves mass (zero flux at the box boundary).
The drift ``div_q((grad u) q f)`` is explicit, central and conservative; the
configuration diffusion is backward Euler.
"""
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp
from scipy.special import erf

from .errors import CFLViolation, NegativeDensity, TruncationTooSmall
from .solute import sym_index, to_full


@dataclass(frozen=True)
class ConfigurationGrid:
    """Cell-centred grid on ``[-Q, Q]^d`` with ``q_resolution`` points per axis."""

    q_extent: float = 6.0
    q_resolution: int = 64
    dim: int = 2

    @property
    def spacing(self):
        return 2.0 * self.q_extent / self.q_resolution

    @property
    def centers(self):
        return -self.q_extent + (np.arange(self.q_resolution) + 0.5) * self.spacing

    @property
    def faces(self):
        """Interior faces only (the box boundary carries zero flux)."""
        return -self.q_extent + np.arange(1, self.q_resolution) * self.spacing

    @property
    def cell_volume(self):
        return self.spacing**self.dim

    @property
    def shape(self):
        return (self.q_resolution,) * self.dim

    def mesh(self):
        return np.meshgrid(*([self.centers] * self.dim), indexing="ij")

    def tail_mass(self):
        """Gaussian probability outside the box."""
        return 1.0 - erf(self.q_extent / np.sqrt(2.0)) ** self.dim


@dataclass(frozen=True)
class MaxwellianModel:
    grid: ConfigurationGrid
    maxwellian: np.ndarray
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def potential(self, q):
        q = np.asarray(q, dtype=float)
        return 0.5 * np.sum(q * q, axis=0)

    def second_moment(self):
        return close_moments(ProbabilityDensity(self.maxwellian), self)[1]


def build_maxwellian(grid, tail_tol=1e-6):
    """Discretely normalized Gaussian on ``grid``.

    Raises TruncationTooSmall when the Gaussian mass outside the box exceeds
    ``tail_tol``.
    """
    tail = grid.tail_mass()
    if tail > tail_tol:
        raise TruncationTooSmall(f"Gaussian mass outside [-Q, Q]^d is {tail:.3g} > {tail_tol:g}")
    m = np.exp(-0.5 * grid.centers**2)
    M = m
    for _ in range(grid.dim - 1):
        M = np.multiply.outer(M, m)
    M = M / (M.sum() * grid.cell_volume)
    return MaxwellianModel(grid, M)


@dataclass(frozen=True)
class ProbabilityDensity:
    """``f`` on the configuration grid, optionally with a leading periodic x-axis.

    ``x_period`` is None for the homogeneous setting; otherwise ``values`` has
    shape ``(nx,) + q_shape`` on a uniform periodic grid of that period.
    """

    values: np.ndarray
    time: float = 0.0
    x_period: float = None

    @property
    def resolved(self):
        return self.x_period is not None


def _q_operator_1d(grid):
    """1D configuration operator (sparse, nq x nq)."""
    n = grid.q_resolution
    dq = grid.spacing
    m = np.exp(-0.5 * grid.centers**2)
    mf = np.exp(-0.5 * grid.faces**2)
    c = mf / dq**2
    main = np.zeros(n)
    # face between i and i+1 with coefficient c_i contributes to rows i and i+1
    main[:-1] -= c / m[:-1]
    main[1:] -= c / m[1:]
    upper = c / m[1:]      # row i, column i+1
    lower = c / m[:-1]     # row i+1, column i
    return sp.diags([lower, main, upper], [-1, 0, 1], format="csr")


def configuration_operator(grid):
    """``div_q(M grad_q(f/M))`` on the full q-grid as a Kronecker sum."""
    L1 = _q_operator_1d(grid)
    n = grid.q_resolution
    eye = sp.identity(n, format="csr")
    total = None
    for k in range(grid.dim):
        term = None
        for ax in range(grid.dim):
            piece = L1 if ax == k else eye
            term = piece if term is None else sp.kron(term, piece, format="csr")
        total = term if total is None else total + term
    return total.tocsr()


def _periodic_laplacian(n, h):
    e = np.ones(n)
    L = sp.diags([e[:-1], -2 * e, e[:-1]], [-1, 0, 1], format="lil")
    L[0, n - 1] = 1.0
    L[n - 1, 0] = 1.0
    return (L / h**2).tocsr()


def _drift(f, grid, G, qaxis0):
    """``-div_q((G q) f)`` with central face averages and zero boundary flux.

    ``G`` is (d, d) or (d, d, nx) when an x-axis leads ``f``.
    """
    d = grid.dim
    dq = grid.spacing
    qc = grid.centers
    qf = grid.faces
    out = np.zeros_like(f)
    for k in range(d):
        ax = qaxis0 + k
        n = f.shape[ax]
        lo = [slice(None)] * f.ndim
        hi = [slice(None)] * f.ndim
        lo[ax] = slice(0, n - 1)
        hi[ax] = slice(1, n)
        favg = 0.5 * (f[tuple(lo)] + f[tuple(hi)])
        vel = np.zeros(favg.shape)
        for l in range(d):
            g = G[k, l]
            if np.ndim(g) and qaxis0:
                g = np.asarray(g).reshape((-1,) + (1,) * d)
            if not np.any(g):
                continue
            shape = [1] * f.ndim
            if l == k:
                shape[ax] = n - 1
                coord = qf.reshape(shape)
            else:
                shape[qaxis0 + l] = qc.size
                coord = qc.reshape(shape)
            vel = vel + g * coord
        flux = vel * favg
        pad = [(0, 0)] * f.ndim
        pad[ax] = (1, 1)
        flux = np.pad(flux, pad)
        a = [slice(None)] * f.ndim
        b = [slice(None)] * f.ndim
        a[ax] = slice(1, None)
        b[ax] = slice(0, -1)
        out -= (flux[tuple(a)] - flux[tuple(b)]) / dq
    return out


def _solver(model, dt, nx=None, x_spacing=None):
    key = ("lu", dt, nx, x_spacing)
    if key not in model._cache:
        Lq = configuration_operator(model.grid)
        nq = Lq.shape[0]
        if nx is None:
            A = sp.identity(nq, format="csc") - dt * Lq
        else:
            Lx = _periodic_laplacian(nx, x_spacing)
            A = (sp.identity(nx * nq) - dt * (sp.kron(sp.identity(nx), Lq) + sp.kron(Lx, sp.identity(nq))))
        model._cache[key] = spla.splu(A.tocsc())
    return model._cache[key]


def step_fokker_planck(f, model, grad_u, dt, velocity=None, tol=1e-8, cfl_limit=0.5):
    """One step of the Fokker-Planck equation.

    Homogeneous mode: ``grad_u`` is (d, d). Resolved mode: ``grad_u`` is
    (d, d) or (d, d, nx) and ``velocity`` (nx,) the transport speed along the
    periodic x-axis. Negative values below ``-tol * max f`` raise.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    grid = model.grid
    G = np.asarray(grad_u, dtype=float)
    vals = f.values
    speed = float(np.max(np.abs(G))) * grid.q_extent * grid.dim
    if speed * dt / grid.spacing > cfl_limit:
        c = speed * dt / grid.spacing
        raise CFLViolation(f"configuration-space Courant number {c:.3g}", courant=c, limit=cfl_limit)
    if not f.resolved:
        rhs = vals + dt * _drift(vals, grid, G, 0)
        new = _solver(model, dt).solve(rhs.ravel()).reshape(vals.shape)
    else:
        nx = vals.shape[0]
        hx = f.x_period / nx
        rhs = vals + dt * _drift(vals, grid, G, 1)
        if velocity is not None:
            u = np.asarray(velocity, dtype=float)
            if float(np.max(np.abs(u))) * dt / hx > cfl_limit:
                c = float(np.max(np.abs(u))) * dt / hx
                raise CFLViolation(f"x Courant number {c:.3g}", courant=c, limit=cfl_limit)
            uf = 0.5 * (u + np.roll(u, -1))
            shape = (nx,) + (1,) * grid.dim
            flux = uf.reshape(shape) * 0.5 * (vals + np.roll(vals, -1, axis=0))
            rhs -= dt * (flux - np.roll(flux, 1, axis=0)) / hx
        new = _solver(model, dt, nx, hx).solve(rhs.ravel()).reshape(vals.shape)
    lo = float(np.min(new))
    if lo < -tol * float(np.max(new)):
        raise NegativeDensity(f"kinetic density reached {lo:.3e}")
    return replace(f, values=new, time=f.time + dt)


def close_moments(f, model):
    """Zeroth and second configuration moments ``(rho, T)`` per x-point.

    T is returned in upper-triangle storage (ncomp, ...).
    """
    grid = model.grid
    vals = f.values if isinstance(f, ProbabilityDensity) else np.asarray(f, dtype=float)
    d = grid.dim
    qaxes = tuple(range(vals.ndim - d, vals.ndim))
    dV = grid.cell_volume
    rho = vals.sum(axis=qaxes) * dV
    Q = grid.mesh()
    comps = [(vals * Q[i] * Q[j]).sum(axis=qaxes) * dV for i, j in sym_index(d)]
    return rho, np.stack(comps)


def probability_mass(f, model):
    vals = f.values
    m = vals.sum() * model.grid.cell_volume
    if f.resolved:
        m *= f.x_period / vals.shape[0]
    return float(m)


def gaussian_density(model, covariance, mass=1.0):
    """Discretely normalized centred Gaussian with the given covariance."""
    grid = model.grid
    C = np.asarray(covariance, dtype=float)
    Ci = np.linalg.inv(C)
    Q = np.stack(grid.mesh())
    quad = np.einsum("i...,ij,j...->...", Q, Ci, Q)
    g = np.exp(-0.5 * quad)
    g *= mass / (g.sum() * grid.cell_volume)
    return ProbabilityDensity(g)


def _trajectory(f0, model, grad_u, dt, steps):
    f = f0
    rhos, Ts, ts = [], [], []
    for k in range(steps + 1):
        rho, T = close_moments(f, model)
        rhos.append(rho)
        Ts.append(T)
        ts.append(f.time)
        if k < steps:
            f = step_fokker_planck(f, model, grad_u, dt)
    return np.array(ts), np.array(rhos), np.array(Ts), f


def calibrate_relaxation(model, dt, horizon=2.0, skip=0.25):
    """Fit the relaxation rate of ``T - rho I`` from an anisotropic Gaussian.

    Runs the unforced kinetic equation from covariance ``diag(2, 1, ...)`` and
    fits ``log(T_11 - rho)`` linearly after ``skip`` time units.
    """
    d = model.grid.dim
    cov = np.eye(d)
    cov[0, 0] = 2.0
    f0 = gaussian_density(model, cov)
    steps = int(round(horizon / dt))
    t, rho, T, _ = _trajectory(f0, model, np.zeros((d, d)), dt, steps)
    dev = T[:, 0] - rho
    mask = t >= skip
    slope = np.polyfit(t[mask], np.log(dev[mask]), 1)[0]
    return float(-slope)


@dataclass(frozen=True)
class ClosureReport:
    kappa: float
    max_relative_error: float
    max_residual: float
    density_drift: float
    times: np.ndarray
    kinetic_stress: np.ndarray
    macroscopic_stress: np.ndarray


def closed_stress_ode(T0, rho, grad_u, kappa, times):
    """High-order integration of ``T' = G T + T G^T - kappa (T - rho I)``."""
    G = np.asarray(grad_u, dtype=float)
    d = G.shape[0]
    I = np.eye(d)

    def rhs(t, y):
        T = y.reshape(d, d)
        return (G @ T + T @ G.T - kappa * (T - rho * I)).ravel()

    sol = solve_ivp(rhs, (times[0], times[-1]), np.asarray(T0, float).ravel(), method="DOP853",
                    t_eval=times, rtol=1e-12, atol=1e-14)
    return np.moveaxis(sol.y.reshape(d, d, -1), -1, 0)


def verify_closure(model, f0, grad_u, dt, steps, kappa=None):
    """Compare kinetic moments against the closed macroscopic stress ODE."""
    G = np.asarray(grad_u, dtype=float)
    if kappa is None:
        kappa = calibrate_relaxation(model, dt)
    t, rho, T, _ = _trajectory(f0, model, G, dt, steps)
    Tfull = np.stack([to_full(Tk) for Tk in T])
    ode = closed_stress_ode(Tfull[0], float(rho[0]), G, kappa, t)
    scale = np.max(np.abs(ode), axis=(1, 2))
    rel = float(np.max(np.max(np.abs(Tfull - ode), axis=(1, 2)) / scale))
    d = G.shape[0]
    mid = 0.5 * (Tfull[1:] + Tfull[:-1])
    rmid = 0.5 * (rho[1:] + rho[:-1])
    rate = (Tfull[1:] - Tfull[:-1]) / dt
    model_rate = (np.einsum("ik,nkj->nij", G, mid) + np.einsum("nik,jk->nij", mid, G)
                  - kappa * (mid - rmid[:, None, None] * np.eye(d)))
    resid = float(np.max(np.abs(rate - model_rate))) if steps else 0.0
    drift = float(np.max(np.abs(rho - rho[0])) / abs(rho[0]))
    return ClosureReport(kappa, rel, resid, drift, t, Tfull, ode)


def closure_stress(model, f):
    """Second moment as a full tensor (d, d, ...)."""
    return to_full(close_moments(f, model)[1])
