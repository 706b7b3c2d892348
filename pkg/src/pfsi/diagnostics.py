"""Ledgers of the energy balance, solute trace identity, mass, integrability
monitor and acceleration quantities of coupled runs.

Every spatial integral is J-weighted on the reference grid; shell integrals
use the uniform structure-mesh quadrature.
"""
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import shell as shell_mod
from .errors import InadmissibleExponents, ValidationError
from .mesh import NEUMANN
from .solute import FlowStep, sym_index, trace_identity_residual as _solute_trace_residual

ENERGY_COLUMNS = (
    "time", "kinetic", "shell_kinetic", "bending", "trace_mass", "energy",
    "dissipation_fluid", "dissipation_shell", "dissipation_trace",
    "input_fluid", "input_shell", "input_density",
    "cumulative_dissipation", "cumulative_input", "balance_residual",
)


def _shell_grad_sq(v, period):
    g = shell_mod.gradient(v, period)
    return float(np.sum(g**2)) * float(np.prod(period)) / v.size


def _shell_sq(v, period):
    return float(np.sum(v**2)) * float(np.prod(period)) / v.size


@dataclass
class EnergyLedger:
    """Rows of the energy balance, one per accepted step.

    ``energy = 1/2 (|u|^2 + |eta_t|^2 + |Lap eta|^2 + int tr T)``; the balance
    residual is ``E_{n+1} - E_n + dt (D - P)`` with the dissipation ``D`` and
    input ``P`` averaged by the trapezoid rule over the step.
    """

    dim: int = 2
    rows: list = field(default_factory=list)

    def terms(self, state, forcing=None):
        disc = state.fluid.disc
        s = state.structure
        P = s.period
        kinetic = state.fluid.kinetic_energy()
        shell_kin, bending = shell_mod.shell_energy(s)
        trace = float(disc.integrate(state.solute.trace()))
        d_fluid = state.fluid.dissipation()
        d_shell = shell_mod.dissipation(s.velocity, P)
        in_fluid = 0.0
        in_shell = 0.0
        if forcing is not None:
            f = forcing.fluid_force(state.time, disc)
            if f is not None:
                in_fluid = float(disc.integrate(np.sum(f * state.fluid.velocity, axis=0)))
            gforce = forcing.shell_force(state.time, np.arange(s.velocity.size) * P[0] / s.velocity.size)
            in_shell = float(np.sum(gforce * s.velocity)) * s.cell_area
        in_rho = self.dim * float(disc.integrate(state.solute.density))
        energy = kinetic + shell_kin + bending + 0.5 * trace
        return dict(time=state.time, kinetic=kinetic, shell_kinetic=shell_kin, bending=bending,
                    trace_mass=trace, energy=energy, dissipation_fluid=d_fluid,
                    dissipation_shell=d_shell, dissipation_trace=trace,
                    input_fluid=in_fluid, input_shell=in_shell, input_density=in_rho)

    def start(self, state, forcing=None):
        row = self.terms(state, forcing)
        row.update(cumulative_dissipation=0.0, cumulative_input=0.0, balance_residual=0.0)
        self.rows = [row]
        return self

    def sup_energy(self):
        return max(r["energy"] for r in self.rows)

    def cumulative_dissipation(self):
        return self.rows[-1]["cumulative_dissipation"] if self.rows else 0.0

    def as_array(self):
        return np.array([[r[c] for c in ENERGY_COLUMNS] for r in self.rows])


def _rate(row, kind):
    if kind == "D":
        return row["dissipation_fluid"] + row["dissipation_shell"] + row["dissipation_trace"]
    return row["input_fluid"] + row["input_shell"] + row["input_density"]


def update_energy(ledger, state, forcing, dt):
    """Append the row for ``state``, reached from the previous row in one step."""
    if not ledger.rows:
        raise ValueError("call EnergyLedger.start with the initial state first")
    prev = ledger.rows[-1]
    row = ledger.terms(state, forcing)
    D = 0.5 * (_rate(prev, "D") + _rate(row, "D"))
    Pin = 0.5 * (_rate(prev, "P") + _rate(row, "P"))
    row["cumulative_dissipation"] = prev["cumulative_dissipation"] + dt * D
    row["cumulative_input"] = prev["cumulative_input"] + dt * Pin
    row["balance_residual"] = row["energy"] - prev["energy"] + dt * (D - Pin)
    ledger.rows.append(row)
    return ledger


def data_size(initial, forcing, horizon, dt):
    """``E_w(data)``: initial energies, ``horizon * int rho_0`` and forcing L2 norms in time."""
    disc = initial.fluid.disc
    s = initial.structure
    P = s.period
    value = float(disc.integrate(initial.solute.trace()))
    value += float(disc.integrate(np.sum(initial.fluid.velocity**2, axis=0)))
    value += _shell_sq(s.velocity, P)
    value += _shell_sq(shell_mod.laplacian(s.displacement, P), P)
    value += horizon * float(disc.integrate(initial.solute.density))
    if forcing is not None:
        n = max(1, int(round(horizon / dt)))
        y = np.arange(s.velocity.size) * P[0] / s.velocity.size
        acc = 0.0
        for k in range(n + 1):
            t = k * dt
            w = 0.5 if k in (0, n) else 1.0
            f = forcing.fluid_force(t, disc)
            if f is not None:
                acc += w * float(disc.integrate(np.sum(f * f, axis=0)))
            acc += w * _shell_sq(forcing.shell_force(t, y), P)
        value += dt * acc
    return value


def energy_ratio(ledger, e_w):
    """``(sup_t E + cumulative dissipation) / E_w``."""
    if e_w <= 0:
        return 0.0
    return (ledger.sup_energy() + ledger.cumulative_dissipation()) / e_w


def trace_identity_residual(prev, new, dt):
    """Per-step residual of the integrated trace identity for two coupled states.

    Returned as ``|1/2 d(int tr T) + dt int tr T - dt int T:grad u - d dt int rho|``
    with time averages by the trapezoid rule.
    """
    flow = FlowStep.between(prev.fluid, new.fluid, dt)
    r = _solute_trace_residual(prev.solute, new.solute, dt, flow=flow)
    return abs(r) * dt


def mass_audit(state):
    """``(int rho, int tr T)`` over the deformed domain."""
    disc = state.fluid.disc
    return float(disc.integrate(state.solute.density)), float(disc.integrate(state.solute.trace()))


def _as_fraction(x):
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(str(x))


def lps_admissible(r, s):
    """Exact test of ``2/r + 3/s <= 1`` (``s`` may be ``math.inf``)."""
    total = Fraction(2) / _as_fraction(r)
    if not math.isinf(s):
        total += Fraction(3) / _as_fraction(s)
    return total <= 1


@dataclass
class LPSMonitor:
    """Running ``(int |u|_{L^s}^r dt)^{1/r}`` and the structure C^1 monitor."""

    r: float = 4.0
    s: float = 6.0
    strict: bool = False
    accumulated: float = 0.0
    values: list = field(default_factory=list)
    eta_max: float = 0.0
    grad_eta_max: float = 0.0

    def __post_init__(self):
        if not (2 <= self.r < math.inf):
            raise ValidationError("lps.r", "must lie in [2, inf)")
        if not self.s > 3:
            raise ValidationError("lps.s", "must lie in (3, inf]")
        self.admissible = lps_admissible(self.r, self.s)
        if self.strict and not self.admissible:
            raise InadmissibleExponents(f"2/{self.r} + 3/{self.s} > 1")

    @property
    def value(self):
        return self.accumulated ** (1.0 / self.r)


def spatial_norm(u, disc, s):
    """J-weighted ``L^s`` norm of ``|u|`` for a (2, nx, nz) field; ``s = inf`` is the max."""
    mag = np.sqrt(np.sum(np.asarray(u) ** 2, axis=0))
    if math.isinf(s):
        return float(np.max(mag))
    return float(disc.integrate(mag**s)) ** (1.0 / s)


def lps_update(monitor, fluid, dt, structure=None):
    """Accumulate one step (right-endpoint rule) and update the C^1 monitor."""
    norm = spatial_norm(fluid.velocity, fluid.disc, monitor.s)
    monitor.accumulated += dt * norm**monitor.r
    monitor.values.append(monitor.value)
    if structure is not None:
        eta = structure.displacement
        monitor.eta_max = max(monitor.eta_max, float(np.max(np.abs(eta))))
        grad = shell_mod.gradient(eta, structure.period)
        monitor.grad_eta_max = max(monitor.grad_eta_max, float(np.max(np.abs(grad))))
    return monitor


ACCELERATION_SUP = ("grad_u", "grad_eta_t", "grad_lap_eta")
ACCELERATION_INT = ("hess_u", "u_t", "grad_p", "lap_eta_t", "eta_tt", "bilap_eta", "rho_t", "stress_t")


@dataclass
class AccelerationLedger:
    sup: dict = field(default_factory=lambda: {k: 0.0 for k in ACCELERATION_SUP})
    integral: dict = field(default_factory=lambda: {k: 0.0 for k in ACCELERATION_INT})
    history: list = field(default_factory=list)


def _hessian_sq(disc, u):
    total = np.zeros(disc.grid.shape)
    for comp in u:
        g = disc.gradient(comp, NEUMANN)
        for gc in g:
            total += np.sum(disc.gradient(gc, NEUMANN) ** 2, axis=0)
    return float(disc.integrate(total))


def acceleration_update(ledger, prev, new, dt):
    """Add one step of the acceleration-bound quantities (finite differences in time)."""
    disc = new.fluid.disc
    P = new.structure.period
    s0, s1 = prev.structure, new.structure
    G = new.fluid.velocity_gradient()
    vals_sup = {
        "grad_u": float(disc.integrate(np.sum(G**2, axis=(0, 1)))),
        "grad_eta_t": _shell_grad_sq(s1.velocity, P),
        "grad_lap_eta": _shell_grad_sq(shell_mod.laplacian(s1.displacement, P), P),
    }
    for k, v in vals_sup.items():
        ledger.sup[k] = max(ledger.sup[k], v)
    ut = (new.fluid.velocity - prev.fluid.velocity) / dt
    gp = disc.gradient(new.fluid.pressure, NEUMANN)
    vals_int = {
        "hess_u": _hessian_sq(disc, new.fluid.velocity),
        "u_t": float(disc.integrate(np.sum(ut**2, axis=0))),
        "grad_p": float(disc.integrate(np.sum(gp**2, axis=0))),
        "lap_eta_t": _shell_sq(shell_mod.laplacian(s1.velocity, P), P),
        "eta_tt": _shell_sq((s1.velocity - s0.velocity) / dt, P),
        "bilap_eta": _shell_sq(shell_mod.bilaplacian(s1.displacement, P), P),
        "rho_t": float(disc.integrate(((new.solute.density - prev.solute.density) / dt) ** 2)),
        "stress_t": float(disc.integrate(np.sum(((new.solute.stress - prev.solute.stress) / dt) ** 2
                                                * _offdiag_weights(new.solute.stress.shape[0]), axis=0))),
    }
    for k, v in vals_int.items():
        ledger.integral[k] += dt * v
    ledger.history.append(dict(time=new.time, **{f"sup_{k}": ledger.sup[k] for k in ACCELERATION_SUP},
                               **{f"int_{k}": ledger.integral[k] for k in ACCELERATION_INT}))
    return ledger


def _offdiag_weights(ncomp):
    """Frobenius weights for upper-triangle storage (off-diagonal entries count twice)."""
    d = {3: 2, 6: 3}[ncomp]
    w = np.array([1.0 if i == j else 2.0 for i, j in sym_index(d)])
    return w.reshape((-1, 1, 1))
