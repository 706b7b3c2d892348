"""Partitioned coupling of solvent, structure and solute.

Within a time window the solute trajectory is the fixed-point unknown:
a given ``(rho, T)`` trajectory drives the solvent-structure problem, whose
motion then drives the solute problem. Successive solute iterates are
compared in the norm ``sqrt(sup_t |d|_L2^2 + int |grad d|_L2^2 dt)`` on the
current iterate's domain; both iterates are stored on the reference grid, so
the comparison is the pullback of one domain onto the other.

Windows are chained by :func:`run_global`, which halves the window on
``NoContraction`` and grows it back after successful windows.
"""
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import fourier
from .errors import NoContraction, TubeBreach
from .fluid import FluidState, compute_structure_traction, step_fluid, wall_stress
from .geometry import deformed_boundary
from .mesh import NEUMANN, ChannelGrid, Discretization
from .shell import StructureLoad, StructureState, step_shell
from .solute import FlowStep, SoluteState, step_solute, to_full


@dataclass(frozen=True)
class Forcing:
    """Body forces: ``fluid(t, X, Z) -> (2, nx, nz)`` and ``shell(t, y) -> (n,)``."""

    fluid: object = None
    shell: object = None

    def fluid_force(self, t, disc):
        if self.fluid is None:
            return None
        X, Z = disc.physical_centers
        return np.asarray(self.fluid(t, X, Z), dtype=float)

    def shell_force(self, t, y):
        if self.shell is None:
            return np.zeros_like(y)
        return np.broadcast_to(np.asarray(self.shell(t, y), dtype=float), y.shape).copy()


@dataclass(frozen=True)
class CoupledProblem:
    """Static description of a coupled run: geometry, grid and forcing."""

    geometry: object
    grid: ChannelGrid
    forcing: Forcing = Forcing()
    viscosity: float = 1.0
    tube_fraction: float = 0.95
    cfl_limit: float = 0.5

    @property
    def tube_limit(self):
        return self.tube_fraction * self.geometry.tube_halfwidth

    @property
    def structure_mesh(self):
        return self.grid.x_nodes

    def discretization(self, eta):
        return Discretization(self.grid, self.geometry, eta)


@dataclass(frozen=True)
class CoupledState:
    structure: StructureState
    fluid: FluidState
    solute: SoluteState
    time: float = 0.0

    @property
    def map(self):
        return self.fluid.disc.hmap

    @property
    def disc(self):
        return self.fluid.disc

    @classmethod
    def initial(cls, problem, eta0=None, velocity0=None, density=None, stress=None, fluid_velocity=None):
        """Consistent initial state; the fluid field is projected onto the constraint."""
        g = problem.grid
        n = g.nx
        eta = np.zeros(n) if eta0 is None else np.asarray(eta0, dtype=float)
        vel = np.zeros(n) if velocity0 is None else np.asarray(velocity0, dtype=float)
        vel = vel - vel.mean()
        structure = StructureState(eta, vel, (g.extent[0],))
        disc = problem.discretization(eta)
        vc = fourier.shift(vel, g.extent[0], 0.5 * g.hx)
        wall_top = np.stack([np.zeros(n), vc])
        if fluid_velocity is None:
            fluid = FluidState.rest(disc)
            fluid = replace(fluid, wall_top=wall_top)
        else:
            from .fluid import project_divergence_free
            fluid = FluidState.from_velocity(disc, fluid_velocity, wall_top=wall_top)
            Vx, Vz, _ = project_divergence_free(disc, fluid.flux_x, fluid.flux_z)
            fluid = replace(fluid, flux_x=Vx, flux_z=Vz)
        rho = np.ones(g.shape) if density is None else np.broadcast_to(density, g.shape).astype(float)
        if stress is None:
            solute = SoluteState.equilibrium(rho, 2)
        else:
            solute = SoluteState(rho, np.asarray(stress, dtype=float))
        return cls(structure, fluid, solute, 0.0)


@dataclass(frozen=True)
class FixedPointConfig:
    window_length: float = 0.05
    y_norm_tolerance: float = 1e-8
    max_iterations: int = 25
    relaxation: float = 1.0
    ball_radius: float = math.inf
    min_relaxation: float = 1.0 / 64.0
    contraction_margin: float = 0.0

    def __post_init__(self):
        if self.window_length <= 0:
            raise ValueError("window_length must be positive")
        if not 0.0 < self.relaxation <= 1.0:
            raise ValueError("relaxation must lie in (0, 1]")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass
class MotionTrajectory:
    structures: list
    fluids: list
    loads: list


@dataclass
class SoluteTrajectory:
    states: list

    def density(self):
        return np.stack([s.density for s in self.states])

    def stress(self):
        return np.stack([s.stress for s in self.states])


@dataclass(frozen=True)
class YNorm:
    """``sqrt(sup_t |d|^2 + int |grad d|^2 dt)`` and its two parts."""

    value: float
    sup_l2: float
    int_h1: float


def y_norm(a, b, discs, dt):
    """Y-norm of the difference of two solute trajectories (or of ``a`` if ``b`` is None)."""
    sup = 0.0
    integral = 0.0
    for k, disc in enumerate(discs):
        fields = [a.states[k].density] + list(a.states[k].stress)
        if b is not None:
            other = [b.states[k].density] + list(b.states[k].stress)
            fields = [x - y for x, y in zip(fields, other)]
        l2 = sum(float(disc.integrate(f * f)) for f in fields)
        grad = sum(float(disc.integrate(np.sum(disc.gradient(f, NEUMANN) ** 2, axis=0))) for f in fields)
        sup = max(sup, l2)
        weight = 0.5 if k in (0, len(discs) - 1) else 1.0
        integral += weight * dt * grad
    return YNorm(math.sqrt(sup + integral), sup, integral)


def _wall_load(problem, structure, fluid, stress_full, t_mid):
    g = problem.grid
    P = g.extent[0]
    xc = g.x_centers
    S = wall_stress(fluid, None if stress_full is None else stress_full, problem.viscosity)
    boundary = deformed_boundary(fluid.disc.hmap, xc[:, None])
    traction_c = compute_structure_traction(S, boundary)
    traction = fourier.shift(traction_c, P, -0.5 * g.hx)
    total = problem.forcing.shell_force(t_mid, g.x_nodes) + traction
    return total - total.mean()


def solvent_structure_step(problem, structure, fluid, stress_now, stress_next, dt):
    """One coupled shell + fluid step with the extra stress given at both ends."""
    g = problem.grid
    t0 = structure.time
    load = _wall_load(problem, structure, fluid, stress_now, t0 + 0.5 * dt)
    new_structure = step_shell(structure, StructureLoad(load), dt, tube_limit=problem.tube_limit)
    disc_new = problem.discretization(new_structure.displacement)
    rate = (new_structure.displacement - structure.displacement) / dt
    vc = fourier.shift(rate, g.extent[0], 0.5 * g.hx)
    wall_top = np.stack([np.zeros(g.nx), vc - vc.mean()])
    force = problem.forcing.fluid_force(t0 + dt, disc_new)
    new_fluid = step_fluid(fluid, dt, disc_new, wall_top=wall_top, body_force=force,
                           extra_stress=stress_next, viscosity=problem.viscosity,
                           cfl_limit=problem.cfl_limit)
    return new_structure, new_fluid, load


def solve_solvent_structure_window(problem, given, state, steps, dt):
    """Shell + fluid trajectory over ``steps`` steps with the solute trajectory frozen."""
    structures = [state.structure]
    fluids = [state.fluid]
    loads = []
    for k in range(steps):
        Tk = to_full(given.states[k].stress)
        Tn = to_full(given.states[k + 1].stress)
        s, f, load = solvent_structure_step(problem, structures[-1], fluids[-1], Tk, Tn, dt)
        structures.append(s)
        fluids.append(f)
        loads.append(load)
    return MotionTrajectory(structures, fluids, loads)


def solve_solute_window(motion, state, dt, cfl_limit=0.5):
    """Solute trajectory driven by a frozen motion."""
    states = [state.solute]
    for k in range(len(motion.fluids) - 1):
        flow = FlowStep.between(motion.fluids[k], motion.fluids[k + 1], dt)
        states.append(step_solute(states[-1], dt, flow, cfl_limit=cfl_limit))
    return SoluteTrajectory(states)


def _blend(old, new, theta):
    if theta == 1.0:
        return new
    states = [replace(b, density=a.density + theta * (b.density - a.density),
                      stress=a.stress + theta * (b.stress - a.stress))
              for a, b in zip(old.states, new.states)]
    states[0] = new.states[0]
    return SoluteTrajectory(states)


@dataclass
class WindowReport:
    t_start: float
    t_end: float
    steps: int
    iterations: int
    differences: list
    ratios: list
    relaxation: float
    converged: bool
    iterate_norm: float
    ball_radius: float

    @property
    def max_ratio(self):
        return max(self.ratios) if self.ratios else 0.0

    def to_json(self):
        return json.dumps({
            "t_start": self.t_start, "t_end": self.t_end, "steps": self.steps,
            "iterations": self.iterations, "differences": self.differences,
            "ratios": self.ratios, "relaxation": self.relaxation,
            "converged": self.converged, "iterate_norm": self.iterate_norm,
            "inside_ball": self.iterate_norm <= self.ball_radius,
        })


@dataclass
class WindowResult:
    state: CoupledState
    motion: MotionTrajectory
    solute: SoluteTrajectory
    report: WindowReport

    def states(self):
        """Coupled state at every step of the window."""
        return [CoupledState(s, f, c, s.time)
                for s, f, c in zip(self.motion.structures, self.motion.fluids, self.solute.states)]


def fixed_point_window(problem, state, cfg, dt, steps=None):
    """Converge the window fixed point and return the end-of-window state.

    The relaxation is halved whenever the difference grows; NoContraction is
    raised when ``max_iterations`` pass without meeting the tolerance.
    """
    if steps is None:
        steps = max(1, int(round(cfg.window_length / dt)))
    iterate = SoluteTrajectory([replace(state.solute, time=state.time + k * dt) for k in range(steps + 1)])
    theta = cfg.relaxation
    diffs, ratios = [], []
    for it in range(1, cfg.max_iterations + 1):
        motion = solve_solvent_structure_window(problem, iterate, state, steps, dt)
        fresh = solve_solute_window(motion, state, dt, problem.cfl_limit)
        discs = [f.disc for f in motion.fluids]
        diff = y_norm(fresh, iterate, discs, dt).value
        scale = max(1.0, y_norm(fresh, None, discs, dt).value)
        if diffs and diffs[-1] > 0:
            ratios.append(diff / diffs[-1])
            if ratios[-1] >= 1.0 - cfg.contraction_margin:
                theta *= 0.5
        diffs.append(diff)
        if diff <= cfg.y_norm_tolerance * scale:
            end = CoupledState(motion.structures[-1], motion.fluids[-1], fresh.states[-1],
                               motion.structures[-1].time)
            report = WindowReport(state.time, end.time, steps, it, diffs, ratios, theta, True,
                                  scale, cfg.ball_radius)
            return WindowResult(end, motion, fresh, report)
        if theta < cfg.min_relaxation:
            break
        iterate = _blend(iterate, fresh, theta)
    raise NoContraction(f"window at t={state.time:.6g} did not converge in {len(diffs)} iterations",
                        ratios=ratios)


@dataclass
class RunResult:
    final: CoupledState
    windows: list
    status: str
    message: str = ""
    breach: dict = field(default_factory=dict)
    step_callback_count: int = 0


def run_global(problem, initial, horizon, cfg, dt, on_step=None, on_window=None, max_halvings=8):
    """Chain fixed-point windows up to ``horizon``.

    ``on_step(prev, new, dt)`` is called for every accepted step and
    ``on_window(report)`` for every accepted window. A TubeBreach ends the run
    with status ``"tube_breach"``; the last accepted state is returned.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    state = initial
    window = cfg.window_length
    windows = []
    successes = 0
    total_steps = int(round(horizon / dt))
    done = 0
    count = 0
    while done < total_steps:
        steps = min(max(1, int(round(window / dt))), total_steps - done)
        try:
            result = fixed_point_window(problem, state, cfg, dt, steps)
        except NoContraction:
            window *= 0.5
            successes = 0
            if window < dt or window < cfg.window_length / 2**max_halvings:
                raise
            continue
        except TubeBreach as exc:
            return RunResult(state, windows, "tube_breach", str(exc),
                             {"max_displacement": exc.max_displacement, "limit": exc.limit,
                              "time": state.time}, count)
        step_states = result.states()
        if on_step is not None:
            for prev, new in zip(step_states[:-1], step_states[1:]):
                on_step(prev, new, dt)
                count += 1
        windows.append(result.report)
        if on_window is not None:
            on_window(result.report)
        state = result.state
        done += steps
        successes += 1
        if successes >= 2 and window < cfg.window_length:
            window = min(2 * window, cfg.window_length)
            successes = 0
    return RunResult(state, windows, "completed", "", {}, count)


def interface_residual(structure_old, structure_new, fluid, dt):
    """max |u_wall - (d eta / dt) n| at the wall-face centres."""
    g = fluid.disc.grid
    rate = (structure_new.displacement - structure_old.displacement) / dt
    vc = fourier.shift(rate, g.extent[0], 0.5 * g.hx)
    return float(max(np.max(np.abs(fluid.wall_top[0])), np.max(np.abs(fluid.wall_top[1] - vc))))
