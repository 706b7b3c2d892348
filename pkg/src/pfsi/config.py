"""Plain-text run configuration.

Format: ``key = value`` lines, optional ``[section]`` headers, ``#`` comments.
Keys are addressed as ``section.key`` (top-level keys have no prefix), which
is also the syntax of command-line overrides. Unknown keys are errors.

Defaults are layered: global defaults, then the scenario preset, then the
file, then overrides.
"""
import math
import typing
from dataclasses import asdict, dataclass, field, fields

from .errors import ParseError, ValidationError

SCENARIOS = ("rest", "taylor-green", "shell-relaxation", "shear-solute",
             "coupled-small-data", "tube-breach", "closure-verify")
CUTOFFS = ("plateau", "smoothstep", "linear")
DENSITY_PROFILES = ("uniform", "cosine", "random")
STRESS_PROFILES = ("equilibrium", "anisotropic")


@dataclass(frozen=True)
class GridConfig:
    nx: int = 32
    nz: int = 32
    structure_points: int = 32
    dim: int = 2


@dataclass(frozen=True)
class GeometryConfig:
    length: float = 1.0
    height: float = 1.0
    tube_halfwidth: float = 0.4
    cutoff: str = "plateau"
    tube_fraction: float = 0.95


@dataclass(frozen=True)
class TimeConfig:
    dt: float = 0.01
    horizon: float = 1.0
    window: float = 0.05


@dataclass(frozen=True)
class PhysicsConfig:
    viscosity: float = 1.0
    fluid_forcing: float = 0.0
    shell_forcing: float = 0.0
    forcing_mode: int = 1
    eta0_amplitude: float = 0.0
    shell_velocity_amplitude: float = 0.0
    fluid_initial: str = "rest"
    density_mean: float = 1.0
    density_profile: str = "uniform"
    density_amplitude: float = 0.2
    stress_profile: str = "equilibrium"
    shear_rate: float = 1.0


@dataclass(frozen=True)
class CouplingConfig:
    tolerance: float = 1e-8
    max_iterations: int = 25
    relaxation: float = 1.0
    ball_radius: float = math.inf
    cfl_limit: float = 0.5


@dataclass(frozen=True)
class LPSConfig:
    r: float = 4.0
    s: float = 6.0


@dataclass(frozen=True)
class KineticConfig:
    q_extent: float = 6.0
    q_resolution: int = 64
    shear_rate: float = 0.1
    threshold: float = 0.01


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "pfsi-output"
    snapshot_every: int = 0
    energy_ledger: bool = True
    acceleration_ledger: bool = True
    kinetic_snapshots: bool = False


@dataclass(frozen=True)
class RunConfig:
    scenario: str = "rest"
    seed: int = 0
    grid: GridConfig = field(default_factory=GridConfig)
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    coupling: CouplingConfig = field(default_factory=CouplingConfig)
    lps: LPSConfig = field(default_factory=LPSConfig)
    kinetic: KineticConfig = field(default_factory=KineticConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def to_dict(self):
        return asdict(self)


SECTIONS = {f.name: f.type for f in fields(RunConfig) if f.name not in ("scenario", "seed")}
_TOP = {"scenario": str, "seed": int}

# Scenario presets sit between the global defaults and the user's file.
SCENARIO_PRESETS = {
    "rest": {"physics.density_mean": "0.0", "time.horizon": "0.1"},
    "taylor-green": {"grid.nx": "64", "grid.nz": "64", "grid.structure_points": "64",
                     "time.dt": "0.002", "time.horizon": "0.5"},
    "shell-relaxation": {"time.dt": "0.001", "time.horizon": "1.0", "physics.eta0_amplitude": "0.01"},
    "shear-solute": {"grid.dim": "3", "time.dt": "0.0001", "time.horizon": "1.0"},
    "coupled-small-data": {"grid.nx": "16", "grid.nz": "16", "grid.structure_points": "16",
                           "physics.fluid_forcing": "0.01", "physics.shell_forcing": "0.01",
                           "physics.density_profile": "cosine", "time.horizon": "1.0"},
    "tube-breach": {"grid.nx": "16", "grid.nz": "16", "grid.structure_points": "16",
                    "physics.shell_forcing": "600.0", "physics.density_mean": "0.0",
                    "geometry.tube_fraction": "0.8", "time.dt": "0.0005", "time.horizon": "1.0", "time.window": "0.01"},
    "closure-verify": {"time.dt": "0.001", "time.horizon": "1.0"},
}


def _field_types(cls):
    return typing.get_type_hints(cls)


def _convert(text, typ, key):
    text = text.strip()
    try:
        if typ is bool:
            low = text.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(text)
        if typ is int:
            return int(text)
        if typ is float:
            low = text.lower()
            if low in ("inf", "+inf", "infinity"):
                return math.inf
            value = float(text)
            if math.isnan(value):
                raise ValueError(text)
            return value
        if typ is str:
            if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
                return text[1:-1]
            return text
    except ValueError:
        raise ValidationError(key, f"cannot read {text!r} as {typ.__name__}") from None
    raise ValidationError(key, f"unsupported type {typ}")


def known_keys():
    keys = dict(_TOP)
    for section, cls in SECTIONS.items():
        for name, typ in _field_types(cls).items():
            keys[f"{section}.{name}"] = typ
    return keys


def parse_assignments(text):
    """Parse config text into ``{section.key: (raw value, line, column)}``."""
    out = {}
    section = None
    keys = known_keys()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        stripped = line.strip()
        if not stripped:
            continue
        col = len(line) - len(line.lstrip()) + 1
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ParseError("unterminated section header", lineno, col)
            name = stripped[1:-1].strip()
            if name not in SECTIONS:
                raise ParseError(f"unknown section [{name}]", lineno, col)
            section = name
            continue
        if "=" not in stripped:
            raise ParseError("expected 'key = value'", lineno, col)
        key, value = stripped.split("=", 1)
        key = key.strip()
        if not key:
            raise ParseError("empty key", lineno, col)
        full = key if section is None or "." in key else f"{section}.{key}"
        if full not in keys:
            raise ParseError(f"unknown key '{full}'", lineno, col)
        if full in out:
            raise ParseError(f"duplicate key '{full}'", lineno, col)
        vcol = line.index("=") + 2
        out[full] = (value.strip(), lineno, vcol)
    return out


def parse_override(item):
    if "=" not in item:
        raise ParseError(f"override {item!r} must look like key=value")
    key, value = item.split("=", 1)
    key = key.strip()
    if key not in known_keys():
        raise ParseError(f"unknown key '{key}' in override")
    return key, value.strip()


def build_config(values):
    """RunConfig from ``{section.key: raw string}`` layered over the scenario preset."""
    scenario = values.get("scenario", RunConfig.scenario).strip()
    if scenario not in SCENARIOS:
        raise ValidationError("scenario", f"must be one of {', '.join(SCENARIOS)}")
    merged = dict(SCENARIO_PRESETS.get(scenario, {}))
    merged.update(values)
    keys = known_keys()
    sections = {name: {} for name in SECTIONS}
    top = {}
    for key, raw in merged.items():
        value = _convert(raw, keys[key], key)
        if "." in key:
            sec, name = key.split(".", 1)
            sections[sec][name] = value
        else:
            top[key] = value
    cfg = RunConfig(**top, **{sec: cls(**sections[sec]) for sec, cls in SECTIONS.items()})
    validate(cfg)
    return cfg


def parse_config(text, overrides=()):
    """Parse and validate config text; ``overrides`` are ``key=value`` strings."""
    values = {k: v for k, (v, _, _) in parse_assignments(text).items()}
    for item in overrides:
        key, value = parse_override(item)
        values[key] = value
    return build_config(values)


def _is_power_of_two(n):
    return n > 0 and n & (n - 1) == 0


def validate(cfg):
    g, geo, t, ph, cp, lps, kin, out = (cfg.grid, cfg.geometry, cfg.time, cfg.physics,
                                        cfg.coupling, cfg.lps, cfg.kinetic, cfg.output)
    checks = [
        ("time.dt", t.dt > 0, "must be positive"),
        ("time.horizon", t.horizon > 0, "must be positive"),
        ("time.window", t.window > 0, "must be positive"),
        ("time.window", t.window >= t.dt, "must be at least one time step"),
        ("grid.nx", _is_power_of_two(g.nx) and g.nx >= 8, "must be a power of two >= 8"),
        ("grid.nz", g.nz >= 4, "must be at least 4"),
        ("grid.structure_points", g.structure_points == g.nx,
         "must equal grid.nx (one structure node per grid column)"),
        ("grid.dim", g.dim in (2, 3), "must be 2 or 3"),
        ("geometry.length", geo.length > 0, "must be positive"),
        ("geometry.height", geo.height > 0, "must be positive"),
        ("geometry.tube_halfwidth", 0 < geo.tube_halfwidth <= 0.5 * geo.height,
         "must lie in (0, height/2]"),
        ("geometry.cutoff", geo.cutoff in CUTOFFS, f"must be one of {', '.join(CUTOFFS)}"),
        ("geometry.tube_fraction", 0 < geo.tube_fraction < 1, "must lie in (0, 1)"),
        ("physics.viscosity", ph.viscosity > 0, "must be positive"),
        ("physics.forcing_mode", ph.forcing_mode >= 1 and ph.forcing_mode < g.nx // 2,
         "must be a resolved positive mode number"),
        ("physics.eta0_amplitude", abs(ph.eta0_amplitude) < geo.tube_fraction * geo.tube_halfwidth,
         "max|eta0| must stay below the tube margin"),
        ("physics.fluid_initial", ph.fluid_initial in ("rest", "shear", "vortex"),
         "must be rest, shear or vortex"),
        ("physics.density_mean", ph.density_mean >= 0, "must be nonnegative"),
        ("physics.density_profile", ph.density_profile in DENSITY_PROFILES,
         f"must be one of {', '.join(DENSITY_PROFILES)}"),
        ("physics.density_amplitude", ph.density_profile == "uniform"
         or 0 <= ph.density_amplitude <= ph.density_mean,
         "must lie in [0, density_mean] so that rho0 >= 0"),
        ("physics.stress_profile", ph.stress_profile in STRESS_PROFILES,
         f"must be one of {', '.join(STRESS_PROFILES)}"),
        ("coupling.tolerance", cp.tolerance > 0, "must be positive"),
        ("coupling.max_iterations", cp.max_iterations >= 1, "must be at least 1"),
        ("coupling.relaxation", 0 < cp.relaxation <= 1, "must lie in (0, 1]"),
        ("coupling.ball_radius", cp.ball_radius > 0, "must be positive"),
        ("coupling.cfl_limit", 0 < cp.cfl_limit <= 1, "must lie in (0, 1]"),
        ("lps.r", 2 <= lps.r < math.inf, "must lie in [2, inf)"),
        ("lps.s", lps.s > 3, "must lie in (3, inf]"),
        ("kinetic.q_extent", kin.q_extent >= 5, "must be at least 5"),
        ("kinetic.q_resolution", kin.q_resolution >= 8, "must be at least 8"),
        ("kinetic.threshold", kin.threshold > 0, "must be positive"),
        ("output.snapshot_every", out.snapshot_every >= 0, "must be nonnegative"),
    ]
    for name, ok, constraint in checks:
        if not ok:
            raise ValidationError(name, constraint)
    return cfg
