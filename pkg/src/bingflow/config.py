"""Plain-text configuration: `key = value` lines with `#` comments.

Recognized keys:

    scenario             channel | cavity | decay
    nx, ny               cell counts (>= 4)
    lx, ly               domain lengths
    mu, tau_y            viscosity and yield stress
    m                    single regularization index (>= 2), or
    m_schedule           comma list, strictly increasing, all >= 2
    dt                   fixed time step, or
    cfl                  target Courant number (exactly one of dt/cfl)
    t_end                final time
    steady_tol           steady-state detection threshold
    picard_tol           nonlinear viscosity loop tolerance
    picard_max           nonlinear iteration cap
    poisson_tol          pressure solve tolerance
    lid_speed            cavity lid velocity
    force_gx             channel body force along x
    out_dir              output directory
    seed                 RNG seed for randomized pieces

Unknown keys, malformed lines, and invariant violations are rejected with
the offending line number.  serialize() emits every resolved key, so
parse(serialize(setup)) reproduces the setup exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

from bingflow.constitutive import FluidParams, RegIndex
from bingflow.continuation import MSchedule
from bingflow.grid import config_text_hash
from bingflow.scenarios import Scenario, make_cavity, make_channel, make_decay
from bingflow.solver import SolveConfig

__all__ = ["ConfigError", "RunSetup", "parse_config", "parse_config_text",
           "serialize_setup", "DEFAULTS"]


class ConfigError(ValueError):
    pass


DEFAULTS: dict = {
    "scenario": "decay",
    "nx": 32, "ny": 32,
    "lx": 1.0, "ly": 1.0,
    "mu": 1.0, "tau_y": 0.0,
    "m": 2.0,
    "dt": 0.01,
    "t_end": 1.0,
    "steady_tol": 1e-7,
    "picard_tol": 1e-9,
    "picard_max": 200,
    "poisson_tol": 1e-10,
    "lid_speed": 1.0,
    "force_gx": 1.0,
    "out_dir": "out",
    "seed": 0,
}

_INT_KEYS = {"nx", "ny", "picard_max", "seed"}
_FLOAT_KEYS = {"lx", "ly", "mu", "tau_y", "m", "dt", "cfl", "t_end",
               "steady_tol", "picard_tol", "poisson_tol", "lid_speed", "force_gx"}
_STR_KEYS = {"scenario", "out_dir"}
_LIST_KEYS = {"m_schedule"}
ALL_KEYS = _INT_KEYS | _FLOAT_KEYS | _STR_KEYS | _LIST_KEYS


@dataclass(frozen=True)
class RunSetup:
    """Everything a run needs, resolved and validated."""

    scenario: Scenario
    solve: SolveConfig
    fluid: FluidParams
    schedule: MSchedule
    out_dir: str
    seed: int
    text: str = ""          # canonical serialized form

    @property
    def config_hash(self) -> str:
        return config_text_hash(self.text)


def _convert(key: str, raw: str, line_no: int):
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _LIST_KEYS:
            return tuple(float(v) for v in raw.split(","))
        return raw
    except ValueError as exc:
        raise ConfigError(f"line {line_no}: cannot parse {key} = {raw!r} ({exc})") from None


def _read_pairs(text: str) -> dict:
    values: dict = {}
    lines: dict = {}
    for n, rawline in enumerate(text.splitlines(), start=1):
        line = rawline.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value', got {rawline!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in ALL_KEYS:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        values[key] = _convert(key, raw, n)
        lines[key] = n
    return values | {"__lines__": lines}


def parse_config_text(text: str, overrides: list[str] | None = None) -> RunSetup:
    """Parse configuration text (see module docstring) into a RunSetup."""
    values = _read_pairs(text)
    lines = values.pop("__lines__")
    for n, item in enumerate(overrides or [], start=1):
        if "=" not in item:
            raise ConfigError(f"override {n}: expected key=value, got {item!r}")
        key, raw = (part.strip() for part in item.split("=", 1))
        if key not in ALL_KEYS:
            raise ConfigError(f"override {n}: unknown key {key!r}")
        values[key] = _convert(key, raw, 0)
        lines[key] = 0

    def where(key: str) -> str:
        n = lines.get(key, 0)
        return f"line {n}" if n else "override/default"

    if "m" in values and "m_schedule" in values:
        raise ConfigError(f"{where('m_schedule')}: give either m or m_schedule, not both")
    if "dt" in values and "cfl" in values:
        raise ConfigError(f"{where('cfl')}: give either dt or cfl, not both")

    cfg = dict(DEFAULTS)
    if "cfl" in values:
        cfg.pop("dt")
    if "m_schedule" in values:
        cfg.pop("m")
    cfg.update({k: v for k, v in values.items()})

    try:
        schedule = MSchedule(values=cfg["m_schedule"]) if "m_schedule" in cfg \
            else MSchedule(values=(cfg["m"],))
    except ValueError as exc:
        key = "m_schedule" if "m_schedule" in cfg else "m"
        raise ConfigError(f"{where(key)}: {exc}") from None

    kind = cfg["scenario"]
    try:
        if kind == "channel":
            scenario = make_channel(cfg["nx"], cfg["ny"], cfg["lx"], cfg["ly"],
                                    cfg["force_gx"], seed=cfg["seed"])
        elif kind == "cavity":
            scenario = make_cavity(cfg["nx"], cfg["ny"], cfg["lx"], cfg["ly"],
                                   cfg["lid_speed"], seed=cfg["seed"])
        elif kind == "decay":
            scenario = make_decay(cfg["nx"], cfg["ny"], cfg["lx"], cfg["ly"],
                                  seed=cfg["seed"])
        else:
            raise ConfigError(
                f"{where('scenario')}: scenario must be channel, cavity, or decay, "
                f"got {kind!r}")
        fluid = FluidParams(mu=cfg["mu"], tau_y=cfg["tau_y"])
        solve = SolveConfig(
            t_end=cfg["t_end"],
            m=RegIndex(schedule.values[-1]),
            dt=cfg.get("dt"),
            cfl=cfg.get("cfl"),
            picard_tol=cfg["picard_tol"],
            picard_max=cfg["picard_max"],
            poisson_tol=cfg["poisson_tol"],
            steady_tol=cfg["steady_tol"],
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"config invariant violated: {exc}") from None

    setup = RunSetup(scenario=scenario, solve=solve, fluid=fluid,
                     schedule=schedule, out_dir=str(cfg["out_dir"]),
                     seed=cfg["seed"])
    return replace(setup, text=serialize_setup(setup))


def parse_config(path, overrides: list[str] | None = None) -> RunSetup:
    """Parse a configuration file; missing files raise ConfigError."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config_text(p.read_text(encoding="utf-8"), overrides)


def serialize_setup(setup: RunSetup) -> str:
    """Canonical text form; parsing it reproduces the setup."""
    sc = setup.scenario
    lines = [
        f"scenario = {sc.kind}",
        f"nx = {sc.grid.nx}",
        f"ny = {sc.grid.ny}",
        f"lx = {sc.grid.lx!r}",
        f"ly = {sc.grid.ly!r}",
        f"mu = {setup.fluid.mu!r}",
        f"tau_y = {setup.fluid.tau_y!r}",
    ]
    if len(setup.schedule.values) == 1:
        lines.append(f"m = {setup.schedule.values[0]!r}")
    else:
        lines.append("m_schedule = " + ",".join(repr(v) for v in setup.schedule.values))
    if setup.solve.dt is not None:
        lines.append(f"dt = {setup.solve.dt!r}")
    else:
        lines.append(f"cfl = {setup.solve.cfl!r}")
    lines += [
        f"t_end = {setup.solve.t_end!r}",
        f"steady_tol = {setup.solve.steady_tol!r}",
        f"picard_tol = {setup.solve.picard_tol!r}",
        f"picard_max = {setup.solve.picard_max}",
        f"poisson_tol = {setup.solve.poisson_tol!r}",
        f"lid_speed = {sc.lid_speed!r}",
        f"force_gx = {sc.force_gx!r}",
        f"out_dir = {setup.out_dir}",
        f"seed = {setup.seed}",
    ]
    return "\n".join(lines) + "\n"
