"""Run configuration: one TOML file with optional sections.

``[vehicle]`` overrides vehicle parameters, ``[sim]`` sets the control
period, ``[controller]`` picks the variant and its parameters,
``[scenario]`` names a built-in scenario or defines one inline, ``[ga]``
and ``[grid]`` configure tuning, and ``[output]`` sets the output
directory.  Every key is optional; an empty file gives the stock vehicle
and defaults throughout.  Relative paths resolve against the config file.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .ga import GaConfig, GridSpec, read_gains
from .harness import Scenario, builtin_scenarios, load_toml, scenario_from_dict
from .nn import NnConfig
from .pid import Gains
from .plant import VehicleParams

CONTROLLERS = ("fixed", "table", "nn")

# Gains used by the fixed controller when none are configured
DEFAULT_FIXED_GAINS = Gains(999.75, 0.1, 0.3)

DEFAULT_GRID = GridSpec(
    v_ref=(0.0, 10.0, 20.0, 30.0),
    theta=tuple(math.radians(d) for d in (-10.0, 0.0, 10.0)),
    v_w=(-10.0, 0.0, 15.0),
)


class ConfigError(ValueError):
    """The configuration cannot be parsed or is inconsistent."""


@dataclass
class RunConfig:
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    ts: float = 0.01
    duration: float | None = None  # overrides the scenario duration
    initial_soc: float = 0.8
    controller: str | None = None
    gains: Gains = DEFAULT_FIXED_GAINS
    table_path: Path | None = None
    nn: NnConfig = field(default_factory=NnConfig)
    scenario: str | Scenario | None = None
    ga: GaConfig = field(default_factory=GaConfig)
    grid: GridSpec = DEFAULT_GRID
    node_duration: float = 20.0
    node_step_time: float = 1.0
    output: Path = Path("out")

    def __post_init__(self):
        if not self.ts > 0:
            raise ConfigError(f"sim.ts must be positive, got {self.ts!r}")
        if self.duration is not None and not self.duration > 0:
            raise ConfigError("sim.duration must be positive")
        if self.controller is not None and self.controller not in CONTROLLERS:
            raise ConfigError(f"unknown controller {self.controller!r}")
        if self.table_path is not None and not Path(self.table_path).is_file():
            raise ConfigError(f"gain table {self.table_path} does not exist")


def _build(cls, section: dict, where: str, **extra):
    known = {f.name for f in fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"[{where}] has unknown keys: {', '.join(sorted(unknown))}")
    try:
        return cls(**section, **extra)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{where}]: {exc}") from exc


def _tuples(d: dict) -> dict:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}


def _grid(section: dict) -> GridSpec:
    try:
        if "theta_deg" in section:
            theta = [math.radians(x) for x in section["theta_deg"]]
        else:
            theta = section.get("theta_rad", DEFAULT_GRID.theta)
        return GridSpec(
            tuple(section.get("v_ref", DEFAULT_GRID.v_ref)),
            tuple(theta),
            tuple(section.get("v_w", DEFAULT_GRID.v_w)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[grid]: {exc}") from exc


def parse_grid(text: str) -> GridSpec:
    """``"V,V,../T,T,../W,W,.."``: set-points (m/s), slopes (degrees), winds (m/s)."""
    parts = text.split("/")
    if len(parts) != 3:
        raise ConfigError(f"grid {text!r} needs three '/'-separated axes")
    try:
        v, th, w = ([float(x) for x in p.split(",") if x.strip()] for p in parts)
    except ValueError as exc:
        raise ConfigError(f"grid {text!r}: {exc}") from exc
    return _grid({"v_ref": v, "theta_deg": th, "v_w": w})


def config_from_dict(d: dict, base: Path = Path(".")) -> RunConfig:
    known = {"vehicle", "sim", "controller", "scenario", "ga", "grid", "output"}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown sections: {', '.join(sorted(unknown))}")
    kw: dict = {}
    if "vehicle" in d:
        kw["vehicle"] = _build(VehicleParams, _tuples(d["vehicle"]), "vehicle")

    sim = dict(d.get("sim", {}))
    for key in ("ts", "duration", "initial_soc"):
        if key in sim:
            kw[key] = float(sim.pop(key))
    if "node_duration" in sim:
        kw["node_duration"] = float(sim.pop("node_duration"))
    if "node_step_time" in sim:
        kw["node_step_time"] = float(sim.pop("node_step_time"))
    if sim:
        raise ConfigError(f"[sim] has unknown keys: {', '.join(sorted(sim))}")

    ctrl = dict(d.get("controller", {}))
    if "variant" in ctrl:
        kw["controller"] = ctrl.pop("variant")
    gain_keys = {"kp", "ki", "kd"} & set(ctrl)
    if gain_keys:
        if gain_keys != {"kp", "ki", "kd"}:
            raise ConfigError("[controller] needs all of kp, ki, kd")
        kw["gains"] = _build(Gains, {k: float(ctrl.pop(k)) for k in ("kp", "ki", "kd")}, "controller")
    if "gains_file" in ctrl:
        path = base / ctrl.pop("gains_file")
        if not path.is_file():
            raise ConfigError(f"gains file {path} does not exist")
        kw["gains"] = read_gains(path)
    if "table" in ctrl:
        kw["table_path"] = base / ctrl.pop("table")
    if "nn" in ctrl:
        kw["nn"] = _build(NnConfig, _tuples(ctrl.pop("nn")), "controller.nn")
    if ctrl:
        raise ConfigError(f"[controller] has unknown keys: {', '.join(sorted(ctrl))}")

    if "scenario" in d:
        sc = d["scenario"]
        if set(sc) == {"name"}:
            kw["scenario"] = sc["name"]
        else:
            try:
                kw["scenario"] = scenario_from_dict(sc)
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"[scenario]: {exc!r}") from exc
    if "ga" in d:
        kw["ga"] = _build(GaConfig, _tuples(d["ga"]), "ga")
    if "grid" in d:
        kw["grid"] = _grid(d["grid"])
    if "output" in d:
        out = dict(d["output"])
        if "dir" in out:
            kw["output"] = base / out.pop("dir")
        if out:
            raise ConfigError(f"[output] has unknown keys: {', '.join(sorted(out))}")
    try:
        return RunConfig(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        data = load_toml(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except ValueError as exc:  # TOMLDecodeError subclasses ValueError
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return config_from_dict(data, base=path.parent)


def resolve_scenario(name_or_scenario: str | Scenario | None, default: str) -> Scenario:
    if isinstance(name_or_scenario, Scenario):
        return name_or_scenario
    name = name_or_scenario or default
    scenarios = builtin_scenarios()
    if name not in scenarios:
        raise ConfigError(f"unknown scenario {name!r} (built-in: {', '.join(scenarios)})")
    return scenarios[name]
