"""TOML run configuration."""

from __future__ import annotations

import math
from pathlib import Path

import pytest

from evcruise.config import (
    DEFAULT_FIXED_GAINS,
    DEFAULT_GRID,
    ConfigError,
    RunConfig,
    config_from_dict,
    load_config,
    parse_grid,
    resolve_scenario,
)
from evcruise.ga import GaConfig, write_gains
from evcruise.harness import Scenario
from evcruise.nn import NnConfig
from evcruise.pid import Gains
from evcruise.plant import VehicleParams


def write(tmp_path: Path, text: str) -> Path:
    path = tmp_path / "run.toml"
    path.write_text(text)
    return path


def test_empty_file_gives_defaults(tmp_path):
    cfg = load_config(write(tmp_path, ""))
    assert cfg.vehicle == VehicleParams()
    assert cfg.ga == GaConfig() and cfg.nn == NnConfig()
    assert cfg.gains == DEFAULT_FIXED_GAINS and cfg.grid == DEFAULT_GRID
    assert cfg.ts == 0.01 and cfg.controller is None
    assert load_config(None) == RunConfig()


def test_full_file(tmp_path):
    write_gains(Gains(1, 2, 3), tmp_path / "g.csv")
    text = """
[vehicle]
mass_kg = 1600
resistance_table = [[0.0, 0.002], [1.0, 0.001]]

[sim]
ts = 0.02
duration = 30
initial_soc = 0.5

[controller]
variant = "nn"
gains_file = "g.csv"

[controller.nn]
n_hidden = 6
learning_rate = 0.2

[scenario]
name = "sc2"

[ga]
population_size = 20
generations = 5

[grid]
v_ref = [0, 15]
theta_deg = [-5, 5]
v_w = [0]

[output]
dir = "results"
"""
    cfg = load_config(write(tmp_path, text))
    assert cfg.vehicle.mass_kg == 1600
    assert cfg.vehicle.resistance_table == ((0.0, 0.002), (1.0, 0.001))
    assert (cfg.ts, cfg.duration, cfg.initial_soc) == (0.02, 30.0, 0.5)
    assert cfg.controller == "nn" and cfg.gains == Gains(1, 2, 3)
    assert cfg.nn.n_hidden == 6 and cfg.nn.learning_rate == 0.2
    assert cfg.scenario == "sc2"
    assert cfg.ga.population_size == 20 and cfg.ga.generations == 5
    assert cfg.grid.theta == pytest.approx((math.radians(-5), math.radians(5)))
    assert cfg.output == tmp_path / "results"


def test_inline_scenario():
    cfg = config_from_dict(
        {"scenario": {"duration_s": 5, "speed_ref": {"points": [[0, 3]]}, "wind": {"points": [[0, 2]]}}}
    )
    assert isinstance(cfg.scenario, Scenario) and cfg.scenario.duration_s == 5


@pytest.mark.parametrize(
    "data",
    [
        {"bogus": {}},
        {"vehicle": {"mass": 1}},
        {"vehicle": {"mass_kg": -1}},
        {"sim": {"ts": 0}},
        {"sim": {"dt": 0.1}},
        {"controller": {"variant": "lqr"}},
        {"controller": {"kp": 1, "ki": 2}},
        {"controller": {"kp": -1, "ki": 0, "kd": 0}},
        {"controller": {"gains_file": "missing.csv"}},
        {"controller": {"table": "missing.csv"}},
        {"controller": {"nn": {"n_hidden": 0}}},
        {"controller": {"colour": "red"}},
        {"scenario": {"duration_s": 1}},
        {"ga": {"population_size": 1}},
        {"grid": {"v_ref": [10, 5]}},
        {"output": {"path": "x"}},
    ],
)
def test_rejects_bad_config(data):
    with pytest.raises(ConfigError):
        config_from_dict(data)


def test_parse_errors(tmp_path):
    with pytest.raises(ConfigError, match="cannot parse"):
        load_config(write(tmp_path, "[sim\nts = 1"))
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.toml")


def test_parse_grid():
    g = parse_grid("0,10/-10,0,10/-10,15")
    assert g.v_ref == (0.0, 10.0) and g.v_w == (-10.0, 15.0)
    assert g.theta == pytest.approx(tuple(math.radians(d) for d in (-10, 0, 10)))
    for bad in ("0,10/0", "a/0/0", "0/0/99"):
        with pytest.raises(ConfigError):
            parse_grid(bad)


def test_resolve_scenario():
    assert resolve_scenario(None, "sc1").label == "sc1"
    assert resolve_scenario("step", "sc1").label == "step"
    with pytest.raises(ConfigError, match="'nowhere'"):
        resolve_scenario("nowhere", "sc1")
