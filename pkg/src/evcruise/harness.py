"""Scenarios, the closed-loop runner and step-response metrics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .nn import NnConfig, NnLoopState, init_weights, nn_pid_step
from .pid import CONTROL_NORMALIZATION, Gains, coefficients
from .plant import (
    BatchState,
    Disturbance,
    PlantError,
    VehicleParams,
    VehicleState,
    plant_step,
    plant_step_batch,
)
from .table import GainTable, lookup_gains

TRACE_HEADER = ("t", "v_ref", "v", "e", "u", "accel", "brake", "theta", "v_w", "kp", "ki", "kd", "soc")
METRICS_HEADER = ("label", "mse", "rise_time", "settling_time", "overshoot_pct")
NN_TRACE_HEADER = ("t", "e", "kp", "ki", "kd", "u", "sign")

Controller = Union[Gains, GainTable, NnConfig]


class SimulationError(RuntimeError):
    def __init__(self, step: int, cause: Exception):
        super().__init__(f"simulation failed at step {step}: {cause}")
        self.step = step
        self.cause = cause


@dataclass(frozen=True)
class Profile:
    breakpoints: tuple[tuple[float, float], ...]
    interpolation: str = "linear"

    def __post_init__(self):
        pts = tuple((float(t), float(v)) for t, v in self.breakpoints)
        if not pts:
            raise ValueError("a profile needs at least one breakpoint")
        if any(b[0] <= a[0] for a, b in zip(pts, pts[1:])):
            raise ValueError("profile times must be strictly increasing")
        if self.interpolation not in ("step", "linear"):
            raise ValueError(f"unknown interpolation {self.interpolation!r}")
        object.__setattr__(self, "breakpoints", pts)

    @classmethod
    def constant(cls, value: float) -> "Profile":
        return cls(((0.0, value),))

    @property
    def last_time(self) -> float:
        return self.breakpoints[-1][0]

    def sample(self, t) -> np.ndarray:
        """Vectorized evaluation; values are held outside the breakpoints."""
        times = np.array([b[0] for b in self.breakpoints])
        values = np.array([b[1] for b in self.breakpoints])
        t = np.asarray(t, dtype=float)
        if self.interpolation == "linear":
            return np.interp(t, times, values)
        idx = np.searchsorted(times, t, side="right") - 1
        return values[np.clip(idx, 0, None)]


def profile_eval(p: Profile, t: float) -> float:
    return float(p.sample(t))


@dataclass(frozen=True)
class StepSpec:
    final: float
    time: float = 0.0


@dataclass(frozen=True)
class Scenario:
    speed_ref: Profile
    duration_s: float
    wind: Profile = field(default_factory=lambda: Profile.constant(0.0))
    slope: Profile = field(default_factory=lambda: Profile.constant(0.0))
    label: str = "scenario"
    step: StepSpec | None = None
    controller: str | None = None  # preferred controller variant, if any

    def __post_init__(self):
        last = max(p.last_time for p in (self.speed_ref, self.wind, self.slope))
        if self.duration_s < last:
            raise ValueError(f"duration {self.duration_s} ends before the last breakpoint {last}")


@dataclass(frozen=True)
class Metrics:
    mse: float
    rise_time_s: float | None = None
    settling_time_s: float | None = None
    overshoot_pct: float | None = None


@dataclass
class RunRecord:
    columns: dict[str, np.ndarray]
    label: str = "run"
    sign: np.ndarray | None = None  # NN sensitivity-sign trace, when available

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    def __len__(self) -> int:
        return len(self.columns["t"])

    @property
    def mse(self) -> float:
        return float(np.mean(self.columns["e"] ** 2))


def n_steps(duration: float, ts: float) -> int:
    return int(round(duration / ts))


def run_closed_loop(
    controller: Controller,
    sc: Scenario,
    p: VehicleParams,
    ts: float,
    initial_soc: float = 0.8,
) -> RunRecord:
    """Simulate ``sc`` under one of the three controllers.

    Row ``k`` holds the state at ``t = k*ts`` and the control computed from
    it; the plant then advances by ``ts``.  The trace has
    ``duration/ts + 1`` rows.
    """
    if not ts > 0:
        raise ValueError("ts must be positive")
    n = n_steps(sc.duration_s, ts)
    t = np.arange(n + 1) * ts
    v_ref = sc.speed_ref.sample(t)
    theta = sc.slope.sample(t)
    v_w = sc.wind.sample(t)
    rows = np.empty((n + 1, len(TRACE_HEADER)))

    fixed = table = nn_cfg = None
    c = gains = None
    if isinstance(controller, Gains):
        fixed = controller
        c = coefficients(fixed, ts)
    elif isinstance(controller, GainTable):
        table = controller
    elif isinstance(controller, NnConfig):
        nn_cfg = controller
        weights = init_weights(nn_cfg)
        nn_state = NnLoopState()
        signs = np.empty(n + 1)
    else:
        raise TypeError(f"unsupported controller {type(controller).__name__}")

    state = VehicleState.initial(p, soc=initial_soc)
    e1 = e2 = u = 0.0
    disturbance = None
    for k in range(n + 1):
        try:
            v = state.speed_ms
            e = float(v_ref[k]) - v
            if nn_cfg is not None:
                u, gains, weights, nn_state = nn_pid_step(
                    nn_state, weights, float(v_ref[k]), v, ts, nn_cfg
                )
                signs[k] = nn_state.sign
            else:
                if table is not None:
                    gains = lookup_gains(table, float(v_ref[k]), float(theta[k]), float(v_w[k]))
                    c = coefficients(gains, ts)
                else:
                    gains = fixed
                # inlined pid_step: same arithmetic, no per-step allocation
                u = u + CONTROL_NORMALIZATION * (c.alpha * e + c.beta * e1 + c.gamma * e2)
                u = min(max(u, -1.0), 1.0)
                e2, e1 = e1, e
            rows[k] = (
                t[k], v_ref[k], v, e, u, state.actuators.accel_frac, state.actuators.brake_frac,
                theta[k], v_w[k], gains.kp, gains.ki, gains.kd, state.battery.soc,
            )
            if k < n:
                if disturbance is None or disturbance.road_slope_rad != theta[k] \
                        or disturbance.wind_speed_ms != v_w[k]:
                    disturbance = Disturbance(float(theta[k]), float(v_w[k]))
                state = plant_step(state, u, disturbance, p, ts)
        except (PlantError, ValueError, FloatingPointError) as exc:
            raise SimulationError(k, exc) from exc
    columns = {name: rows[:, i].copy() for i, name in enumerate(TRACE_HEADER)}
    return RunRecord(columns, label=sc.label, sign=signs if nn_cfg is not None else None)


def batch_mse(
    gains: Sequence[Gains],
    sc: Scenario | Sequence[Scenario],
    p: VehicleParams,
    ts: float,
    initial_soc: float = 0.8,
) -> np.ndarray:
    """Tracking MSE of many fixed-gain PIDs, simulated side by side.

    ``sc`` is one scenario shared by all runs or one per run (equal
    durations).  Matches ``run_closed_loop(g, sc, p, ts).mse`` up to
    summation rounding; runs whose battery model breaks down get NaN.
    """
    if not ts > 0:
        raise ValueError("ts must be positive")
    m = len(gains)
    scenarios = [sc] * m if isinstance(sc, Scenario) else list(sc)
    if len(scenarios) != m:
        raise ValueError("need one scenario per gain triplet")
    if m == 0:
        return np.zeros(0)
    durations = {s.duration_s for s in scenarios}
    if len(durations) != 1:
        raise ValueError("batched scenarios must share one duration")
    n = n_steps(durations.pop(), ts)
    t = np.arange(n + 1) * ts

    # sample each distinct profile once; columns are runs
    def sampled(attr):
        cache: dict[int, np.ndarray] = {}
        cols = []
        for s in scenarios:
            prof = getattr(s, attr)
            if id(prof) not in cache:
                cache[id(prof)] = prof.sample(t)
            cols.append(cache[id(prof)])
        return np.column_stack(cols)

    v_ref, theta, v_w = sampled("speed_ref"), sampled("slope"), sampled("wind")
    coeffs = [coefficients(g, ts) for g in gains]
    alpha = np.array([c.alpha for c in coeffs])
    beta = np.array([c.beta for c in coeffs])
    gamma = np.array([c.gamma for c in coeffs])

    state = BatchState.initial(m, p, initial_soc)
    u = np.zeros(m)
    e1 = np.zeros(m)
    e2 = np.zeros(m)
    sq = np.zeros(m)
    failed = np.zeros(m, dtype=bool)
    for k in range(n + 1):
        e = v_ref[k] - state.speed_ms
        sq += e * e
        u = np.clip(u + CONTROL_NORMALIZATION * (alpha * e + beta * e1 + gamma * e2), -1.0, 1.0)
        e2, e1 = e1, e
        if k < n:
            state, bad = plant_step_batch(state, u, theta[k], v_w[k], p, ts)
            failed |= bad
    mse = sq / (n + 1)
    mse[failed] = np.nan
    return mse


def _first_upward_crossing(t, y, level):
    """Interpolated time of the first sample-to-sample crossing of ``level``."""
    below = y < level
    idx = np.flatnonzero(below[:-1] & ~below[1:])
    if idx.size == 0:
        return None
    k = idx[0]
    return t[k] + (level - y[k]) / (y[k + 1] - y[k]) * (t[k + 1] - t[k])


def compute_metrics(
    r: RunRecord,
    step_final: float | None = None,
    step_time: float = 0.0,
    rise_band: tuple[float, float] = (0.1, 0.9),
    settle_band: float = 0.02,
) -> Metrics:
    """MSE over the whole run plus step-response figures.

    Rise time is the 10 % to 90 % crossing interval, settling time the
    moment (measured from ``step_time``) after which the speed stays within
    2 % of ``step_final``.  Figures that never materialize are ``None``.
    """
    mse = r.mse
    if step_final is None:
        return Metrics(mse)
    if not step_final > 0:
        raise ValueError("step_final must be positive")
    mask = r["t"] >= step_time - 1e-12
    t, v = r["t"][mask], r["v"][mask]
    if t.size == 0:
        raise ValueError("no samples after the step")

    lo = _first_upward_crossing(t, v, rise_band[0] * step_final)
    hi = _first_upward_crossing(t, v, rise_band[1] * step_final)
    rise = float(hi - lo) if lo is not None and hi is not None else None

    dev = np.abs(v - step_final)
    band = settle_band * step_final
    outside = np.flatnonzero(dev > band)
    if outside.size == 0:
        settling = 0.0
    elif outside[-1] == t.size - 1:
        settling = None
    else:
        k = outside[-1]
        t_in = t[k] + (dev[k] - band) / (dev[k] - dev[k + 1]) * (t[k + 1] - t[k])
        settling = max(float(t_in) - step_time, 0.0)

    overshoot = max(100.0 * (float(np.max(v)) - step_final) / step_final, 0.0)
    return Metrics(float(mse), rise, settling, overshoot)


def scenario_metrics(r: RunRecord, sc: Scenario) -> Metrics:
    if sc.step is None:
        return compute_metrics(r)
    return compute_metrics(r, sc.step.final, sc.step.time)


# ---------------------------------------------------------------- scenarios


def step_scenario(
    v_ref: float,
    theta: float = 0.0,
    v_w: float = 0.0,
    step_time: float = 1.0,
    duration: float = 20.0,
    label: str = "step",
) -> Scenario:
    """From rest, a set-point step to ``v_ref`` under constant disturbances."""
    if step_time < 0:
        raise ValueError("step_time must be non-negative")
    points = ((0.0, v_ref),) if step_time == 0 else ((0.0, 0.0), (step_time, v_ref))
    return Scenario(
        speed_ref=Profile(points, "step"),
        duration_s=duration,
        wind=Profile.constant(v_w),
        slope=Profile.constant(theta),
        label=label,
        step=StepSpec(v_ref, step_time) if v_ref > 0 else None,
    )


def step_benchmark() -> Scenario:
    """0 -> 10 m/s at t = 1 s on a 3 degree climb into a 5 m/s headwind."""
    return step_scenario(10.0, math.radians(3.0), 5.0, step_time=1.0, duration=20.0)


def _profile_from_dict(d: dict, degrees: bool = False) -> Profile:
    pts = d["points"]
    if degrees:
        pts = [(t, math.radians(v)) for t, v in pts]
    return Profile(tuple(tuple(pt) for pt in pts), d.get("interpolation", "linear"))


def scenario_from_dict(d: dict, label: str | None = None) -> Scenario:
    """Build a scenario from a parsed config table.

    Slope breakpoints may be given in degrees (``slope_deg``) or radians
    (``slope``).  Wind and slope default to zero.
    """
    if "slope_deg" in d:
        slope = _profile_from_dict(d["slope_deg"], degrees=True)
    elif "slope" in d:
        slope = _profile_from_dict(d["slope"])
    else:
        slope = Profile.constant(0.0)
    wind = _profile_from_dict(d["wind"]) if "wind" in d else Profile.constant(0.0)
    step = None
    if "step" in d:
        step = StepSpec(float(d["step"]["final"]), float(d["step"].get("time", 0.0)))
    return Scenario(
        speed_ref=_profile_from_dict(d["speed_ref"]),
        duration_s=float(d["duration_s"]),
        wind=wind,
        slope=slope,
        label=label or d.get("label", "scenario"),
        step=step,
        controller=d.get("controller"),
    )


def load_toml(text: str) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    return tomllib.loads(text)


def builtin_scenarios() -> dict[str, Scenario]:
    """Shipped scenarios, read from the editable TOML files in ``scenarios/``."""
    out = {}
    for entry in sorted(resources.files("evcruise.scenarios").iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".toml"):
            name = entry.name[: -len(".toml")]
            out[name] = scenario_from_dict(load_toml(entry.read_text()), label=name)
    return out


# ---------------------------------------------------------------- CSV I/O


def _fmt(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


def write_trace(r: RunRecord, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        cols = [r.columns[name] for name in TRACE_HEADER]
        for row in zip(*cols):
            writer.writerow([_fmt(x) for x in row])


def read_trace(path, label: str = "run") -> RunRecord:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != TRACE_HEADER:
            raise ValueError(f"unexpected trace header {header!r}")
        data = np.array([[float(x) for x in row] for row in reader if row], dtype=float)
    data = data.reshape(-1, len(TRACE_HEADER))
    return RunRecord({name: data[:, i].copy() for i, name in enumerate(TRACE_HEADER)}, label)


def write_nn_trace(r: RunRecord, path) -> None:
    if r.sign is None:
        raise ValueError("record carries no NN sign trace")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(NN_TRACE_HEADER)
        cols = [r["t"], r["e"], r["kp"], r["ki"], r["kd"], r["u"], r.sign]
        for row in zip(*cols):
            writer.writerow([_fmt(x) for x in row])


def read_nn_trace(path) -> dict[str, np.ndarray]:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != NN_TRACE_HEADER:
            raise ValueError(f"unexpected NN trace header {header!r}")
        data = np.array([[float(x) for x in row] for row in reader if row], dtype=float)
    data = data.reshape(-1, len(NN_TRACE_HEADER))
    return {name: data[:, i].copy() for i, name in enumerate(NN_TRACE_HEADER)}


def write_metrics(rows: list[tuple[str, Metrics]], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_HEADER)
        for label, m in rows:
            writer.writerow(
                [label, _fmt(m.mse), _fmt(m.rise_time_s), _fmt(m.settling_time_s), _fmt(m.overshoot_pct)]
            )


def read_metrics(path) -> list[tuple[str, Metrics]]:
    def opt(x):
        return float(x) if x != "" else None

    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != METRICS_HEADER:
            raise ValueError(f"unexpected metrics header {header!r}")
        return [
            (row[0], Metrics(float(row[1]), opt(row[2]), opt(row[3]), opt(row[4])))
            for row in reader
            if row
        ]
