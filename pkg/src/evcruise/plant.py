"""Longitudinal dynamics of a battery-electric passenger car.

Point-mass body with a single fixed-ratio gearbox, a static (efficiency
only) electric drive, disc brakes, a peak-friction tyre limit, a simple
equivalent-circuit battery and first-order pedal actuators.  Everything
is a pure function of its arguments; ``plant_step`` composes them into one
explicit-Euler step.

Sign conventions: speed is non-negative (no reverse), positive wind is a
headwind, positive slope is uphill, positive battery current discharges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class PlantError(ValueError):
    """Raised when the plant is driven into a non-physical state."""


@dataclass(frozen=True)
class VehicleParams:
    # body (compact battery-electric hatchback)
    mass_kg: float = 1468.0
    drag_coeff: float = 0.29
    rolling_coeff: float = 0.007
    frontal_area_m2: float = 2.22
    air_density_kgm3: float = 1.225
    gravity_ms2: float = 9.81
    cg_height_m: float = 0.35
    front_axle_to_cg_m: float = 1.455
    rear_axle_to_cg_m: float = 1.132
    # driveline
    gear_ratio: float = 3.4
    wheel_radius_m: float = 0.329
    motor_efficiency: float = 0.95
    max_motor_torque_Nm: float = 220.0
    # disc brakes
    pad_friction: float = 0.9
    brake_mean_radius_m: float = 0.1778
    brake_actuator_diam_m: float = 0.04
    n_pads: int = 2
    max_brake_pressure_Pa: float = 1.0e7
    # battery pack
    cells_series: int = 96
    cells_parallel: int = 2
    battery_capacity_As: float = 132.0 * 3600.0
    # (soc, volts) per cell, linear in between
    ocv_table: tuple[tuple[float, float], ...] = ((0.0, 3.0), (1.0, 4.15))
    # (soc, ohms) per cell
    resistance_table: tuple[tuple[float, float], ...] = ((0.0, 1.0e-3), (1.0, 1.0e-3))
    # pedal lags
    accel_time_const_s: float = 0.75
    brake_time_const_s: float = 1.0
    # magic-formula coefficients (dry asphalt)
    pacejka_b: float = 10.0
    pacejka_c: float = 1.9
    pacejka_d: float = 1.0
    pacejka_e: float = 0.97

    def __post_init__(self):
        for name in (
            "mass_kg", "drag_coeff", "rolling_coeff", "frontal_area_m2",
            "air_density_kgm3", "gravity_ms2", "cg_height_m", "front_axle_to_cg_m",
            "rear_axle_to_cg_m", "gear_ratio", "wheel_radius_m", "motor_efficiency",
            "max_motor_torque_Nm", "pad_friction", "brake_mean_radius_m",
            "brake_actuator_diam_m", "n_pads", "max_brake_pressure_Pa",
            "cells_series", "cells_parallel", "battery_capacity_As",
            "accel_time_const_s", "brake_time_const_s",
            "pacejka_b", "pacejka_c", "pacejka_d",
        ):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite number, got {value!r}")
        if not math.isfinite(self.pacejka_e):
            raise ValueError("pacejka_e must be finite")
        if self.motor_efficiency > 1.0:
            raise ValueError("motor_efficiency must lie in (0, 1]")
        if self.gear_ratio < 1.0:
            raise ValueError("gear_ratio must be >= 1")
        for name in ("ocv_table", "resistance_table"):
            table = getattr(self, name)
            socs = [pt[0] for pt in table]
            if not table or any(b <= a for a, b in zip(socs, socs[1:])):
                raise ValueError(f"{name} needs strictly increasing SOC breakpoints")
        # tables arrive as lists from config files
        object.__setattr__(self, "ocv_table", tuple(tuple(map(float, pt)) for pt in self.ocv_table))
        object.__setattr__(
            self, "resistance_table", tuple(tuple(map(float, pt)) for pt in self.resistance_table)
        )


@dataclass(frozen=True)
class Disturbance:
    road_slope_rad: float = 0.0
    wind_speed_ms: float = 0.0  # positive = headwind

    def __post_init__(self):
        if not abs(self.road_slope_rad) < math.pi / 2:
            raise ValueError("road slope must satisfy |theta| < pi/2")


class ActuatorState(NamedTuple):
    accel_frac: float = 0.0
    brake_frac: float = 0.0


class BatteryState(NamedTuple):
    soc: float
    terminal_voltage_V: float
    current_A: float = 0.0

    @classmethod
    def at_rest(cls, soc: float, p: VehicleParams) -> "BatteryState":
        return cls(soc=soc, terminal_voltage_V=p.cells_series * open_circuit_voltage(soc, p))


class VehicleState(NamedTuple):
    speed_ms: float
    actuators: ActuatorState
    battery: BatteryState
    time_s: float = 0.0
    # diagnostics of the step that produced this state
    accel_ms2: float = 0.0
    net_force_N: float = 0.0
    clamped: bool = False

    @classmethod
    def initial(cls, p: VehicleParams, speed_ms: float = 0.0, soc: float = 0.8) -> "VehicleState":
        if speed_ms < 0:
            raise ValueError("initial speed must be non-negative")
        return cls(speed_ms=speed_ms, actuators=ActuatorState(), battery=BatteryState.at_rest(soc, p))


def _interp(table, x):
    if x <= table[0][0]:
        return table[0][1]
    for (x0, y0), (x1, y1) in zip(table, table[1:]):
        if x <= x1:
            return y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    return table[-1][1]


def open_circuit_voltage(soc: float, p: VehicleParams) -> float:
    """Per-cell open-circuit voltage."""
    return _interp(p.ocv_table, soc)


def internal_resistance(soc: float, p: VehicleParams) -> float:
    """Per-cell series resistance."""
    return _interp(p.resistance_table, soc)


def resistive_forces(p: VehicleParams, v: float, d: Disturbance) -> tuple[float, float, float]:
    """Aerodynamic drag, grade force and rolling resistance at speed ``v``.

    Drag acts on the airspeed ``v + wind`` and keeps its sign, so a strong
    tailwind pushes the car forward.
    """
    v_rel = v + d.wind_speed_ms
    f_aero = 0.5 * p.air_density_kgm3 * p.drag_coeff * p.frontal_area_m2 * v_rel * abs(v_rel)
    weight = p.mass_kg * p.gravity_ms2
    f_grade = weight * math.sin(d.road_slope_rad)
    f_roll = weight * p.rolling_coeff * math.cos(d.road_slope_rad)
    return f_aero, f_grade, f_roll


def gearbox(torque_in: float, speed_in: float, k_g: float) -> tuple[float, float]:
    """Lossless gear stage, both quantities multiplied by ``k_g`` as printed."""
    return k_g * torque_in, k_g * speed_in


def electric_drive(
    torque_ref: float, omega: float, u_b: float, p: VehicleParams
) -> tuple[float, float]:
    """Static motor model: saturated torque and the battery current it draws.

    ``omega`` is the shaft speed the torque works against.  Motoring divides
    the mechanical power by the efficiency, generating multiplies by it.
    """
    if not u_b > 0:
        raise PlantError(f"battery terminal voltage must be positive, got {u_b!r}")
    t_max = p.max_motor_torque_Nm
    torque = min(max(torque_ref, -t_max), t_max)
    power = torque * omega
    eta = p.motor_efficiency
    current = power / (u_b * eta) if power >= 0 else power * eta / u_b
    return torque, current


def wheel(torque: float, v: float, r_w: float) -> tuple[float, float]:
    return torque / r_w, v / r_w


def pacejka(f_z: float, slip: float, p: VehicleParams) -> float:
    """Magic-formula longitudinal tyre force."""
    bk = p.pacejka_b * slip
    return f_z * p.pacejka_d * math.sin(
        p.pacejka_c * math.atan(bk - p.pacejka_e * (bk - math.atan(bk)))
    )


def peak_traction(f_z: float, p: VehicleParams) -> float:
    """Largest force the magic formula can deliver at load ``f_z``."""
    return f_z * abs(p.pacejka_d)


def brake_torque(pressure: float, p: VehicleParams) -> float:
    if pressure < 0:
        raise PlantError(f"brake pressure must be non-negative, got {pressure!r}")
    return (
        p.pad_friction * pressure * math.pi * p.brake_actuator_diam_m**2
        * p.brake_mean_radius_m * p.n_pads / 4.0
    )


def battery_step(b: BatteryState, current: float, p: VehicleParams, dt: float) -> BatteryState:
    """Coulomb-count the state of charge and recompute the terminal voltage."""
    cell_current = current / p.cells_parallel
    soc = b.soc - cell_current * dt / p.battery_capacity_As
    soc = min(max(soc, 0.0), 1.0)
    u_b = p.cells_series * (
        open_circuit_voltage(soc, p) - cell_current * internal_resistance(soc, p)
    )
    return BatteryState(soc=soc, terminal_voltage_V=u_b, current_A=current)


def actuator_step(x: float, command: float, tau: float, dt: float) -> float:
    x = x + (dt / tau) * (command - x)
    return min(max(x, 0.0), 1.0)


def switching_logic(u: float) -> tuple[float, float]:
    """Route a signed control to the accelerator (u >= 0) or the brake."""
    if u >= 0:
        return u, 0.0
    return 0.0, -u


def static_axle_loads(p: VehicleParams) -> tuple[float, float]:
    wheelbase = p.front_axle_to_cg_m + p.rear_axle_to_cg_m
    weight = p.mass_kg * p.gravity_ms2
    return weight * p.rear_axle_to_cg_m / wheelbase, weight * p.front_axle_to_cg_m / wheelbase


def plant_step(
    s: VehicleState, u: float, d: Disturbance, p: VehicleParams, dt: float
) -> VehicleState:
    """Advance the vehicle by one explicit-Euler step of length ``dt``.

    ``u`` is the normalized control in [-1, 1].  The front axle is driven;
    braking acts on both axles.  Brakes and rolling resistance cannot push
    the car backwards, so the speed is clamped at zero.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    accel_cmd, brake_cmd = switching_logic(u)
    accel_frac = actuator_step(s.actuators.accel_frac, accel_cmd, p.accel_time_const_s, dt)
    brake_frac = actuator_step(s.actuators.brake_frac, brake_cmd, p.brake_time_const_s, dt)

    v = s.speed_ms
    omega_wheel = v / p.wheel_radius_m
    # power-conserving reduction: the motor spins k_g times faster than the wheel
    omega_motor = p.gear_ratio * omega_wheel
    t_motor, current = electric_drive(
        accel_frac * p.max_motor_torque_Nm, omega_motor, s.battery.terminal_voltage_V, p
    )
    t_wheel, _ = gearbox(t_motor, omega_motor, p.gear_ratio)
    f_drive, _ = wheel(t_wheel, v, p.wheel_radius_m)

    fz_front, fz_rear = static_axle_loads(p)
    f_drive = min(max(f_drive, -peak_traction(fz_front, p)), peak_traction(fz_front, p))
    t_brake = brake_torque(brake_frac * p.max_brake_pressure_Pa, p)
    f_brake = min(t_brake / p.wheel_radius_m, peak_traction(fz_front + fz_rear, p))
    f_net = f_drive - f_brake

    f_aero, f_grade, f_roll = resistive_forces(p, v, d)
    accel = (f_net - f_aero - f_grade - f_roll) / p.mass_kg
    v_next = v + accel * dt
    clamped = v_next < 0.0
    if clamped:
        v_next = 0.0

    return VehicleState(
        speed_ms=v_next,
        actuators=ActuatorState(accel_frac, brake_frac),
        battery=battery_step(s.battery, current, p, dt),
        time_s=s.time_s + dt,
        accel_ms2=accel,
        net_force_N=f_net,
        clamped=clamped,
    )



class BatchState(NamedTuple):
    """Many independent vehicles, one array element each."""

    speed_ms: np.ndarray
    accel_frac: np.ndarray
    brake_frac: np.ndarray
    soc: np.ndarray
    terminal_voltage_V: np.ndarray

    @classmethod
    def initial(cls, n: int, p: VehicleParams, soc: float = 0.8) -> "BatchState":
        s = VehicleState.initial(p, soc=soc)
        full = lambda x: np.full(n, float(x))  # noqa: E731
        return cls(full(0.0), full(0.0), full(0.0), full(soc), full(s.battery.terminal_voltage_V))


def plant_step_batch(
    s: BatchState, u: np.ndarray, slope_rad, wind_ms, p: VehicleParams, dt: float
) -> tuple[BatchState, np.ndarray]:
    """Array version of ``plant_step`` for population-wide evaluation.

    ``slope_rad`` and ``wind_ms`` are scalars or per-vehicle arrays.  Returns
    the next state and a mask of vehicles whose battery voltage was
    non-physical (those entries are meaningless from then on).
    """
    accel_cmd = np.maximum(u, 0.0)
    brake_cmd = np.maximum(-u, 0.0)
    accel_frac = np.clip(s.accel_frac + (dt / p.accel_time_const_s) * (accel_cmd - s.accel_frac), 0.0, 1.0)
    brake_frac = np.clip(s.brake_frac + (dt / p.brake_time_const_s) * (brake_cmd - s.brake_frac), 0.0, 1.0)

    v = s.speed_ms
    omega_motor = p.gear_ratio * (v / p.wheel_radius_m)
    t_max = p.max_motor_torque_Nm
    t_motor = np.clip(accel_frac * t_max, -t_max, t_max)
    power = t_motor * omega_motor
    bad = ~(s.terminal_voltage_V > 0)
    u_b = np.where(bad, 1.0, s.terminal_voltage_V)
    eta = p.motor_efficiency
    current = np.where(power >= 0, power / (u_b * eta), power * eta / u_b)

    fz_front, fz_rear = static_axle_loads(p)
    lim_front = peak_traction(fz_front, p)
    f_drive = np.clip(p.gear_ratio * t_motor / p.wheel_radius_m, -lim_front, lim_front)
    t_brake = (
        p.pad_friction * (brake_frac * p.max_brake_pressure_Pa) * math.pi
        * p.brake_actuator_diam_m**2 * p.brake_mean_radius_m * p.n_pads / 4.0
    )
    f_brake = np.minimum(t_brake / p.wheel_radius_m, peak_traction(fz_front + fz_rear, p))
    f_net = f_drive - f_brake

    v_rel = v + wind_ms
    f_aero = 0.5 * p.air_density_kgm3 * p.drag_coeff * p.frontal_area_m2 * v_rel * np.abs(v_rel)
    weight = p.mass_kg * p.gravity_ms2
    f_grade = weight * np.sin(slope_rad)
    f_roll = weight * p.rolling_coeff * np.cos(slope_rad)
    accel = (f_net - f_aero - f_grade - f_roll) / p.mass_kg
    v_next = np.maximum(v + accel * dt, 0.0)

    cell_current = current / p.cells_parallel
    soc = np.clip(s.soc - cell_current * dt / p.battery_capacity_As, 0.0, 1.0)
    ocv_x, ocv_y = zip(*p.ocv_table)
    res_x, res_y = zip(*p.resistance_table)
    u_b_next = p.cells_series * (np.interp(soc, ocv_x, ocv_y) - cell_current * np.interp(soc, res_x, res_y))
    return BatchState(v_next, accel_frac, brake_frac, soc, u_b_next), bad
