"""Vehicle plant: component models, composed step, and physical invariants."""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from evcruise.plant import (
    ActuatorState,
    BatchState,
    BatteryState,
    Disturbance,
    PlantError,
    VehicleParams,
    VehicleState,
    actuator_step,
    battery_step,
    brake_torque,
    electric_drive,
    gearbox,
    open_circuit_voltage,
    pacejka,
    peak_traction,
    plant_step,
    plant_step_batch,
    resistive_forces,
    static_axle_loads,
    switching_logic,
    wheel,
)

# magic formula at F_z=7200 N, k=0.1 with B=10, C=1.9, D=1, E=0.97,
# evaluated once at 30 significant digits
PACEJKA_7200_01 = 6882.06314220581678219595422883


class TestResistiveForces:
    def test_rest_flat_calm_is_rolling_only(self, params):
        f_a, f_g, f_r = resistive_forces(params, 0.0, Disturbance())
        assert f_a == 0.0
        assert f_g == 0.0
        assert f_r == pytest.approx(1468 * 9.81 * 0.007)
        assert f_r == pytest.approx(100.81, abs=0.01)

    def test_drag_at_30(self, params):
        f_a, _, _ = resistive_forces(params, 30.0, Disturbance())
        assert f_a == pytest.approx(0.5 * 1.225 * 0.29 * 2.22 * 900)
        assert f_a == pytest.approx(354.9, abs=0.05)

    def test_grade_at_10_degrees(self, params):
        _, f_g, _ = resistive_forces(params, 10.0, Disturbance(math.radians(10.0)))
        assert f_g == pytest.approx(2500.7, abs=0.05)

    def test_tailwind_stronger_than_speed_pushes_forward(self, params):
        f_a, _, _ = resistive_forces(params, 2.0, Disturbance(0.0, -5.0))
        assert f_a == pytest.approx(-0.5 * 1.225 * 0.29 * 2.22 * 9.0)

    def test_slope_must_be_below_vertical(self):
        with pytest.raises(ValueError):
            Disturbance(math.pi / 2)


class TestDriveline:
    def test_gearbox_examples(self):
        assert gearbox(50.0, 100.0, 3.4) == pytest.approx((170.0, 340.0))
        assert gearbox(0.0, 0.0, 3.4) == (0.0, 0.0)
        assert gearbox(-20.0, 50.0, 3.4) == pytest.approx((-68.0, 170.0))

    def test_motoring_current(self, params):
        _, current = electric_drive(50.0, 200.0, 360.0, params)
        assert current == pytest.approx(10000 / 342)
        assert current == pytest.approx(29.24, abs=0.005)

    def test_generating_current_is_negative_and_scaled_by_efficiency(self, params):
        _, current = electric_drive(-50.0, 200.0, 360.0, params)
        assert current == pytest.approx(-10000 * 0.95 / 360)
        assert current == pytest.approx(-26.39, abs=0.005)

    @pytest.mark.parametrize("omega", [0.0, 123.0, -40.0])
    def test_zero_torque_draws_nothing(self, params, omega):
        assert electric_drive(0.0, omega, 360.0, params)[1] == 0.0

    def test_torque_is_clamped(self, params):
        assert electric_drive(1e4, 10.0, 360.0, params)[0] == 220.0
        assert electric_drive(-1e4, 10.0, 360.0, params)[0] == -220.0

    @pytest.mark.parametrize("u_b", [0.0, -5.0, float("nan")])
    def test_rejects_non_physical_voltage(self, params, u_b):
        with pytest.raises(PlantError):
            electric_drive(10.0, 10.0, u_b, params)

    def test_wheel_examples(self):
        f, w = wheel(170.0, 10.0, 0.329)
        assert f == pytest.approx(516.72, abs=0.005)
        assert w == pytest.approx(30.395, abs=0.0005)
        assert wheel(0.0, 0.0, 0.329) == (0.0, 0.0)
        f, w = wheel(-200.0, 5.0, 0.329)
        assert f == pytest.approx(-607.9, abs=0.05)
        assert w == pytest.approx(15.2, abs=0.005)


class TestTyre:
    def test_zero_slip_and_zero_load(self, params):
        assert pacejka(5000.0, 0.0, params) == 0.0
        assert pacejka(0.0, 0.3, params) == 0.0

    def test_regression_constant(self, params):
        assert pacejka(7200.0, 0.1, params) == pytest.approx(PACEJKA_7200_01, rel=1e-12)

    @given(st.floats(0, 2e4), st.floats(-5, 5))
    def test_odd_and_bounded(self, f_z, k):
        p = VehicleParams()
        assert pacejka(f_z, -k, p) == -pacejka(f_z, k, p)
        assert abs(pacejka(f_z, k, p)) <= peak_traction(f_z, p) * (1 + 1e-12)


class TestBrake:
    def test_examples(self, params):
        assert brake_torque(0.0, params) == 0.0
        full = brake_torque(5e6, params)
        assert full == pytest.approx(2011, abs=0.5)
        assert full == pytest.approx(0.9 * 5e6 * math.pi * 0.04**2 * 0.1778 * 2 / 4)
        assert brake_torque(2.5e6, params) == pytest.approx(full / 2, rel=1e-15)

    def test_rejects_negative_pressure(self, params):
        with pytest.raises(PlantError):
            brake_torque(-1.0, params)

    @given(st.floats(0, 1e7), st.floats(0, 50))
    def test_homogeneous(self, pressure, a):
        p = VehicleParams()
        expected = a * brake_torque(pressure, p)
        assert brake_torque(a * pressure, p) == pytest.approx(expected, rel=1e-12, abs=1e-9)


class TestBattery:
    def test_zero_current_keeps_soc(self, params):
        b = BatteryState.at_rest(0.6, params)
        nxt = battery_step(b, 0.0, params, 1.0)
        assert nxt.soc == 0.6
        assert nxt.terminal_voltage_V == pytest.approx(96 * open_circuit_voltage(0.6, params))

    def test_coulomb_count_single_string(self):
        p = VehicleParams(cells_parallel=1)
        b = BatteryState.at_rest(0.5, p)
        nxt = battery_step(b, 47.52, p, 1.0)
        assert nxt.soc - 0.5 == pytest.approx(-1.0e-4, rel=1e-9)

    def test_regen_charges(self, params):
        b = BatteryState.at_rest(0.5, params)
        assert battery_step(b, -10.0, params, 1.0).soc > 0.5

    def test_discharge_sags_terminal_voltage(self, params):
        b = BatteryState.at_rest(0.5, params)
        assert battery_step(b, 100.0, params, 0.01).terminal_voltage_V < b.terminal_voltage_V

    @given(st.floats(0, 1), st.floats(-500, 500))
    def test_soc_moves_against_current(self, soc, current):
        p = VehicleParams()
        nxt = battery_step(BatteryState.at_rest(soc, p), current, p, 0.01)
        assert 0.0 <= nxt.soc <= 1.0
        if current > 0:
            assert nxt.soc <= soc
        elif current < 0:
            assert nxt.soc >= soc


class TestActuatorsAndSwitching:
    def test_one_euler_step(self):
        assert actuator_step(0.0, 1.0, 0.75, 0.01) == pytest.approx(0.01 / 0.75)

    def test_fixed_point(self):
        assert actuator_step(0.37, 0.37, 0.75, 0.01) == 0.37

    def test_reaches_63_percent_at_tau(self):
        x, dt, tau = 0.0, 0.01, 0.75
        for _ in range(round(tau / dt)):
            x = actuator_step(x, 1.0, tau, dt)
        assert abs(x - (1 - math.exp(-1))) <= dt / tau

    @given(st.floats(0, 1), st.floats(0, 1), st.floats(0.05, 5), st.floats(1e-4, 0.05))
    def test_contraction(self, x, cmd, tau, dt):
        assert abs(actuator_step(x, cmd, tau, dt) - cmd) <= abs(x - cmd) + 1e-15

    def test_switching_examples(self):
        assert switching_logic(0.4) == (0.4, 0.0)
        assert switching_logic(-0.7) == (0.0, 0.7)
        assert switching_logic(0.0) == (0.0, 0.0)

    @given(st.floats(-1, 1))
    def test_switching_exclusive(self, u):
        a, b = switching_logic(u)
        assert a * b == 0.0
        assert a >= 0 and b >= 0


class TestAxleLoads:
    def test_default_geometry(self, params):
        front, rear = static_axle_loads(params)
        assert front == pytest.approx(6301, abs=1)
        assert front + rear == pytest.approx(1468 * 9.81)
        assert front + rear == pytest.approx(14401, abs=1)

    def test_symmetric_cg(self):
        p = VehicleParams(front_axle_to_cg_m=1.3, rear_axle_to_cg_m=1.3)
        front, rear = static_axle_loads(p)
        assert front == pytest.approx(rear)
        assert front == pytest.approx(p.mass_kg * p.gravity_ms2 / 2)


def _forces(p: VehicleParams, v: float, theta: float, v_w: float) -> float:
    # written out independently of the module under test
    v_rel = v + v_w
    drag = 0.5 * p.air_density_kgm3 * p.drag_coeff * p.frontal_area_m2 * v_rel * abs(v_rel)
    w = p.mass_kg * p.gravity_ms2
    return drag + w * math.sin(theta) + w * p.rolling_coeff * math.cos(theta)


class TestPlantStep:
    def test_rest_is_a_fixed_point(self, params):
        s = VehicleState.initial(params)
        for _ in range(200):
            s = plant_step(s, 0.0, Disturbance(), params, 0.01)
        assert s.speed_ms == 0.0
        assert s.battery.soc == 0.8

    def test_full_pedal_first_step(self, params):
        s = VehicleState.initial(params)._replace(actuators=ActuatorState(1.0, 0.0))
        nxt = plant_step(s, 1.0, Disturbance(), params, 0.01)
        front, _ = static_axle_loads(params)
        force = min(3.4 * 220 / 0.329, front * params.pacejka_d)
        assert nxt.speed_ms == pytest.approx((force - 1468 * 9.81 * 0.007) / 1468 * 0.01, rel=1e-12)
        assert nxt.speed_ms == pytest.approx(0.0148007402656883, rel=1e-12)

    def test_constant_half_throttle_equilibrium(self, params):
        # analytic speed where drive force meets drag plus rolling resistance
        f_t = 3.4 * 0.5 * 220 / 0.329
        f_r = 1468 * 9.81 * 0.007
        v_star = math.sqrt((f_t - f_r) / (0.5 * 1.225 * 0.29 * 2.22))
        s = VehicleState.initial(params)
        for _ in range(60000):
            s = plant_step(s, 0.5, Disturbance(), params, 0.01)
        f_a, _, f_roll = resistive_forces(params, s.speed_ms, Disturbance())
        assert abs(s.net_force_N - f_a - f_roll) < 1.0
        assert s.speed_ms == pytest.approx(v_star, abs=0.05)

    def test_traction_limit_caps_drive_force(self):
        p = VehicleParams(pacejka_d=0.1)
        s = VehicleState.initial(p)._replace(actuators=ActuatorState(1.0, 0.0))
        nxt = plant_step(s, 1.0, Disturbance(), p, 0.01)
        assert nxt.net_force_N == pytest.approx(static_axle_loads(p)[0] * 0.1)

    def test_brake_does_not_reverse(self, params):
        s = VehicleState.initial(params, speed_ms=0.5)._replace(actuators=ActuatorState(0.0, 1.0))
        for _ in range(100):
            s = plant_step(s, -1.0, Disturbance(), params, 0.01)
        assert s.speed_ms == 0.0

    def test_rejects_bad_dt(self, params):
        with pytest.raises(ValueError):
            plant_step(VehicleState.initial(params), 0.0, Disturbance(), params, 0.0)

    def test_discharge_under_throttle(self, params):
        s = VehicleState.initial(params, speed_ms=10.0)
        for _ in range(100):
            s = plant_step(s, 1.0, Disturbance(), params, 0.01)
        assert s.battery.current_A > 0
        assert s.battery.soc < 0.8

    @given(
        st.lists(st.floats(-1, 1), min_size=1, max_size=40),
        st.floats(-0.17, 0.17),
        st.floats(-10, 15),
        st.floats(0, 30),
    )
    def test_force_balance_and_non_negative_speed(self, us, theta, v_w, v0):
        p = VehicleParams()
        d = Disturbance(theta, v_w)
        s = VehicleState.initial(p, speed_ms=v0)
        for u in us:
            nxt = plant_step(s, u, d, p, 0.01)
            assert nxt.speed_ms >= 0.0
            if not nxt.clamped:
                dv_dt = (nxt.speed_ms - s.speed_ms) / 0.01
                resistive = _forces(p, s.speed_ms, theta, v_w)
                residual = p.mass_kg * dv_dt + resistive - nxt.net_force_N
                scale = max(abs(nxt.net_force_N), abs(resistive), p.mass_kg * abs(dv_dt), 1.0)
                assert abs(residual) <= 1e-9 * scale
            s = nxt

    def test_deterministic(self, params):
        s = VehicleState.initial(params, speed_ms=7.0)
        d = Disturbance(0.05, 3.0)
        assert plant_step(s, 0.3, d, params, 0.01) == plant_step(s, 0.3, d, params, 0.01)


class TestBatchStep:
    def test_matches_scalar_step(self, params):
        rng = np.random.default_rng(7)
        n = 64
        us = rng.uniform(-1, 1, size=(50, n))
        theta = rng.uniform(-0.17, 0.17, n)
        wind = rng.uniform(-10, 15, n)
        batch = BatchState.initial(n, params)._replace(speed_ms=rng.uniform(0, 30, n))
        scalars = [VehicleState.initial(params, speed_ms=float(v)) for v in batch.speed_ms]
        for u in us:
            batch, bad = plant_step_batch(batch, u, theta, wind, params, 0.01)
            assert not bad.any()
            scalars = [
                plant_step(s, float(ui), Disturbance(float(th), float(w)), params, 0.01)
                for s, ui, th, w in zip(scalars, u, theta, wind)
            ]
        np.testing.assert_allclose(batch.speed_ms, [s.speed_ms for s in scalars], rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(batch.soc, [s.battery.soc for s in scalars], rtol=1e-12)
        np.testing.assert_allclose(
            batch.terminal_voltage_V, [s.battery.terminal_voltage_V for s in scalars], rtol=1e-12
        )


class TestParams:
    def test_defaults(self, params):
        assert params.mass_kg == 1468.0
        assert params.gear_ratio == 3.4
        assert params.cells_parallel == 2

    @pytest.mark.parametrize(
        "change",
        [
            {"mass_kg": 0.0},
            {"motor_efficiency": 1.2},
            {"gear_ratio": 0.5},
            {"ocv_table": ((0.5, 3.0), (0.2, 4.0))},
            {"pacejka_e": float("nan")},
        ],
    )
    def test_rejects_invalid(self, params, change):
        with pytest.raises(ValueError):
            replace(params, **change)

    def test_tables_accept_lists(self):
        p = VehicleParams(ocv_table=[[0, 3.1], [1, 4.1]])
        assert p.ocv_table == ((0.0, 3.1), (1.0, 4.1))
