import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from codesign_bo.plantsim import (
    ControlParams,
    ControllerGains,
    PlantParams,
    PlantPhysical,
    PlantSimulator,
    SimConfig,
    SimState,
    VehicleParams,
    WindModel,
    controller_step,
    episode_cost,
    equilibrium_state,
    evaluate_performance_index,
    flow_heading,
    induced_angles,
    mix_tether_speeds,
    run_episode,
    step_dynamics,
    unmix_tether_speeds,
    wind_velocity,
)

from oracles import lead_filter_response

CALM = WindModel(enabled=False)
PLANT = PlantParams(0.1, 1.2)


def test_wind_velocity_at_quarter_period():
    vx, vy, vz = wind_velocity(0.25)
    assert vx == pytest.approx(0.606 + 0.0866, abs=1e-15)
    assert vy == pytest.approx(0.065, abs=1e-15)
    assert vz == pytest.approx(0.0087, abs=1e-15)
    assert wind_velocity(0.0) == (0.606, 0.0, 0.0)
    assert wind_velocity(3.0, CALM) == (0.0, 0.0, 0.0)


def test_wind_rejects_negative_time():
    with pytest.raises(ValueError):
        wind_velocity(-1.0)


def test_flow_heading():
    assert flow_heading(1.0, 0.0) == 0.0
    assert flow_heading(0.0, 2.0) == pytest.approx(math.pi / 2)
    assert flow_heading(0.0, 0.0) == 0.0


def test_induced_angles():
    roll, pitch = induced_angles(1.1, 1.0, 1.0, 0.1, 0.1)
    assert pitch == pytest.approx(math.pi / 4, abs=1e-15)
    assert roll == 0.0
    roll, pitch = induced_angles(1.0, 1.0, 1.05, 0.1, 0.1)
    assert roll == pytest.approx(math.atan(0.5), abs=1e-15)
    assert pitch == pytest.approx(-math.atan(0.25), abs=1e-15)
    with pytest.raises(ValueError):
        induced_angles(1, 1, 1, 0.0, 0.1)


@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10))
def test_mixing_round_trip(a, b, c):
    u = mix_tether_speeds(a, b, c)
    assert np.allclose(unmix_tether_speeds(u), [a, b, c], atol=1e-12, rtol=0)


def test_mixing_values():
    assert np.array_equal(mix_tether_speeds(1.0, 0.0, 0.0), [1.0, 1.0, 1.0])
    assert np.array_equal(mix_tether_speeds(0.0, 1.0, 0.0), [-1.0, 1.0, 1.0])
    assert np.array_equal(mix_tether_speeds(0.0, 0.0, 1.0), [0.0, 1.0, -1.0])


def test_pitch_loop_matches_lead_filter_oracle():
    gains = ControllerGains(kp_theta=0.02, kd_theta=0.01, tau_theta=0.3)
    phys = PlantPhysical.from_design(PlantParams())
    state = equilibrium_state(phys, 0.1)
    z = state.tether_length
    outs = []
    for _ in range(60):
        u = controller_step(state, (z, 0.0, 0.0), gains, 0.1, wind=CALM)
        outs.append(u[1])
    ref = lead_filter_response(0.02, 0.01, 0.3, 0.1, [0.1] * 60)
    # stbd speed = v_z + v_theta + v_phi with v_z = v_phi = 0
    assert np.allclose(outs, ref, atol=1e-15)
    assert outs[0] == pytest.approx(0.01 / 0.3 * 0.1, abs=1e-15)
    # DC gain is kp
    assert outs[-1] == pytest.approx(0.02 * 0.1, rel=1e-6)


def test_controller_output_is_mixed():
    gains = ControllerGains()
    phys = PlantPhysical.from_design(PlantParams())
    state = equilibrium_state(phys, 0.0)
    u = controller_step(state, (state.tether_length + 0.2, 0.0, 0.0), gains, 0.1, wind=CALM)
    # pure altitude error: all three tethers move together
    assert u[0] == pytest.approx(u[1]) and u[1] == pytest.approx(u[2])
    assert u[0] > 0


def test_equilibrium_is_a_fixed_point():
    phys = PlantPhysical.from_design(PLANT)
    s = equilibrium_state(phys, 0.07)
    y0 = s.y.copy()
    for _ in range(100):
        s2 = step_dynamics(s, phys, np.zeros(3), CALM, 0.01)
        assert np.max(np.abs(s2.y - s.y)) <= 1e-10
        s = s2
    assert np.max(np.abs(s.y - y0)) <= 1e-8


def test_closed_loop_equilibrium_without_wind():
    sim = PlantSimulator(PLANT, SimConfig(wind=CALM), initial_pitch=0.07)
    y0 = sim.state.y.copy()
    h = sim.advance(30.0)
    n_steps = 30.0 / 0.01
    assert np.max(np.abs(sim.state.y - y0)) <= 1e-10 * n_steps
    assert np.allclose(h.pitch, 0.07, atol=1e-10)


def test_tether_lengths_integrate_constant_speeds():
    sim = PlantSimulator(PLANT, SimConfig(wind=CALM), initial_pitch=0.0)
    l0 = sim.state.tether_lengths
    speeds = np.array([1e-3, -2e-3, 5e-4])
    sim.advance(10.0, speeds=speeds)
    assert np.allclose(sim.state.tether_lengths - l0, speeds * 10.0, atol=1e-12, rtol=0)


def _undamped():
    v = replace(
        VehicleParams(), zenith_damping=0.0, azimuth_damping=0.0, twist_damping=0.0, roll_damping=0.0
    )
    phys = PlantPhysical(0.2, 1.0, 1.0, 0.5, 0.0)
    return v, phys


def _run_free(v, phys, y0, dt, T):
    s = SimState(y0.copy())
    for _ in range(int(round(T / dt))):
        s = step_dynamics(s, phys, np.zeros(3), CALM, dt, v)
    return s


def test_energy_drift_shrinks_at_fourth_order():
    v, phys = _undamped()
    y0 = equilibrium_state(phys, 0.0, v).y
    y0[0], y0[2], y0[4], y0[6], y0[8] = 0.3, -0.2, 0.1, 0.05, 0.04
    e0 = SimState(y0).mechanical_energy(phys, v)
    # 10^3 steps, then the same horizon at half the step
    coarse = abs(_run_free(v, phys, y0, 0.01, 10.0).mechanical_energy(phys, v) - e0)
    fine = abs(_run_free(v, phys, y0, 0.005, 10.0).mechanical_energy(phys, v) - e0)
    assert coarse < 1e-4 * e0
    assert coarse / fine >= 16.0


def test_rk4_global_error_ratio():
    v, phys = _undamped()
    y0 = equilibrium_state(phys, 0.0, v).y
    y0[0], y0[6] = 0.3, 0.05
    ref = _run_free(v, phys, y0, 0.00125, 2.0).y
    e1 = np.max(np.abs(_run_free(v, phys, y0, 0.02, 2.0).y - ref))
    e2 = np.max(np.abs(_run_free(v, phys, y0, 0.01, 2.0).y - ref))
    assert 12.0 < e1 / e2 < 20.0


def test_episode_index_converges_with_step_halving():
    J = [
        episode_cost(PLANT, ControlParams(0.05), 30.0, 60.0, config=SimConfig(dt=dt))
        for dt in (0.02, 0.01, 0.005)
    ]
    d1, d2 = abs(J[0] - J[1]), abs(J[1] - J[2])
    assert d2 < d1 / 4.0


def test_step_dynamics_rejects_large_step():
    phys = PlantPhysical.from_design(PLANT)
    with pytest.raises(ValueError):
        step_dynamics(equilibrium_state(phys, 0.0), phys, np.zeros(3), CALM, 0.1)


def test_simulation_is_deterministic():
    a = run_episode(PLANT, ControlParams(0.05), 20.0, seed=3)
    b = run_episode(PLANT, ControlParams(0.05), 20.0, seed=3)
    assert np.array_equal(a.data, b.data)


def test_index_is_zero_for_stationary_flight():
    h = run_episode(PLANT, ControlParams(0.05), 60.0, config=SimConfig(wind=CALM))
    assert evaluate_performance_index(h, window=(20.0, 60.0)) == 0.0


def test_index_positive_under_wind():
    assert episode_cost(PLANT, ControlParams(0.05), 30.0, 60.0) > 0.0


def test_index_trapezoid_against_hand_integral():
    h = run_episode(PLANT, ControlParams(0.05), 10.0)
    t = h.time
    mask = (t >= 2.0 - 1e-9) & (t <= 8.0 + 1e-9)
    dpsi = np.angle(np.exp(1j * (h.heading - h.flow_heading)))
    f = 2.0 * h.zenith**2 + 0.5 * dpsi**2 + 3.0 * h.roll**2
    tm, fm = t[mask], f[mask]
    hand = float(np.sum(0.5 * (fm[1:] + fm[:-1]) * np.diff(tm)))
    assert evaluate_performance_index(h, (2.0, 0.5, 3.0), (2.0, 8.0)) == pytest.approx(hand, rel=1e-12)


def test_index_window_outside_history():
    h = run_episode(PLANT, ControlParams(0.05), 5.0)
    with pytest.raises(ValueError):
        evaluate_performance_index(h, window=(0.0, 10.0))


def test_single_interior_minimum_in_pitch():
    th = np.linspace(-0.2, 0.35, 21)
    J = np.array([episode_cost(PlantParams(0.0, 1.25), ControlParams(t)) for t in th])
    k = int(np.argmin(J))
    assert 0 < k < 20
    assert np.all(np.diff(J[: k + 1]) < 0)
    assert np.all(np.diff(J[k:]) > 0)


def test_best_pitch_depends_on_plant():
    th = np.linspace(-0.2, 0.35, 23)
    best = []
    for cm in (-0.5, 0.5):
        J = [episode_cost(PlantParams(cm, 1.25), ControlParams(t)) for t in th]
        best.append(th[int(np.argmin(J))])
    assert best[0] - best[1] > 0.1


def test_settling_time_is_sufficient():
    a = episode_cost(PLANT, ControlParams(0.05), 60.0, 120.0)
    b = episode_cost(PLANT, ControlParams(0.05), 120.0, 120.0)
    assert abs(a - b) / a < 0.01


def test_strong_current_diverges_and_is_reported():
    sim = PlantSimulator(PLANT, SimConfig(wind=WindModel(v_base=20.0)))
    res = sim.run_window(0.3, 20.0, 20.0)
    assert res.diverged
    assert math.isinf(res.cost)
    with pytest.raises(RuntimeError):
        sim.advance(1.0)
    sim.reset()
    assert not sim.diverged


def test_sim_config_validation():
    with pytest.raises(ValueError):
        SimConfig(dt=0.1)
    with pytest.raises(ValueError):
        SimConfig(dt=0.03)  # 0.1 s control period is not a whole number of steps
    with pytest.raises(ValueError):
        PlantPhysical.from_design(PlantParams(0.0, -1.0))
