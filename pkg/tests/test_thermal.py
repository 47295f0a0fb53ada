from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from hptes.thermal import (CP_WATER, PAPER_COP, CalibrationError, CopParams, Disturbance,
                           HpParams, PlantError, PlantState, TankParams, cop_eval, dynamics,
                           enthalpy_balance, fit_cop, hp_heat_output, max_stable_dt,
                           plant_step, simulate)
from oracles.plant_rhs import layer_heat_rates

TANK = TankParams.uniform((10, 10), (500.0, 500.0), (2.5, 2.5), (1.5, 1.5))
HP = HpParams(10.0, PAPER_COP, 0.18)


def oracle_rates(x, tank, hp, u, d):
    return layer_heat_rates(x, tank.masses, tank.layer_conductance, tank.wall_conductance,
                            tank.cp, hp.rated_power, tuple(hp.cop.coefficients),
                            hp.circulation_rate, u, d.m_dot_s, d.t_cold, d.t_amb)


# ---------------------------------------------------------------------------
# COP surface
# ---------------------------------------------------------------------------

def test_cop_reference_point():
    assert cop_eval(PAPER_COP, 55.0, 10.0) == pytest.approx(1.3872, abs=1e-12)


def test_cop_degenerate_cases():
    assert cop_eval(CopParams(2.7, 0, 0, 0), 31.0, -4.0) == 2.7
    assert cop_eval(CopParams(0, 1, 0, 0), 2.0, 99.0) == 2.0


@given(st.floats(0, 80), st.floats(0, 80), st.floats(-20, 40), st.floats(-20, 40))
def test_cop_cross_difference_is_a4_term(t1, t2, s1, s2):
    f = PAPER_COP
    cross = cop_eval(f, t1, s1) - cop_eval(f, t1, s2) - cop_eval(f, t2, s1) + cop_eval(f, t2, s2)
    assert cross == pytest.approx(f.a4 * (t1 - t2) * (s1 - s2), abs=1e-9)


def test_cop_box_validation_uses_corners():
    PAPER_COP.validate()
    with pytest.raises(ValueError):
        CopParams(0.5, -0.05, 0.0, 0.0, t_in_range=(10.0, 70.0)).validate()


def test_fit_cop_noiseless_recovery():
    rng = np.random.default_rng(4)
    true = CopParams(3.3, -0.04, 0.02, 0.0003)
    t_in, t_amb = rng.uniform(20, 70, 50), rng.uniform(-5, 25, 50)
    fit = fit_cop(zip(t_in, t_amb, cop_eval(true, t_in, t_amb)))
    np.testing.assert_allclose(fit.params.coefficients, true.coefficients, atol=1e-9)
    assert fit.rmse < 1e-9
    assert fit.n_samples == 50


def test_fit_cop_noisy_rmse_near_sigma():
    rng = np.random.default_rng(11)
    t_in, t_amb = rng.uniform(20, 70, 176), rng.uniform(-5, 25, 176)
    y = cop_eval(PAPER_COP, t_in, t_amb) + rng.normal(0, 0.2, 176)
    fit = fit_cop(zip(t_in, t_amb, y))
    assert 0.1 <= fit.rmse <= 0.3
    assert 0 < fit.vaf <= 100


def test_fit_cop_rejects_too_few_samples():
    with pytest.raises(CalibrationError):
        fit_cop([(50, 10, 2.0), (55, 10, 1.9), (60, 5, 1.8)])


def test_fit_cop_rejects_rank_deficient_design():
    with pytest.raises(CalibrationError, match="condition"):
        fit_cop([(50.0, float(t), 2.0) for t in range(10)])


# ---------------------------------------------------------------------------
# Heat pump output
# ---------------------------------------------------------------------------

def test_heat_pump_off_delivers_nothing():
    q, t_out = hp_heat_output(HP, 47.0, 8.0, 0)
    assert q == 0.0 and t_out == 47.0


def test_heat_pump_output_and_outlet_temperature():
    hp = HpParams(10.0, CopParams(2.0, 0, 0, 0), 0.5)
    q, t_out = hp_heat_output(hp, 50.0, 10.0, 1)
    assert q == pytest.approx(20.0)
    assert t_out == pytest.approx(50 + 20000 / (0.5 * 4186))
    assert t_out == pytest.approx(59.55, abs=0.01)


def test_heat_pump_rejects_non_binary_input():
    with pytest.raises(ValueError):
        hp_heat_output(HP, 50.0, 10.0, 2)


def test_heat_pump_parameters_must_be_positive():
    with pytest.raises(ValueError):
        HpParams(0.0, PAPER_COP, 0.2)
    with pytest.raises(ValueError):
        HpParams(10.0, PAPER_COP, 0.0)


# ---------------------------------------------------------------------------
# Plant dynamics
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("u", [0, 1])
@pytest.mark.parametrize("draw", [0.0, 0.05, 0.3])
def test_dynamics_match_longhand_balance(u, draw):
    rng = np.random.default_rng(int(10 * draw) + u)
    tank = TankParams((rng.uniform(20, 80, 3), rng.uniform(20, 80, 5)),
                      (rng.uniform(0, 40, 2), rng.uniform(0, 40, 4)),
                      (rng.uniform(0, 2, 3), rng.uniform(0, 2, 5)))
    d = Disturbance(draw, 11.0, 7.0)
    for _ in range(5):
        x = rng.uniform(15, 75, 8)
        M, v = dynamics(tank, HP, u, d)
        np.testing.assert_allclose(M @ x + v, oracle_rates(x, tank, HP, u, d), rtol=1e-12, atol=1e-14)


def test_equilibrium_without_losses_or_flows():
    tank = TankParams.uniform((10, 10), (500, 500), (0.0, 0.0), (1.5, 1.5))
    s = PlantState.uniform(57.0, (10, 10))
    after = plant_step(s, tank, HP, 0, Disturbance(0.0, 12.0, 3.0), 10.0)
    np.testing.assert_array_equal(after.vector, s.vector)
    assert after.timestamp == 10.0


def test_two_layer_conduction_conserves_enthalpy():
    tank = TankParams(([50.0, 50.0], [100.0]), ([20.0], []), ([0.0, 0.0], [0.0]))
    s = PlantState([80.0, 40.0], [30.0])
    d = Disturbance(0.0, 12.0, 10.0)
    after = plant_step(s, tank, HP, 0, d, 10.0)
    C = tank.heat_capacity
    assert abs(C @ after.vector - C @ s.vector) <= 1e-9 * abs(C @ s.vector)
    assert 40.0 < after.t1[1] < after.t1[0] < 80.0
    assert after.t2[0] == 30.0


def test_step_response_matches_exact_integration():
    s = PlantState.uniform(55.0, (10, 10))
    d = Disturbance(0.0, 12.0, 10.0)
    traj = simulate(s, TANK, HP, [1] * 360, [d] * 360, 3600.0, 10.0)
    # the affine system with constant input has a closed-form solution
    n = 20
    M = np.column_stack([oracle_rates(e, TANK, HP, 1, d) - oracle_rates(np.zeros(n), TANK, HP, 1, d)
                         for e in np.eye(n)])
    v = oracle_rates(np.zeros(n), TANK, HP, 1, d)
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n], aug[:n, n] = M, v
    exact = (expm(aug * 3600.0) @ np.append(s.vector, 1.0))[:n]
    # supply temperature within 0.05 °C; first-order stepping error elsewhere stays below 0.1 °C
    assert abs(traj.temps[-1][0] - exact[0]) < 0.05
    assert np.max(np.abs(traj.temps[-1] - exact)) < 0.1


def test_step_above_stability_limit_is_rejected():
    limit = max_stable_dt(TANK, HP, 1)
    s = PlantState.uniform(55.0, (10, 10))
    with pytest.raises(PlantError, match="stability"):
        plant_step(s, TANK, HP, 1, Disturbance(0.0, 12.0, 10.0), 1.5 * limit)


STEADY_HP = HpParams(10.0, CopParams(3.0, 0.0, 0.0, 0.0), 0.18)


def test_overheating_is_reported():
    s = PlantState(np.full(10, 99.9), np.full(10, 99.9))
    with pytest.raises(PlantError, match="boiling"):
        plant_step(s, TANK, STEADY_HP, 1, Disturbance(0.0, 12.0, 10.0), 10.0)


def test_plant_state_rejects_non_finite():
    with pytest.raises(ValueError):
        PlantState([np.nan, 50.0], [50.0])


def test_negative_draw_is_rejected():
    with pytest.raises(ValueError):
        Disturbance(-0.1, 12.0, 10.0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(20.0, 70.0), min_size=20, max_size=20),
       st.floats(0.0, 0.4), st.floats(20.0, 70.0), st.floats(20.0, 70.0))
def test_comparison_principle_heat_pump_off(x0, draw, t_cold, t_amb):
    lo = min(min(x0), t_cold, t_amb)
    hi = max(max(x0), t_cold, t_amb)
    s = PlantState.from_vector(np.array(x0), (10, 10))
    d = Disturbance(draw, t_cold, t_amb)
    for _ in range(30):
        s = plant_step(s, TANK, HP, 0, d, 10.0)
        assert np.all(s.vector >= lo - 1e-9) and np.all(s.vector <= hi + 1e-9)


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

def test_zero_horizon_returns_initial_state():
    s = PlantState.uniform(60.0, (10, 10), 123.0)
    traj = simulate(s, TANK, HP, [], [], 0.0, 10.0)
    assert len(traj) == 1
    np.testing.assert_array_equal(traj.temps[0], s.vector)
    assert traj.times[0] == 123.0


def test_trajectory_length_and_csv_schema(tmp_path):
    s = PlantState.uniform(60.0, (10, 10))
    d = Disturbance(0.05, 12.0, 10.0)
    traj = simulate(s, TANK, HP, lambda t: int(t >= 50), lambda t: d, 100.0, 10.0)
    assert len(traj) == 11
    path = tmp_path / "traj.csv"
    traj.to_csv(path)
    header = path.read_text().splitlines()[0].split(",")
    assert header == (["timestamp"] + [f"T1_{i}" for i in range(1, 11)]
                      + [f"T2_{i}" for i in range(1, 11)] + ["u", "m_dot_s", "T_amb"])


def test_top_rises_while_below_exchanger_outlet():
    s = PlantState.uniform(40.0, (10, 10))
    d = Disturbance(0.0, 12.0, 20.0)
    traj = simulate(s, TANK, HP, [1] * 360, [d] * 360, 3600.0, 10.0)
    outlet = [hp_heat_output(HP, traj.state(k).hp_inlet, 20.0, 1)[1] for k in range(len(traj))]
    below = traj.top[:-1] < np.array(outlet[:-1])
    assert below.all()
    assert np.all(np.diff(traj.top) >= -1e-12)


def test_simulation_splits_into_chained_calls():
    s = PlantState.uniform(62.0, (10, 10))
    rng = np.random.default_rng(3)
    us = rng.integers(0, 2, 120)
    ds = [Disturbance(float(m), 12.0, float(a))
          for m, a in zip(rng.uniform(0, 0.2, 120), rng.uniform(0, 20, 120))]
    whole = simulate(s, TANK, HP, us, ds, 1200.0, 10.0)
    first = simulate(s, TANK, HP, us[:70], ds[:70], 700.0, 10.0)
    second = simulate(first.state(len(first) - 1), TANK, HP, us[70:], ds[70:], 500.0, 10.0)
    np.testing.assert_array_equal(whole.temps[-1], second.temps[-1])
    joined = type(whole).concatenate(first, second)
    np.testing.assert_array_equal(joined.temps, whole.temps)
    np.testing.assert_array_equal(joined.u, whole.u)


def test_simulation_error_carries_timestamp_and_partial_trajectory():
    s = PlantState(np.full(10, 99.0), np.full(10, 99.0))
    with pytest.raises(PlantError) as info:
        simulate(s, TANK, STEADY_HP, [1] * 100, [Disturbance(0.0, 12.0, 10.0)] * 100, 1000.0, 10.0)
    assert info.value.timestamp is not None
    assert len(info.value.partial) >= 1


def test_short_control_series_is_rejected():
    s = PlantState.uniform(60.0, (10, 10))
    with pytest.raises(ValueError):
        simulate(s, TANK, HP, [1] * 5, [Disturbance(0, 12, 10)] * 10, 100.0, 10.0)


def test_enthalpy_balance_helper_agrees_with_stored_energy():
    s = PlantState(np.linspace(70, 50, 10), np.linspace(50, 30, 10))
    d = Disturbance(0.1, 12.0, 8.0)
    after = plant_step(s, TANK, HP, 1, d, 10.0)
    stored, boundary = enthalpy_balance(s, after, TANK, HP, 1, d, 10.0)
    assert abs(stored - boundary) <= 1e-9 * abs(boundary)
    assert TANK.cp == CP_WATER
