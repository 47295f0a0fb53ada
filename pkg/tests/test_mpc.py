from __future__ import annotations

import itertools

import numpy as np
import pytest

from hptes.mpc import (COST_BALANCED, ForecastCoverageError, Forecasts, Hysteresis, MpcConfig,
                       RuleBasedController, assess_flexibility, build_control_model,
                       control_tank, economic_mpc, exploit_flexibility, model_for, rule_based)
from hptes.thermal import (PAPER_COP, Disturbance, HpParams, PlantState, TankParams, simulate)
from oracles.flex_enum import longest_window, slacks, switch_count
from toy import TOY_HP, TOY_TANK, toy_config, toy_instance


def blocked_optimum(cm, cfg):
    """Least J_o over every blocked decision sequence within the switch budget."""
    kwh = cm.hp.rated_power * cm.step / 3600.0
    best = np.inf
    for bits in itertools.product((0, 1), repeat=len(cm.blocks)):
        u = cm.expand(bits)
        if switch_count(u) > cfg.max_switches:
            continue
        d1, d2 = slacks(cm.predict(u)[:, 0], cm.forecasts.active, cfg.t_lower, cfg.t_upper,
                        cfg.comfort)
        best = min(best, kwh * float(cm.forecasts.price @ u) + cfg.m1 * d1 + cfg.m2 * d2)
    return best


def flat_forecasts(n, price=0.2, draw=0.0, t_amb=10.0, step=300.0):
    return Forecasts(0.0, step, np.full(n, price), np.full(n, draw), np.full(n, t_amb), 12.0)


# ---------------------------------------------------------------------------
# Configuration and model
# ---------------------------------------------------------------------------

def test_default_layout_has_thirteen_blocks_over_six_hours():
    cfg = MpcConfig()
    assert cfg.horizon * cfg.step == 6 * 3600
    assert cfg.n_blocks == 13
    assert cfg.unblocked().n_blocks == 72
    assert cfg.block_lengths()[:6] == [4] * 6


@pytest.mark.parametrize("changes", [
    {"blocks": ((4, 6),)},
    {"t_lower": 80.0},
    {"m1": -1.0},
    {"flex_weight": 0.0},
    {"switch_window": 0},
    {"max_switches": -1},
    {"layer_weights": ((1.0,), (1.0, 1.0, 1.0, 1.0))},
])
def test_config_invariants(changes):
    with pytest.raises(ValueError):
        MpcConfig(**changes)


def test_control_tank_preserves_totals():
    ctank = control_tank(TOY_TANK, (2, 4), ((1.0, 3.0), (1.0, 1.0, 1.0, 1.0)))
    assert ctank.layers == (2, 4)
    for k in range(2):
        assert ctank.masses[k].sum() == pytest.approx(TOY_TANK.masses[k].sum())
        assert ctank.wall_conductance[k].sum() == pytest.approx(TOY_TANK.wall_conductance[k].sum())
    assert ctank.masses[0][1] == pytest.approx(3 * ctank.masses[0][0])


def test_heat_pump_off_prediction_is_free_cooling():
    cfg = toy_config(12)
    ctank = control_tank(TOY_TANK, cfg.layers, cfg.layer_weights)
    state = PlantState([66.0, 61.0], [58.0, 52.0, 47.0, 40.0])
    fc = Forecasts(0.0, 300.0, np.full(12, 0.2), np.linspace(0.0, 0.1, 12), 9.0, 12.0)
    cm = build_control_model(state, ctank, TOY_HP, fc, cfg)
    pred = cm.predict(np.zeros(12, int))
    ref = simulate(state, ctank, TOY_HP, [0] * 12, [fc.disturbance(k) for k in range(12)],
                   3600.0, 300.0)
    np.testing.assert_allclose(pred, ref.temps, atol=1e-10)


def test_single_step_rise_of_injection_layer():
    cfg = toy_config(1)
    ctank = TankParams(([100.0, 300.0], np.full(4, 100.0)), ([0.0], np.zeros(3)),
                       (np.zeros(2), np.zeros(4)))
    state = PlantState.uniform(50.0, (2, 4))
    cm = build_control_model(state, ctank, TOY_HP, flat_forecasts(1, t_amb=10.0), cfg)
    rise = cm.predict([1])[1] - state.vector
    q = float(PAPER_COP(50.0, 10.0)) * TOY_HP.rated_power * 1e3
    assert rise[0] == pytest.approx(300.0 * q / (100.0 * ctank.cp))
    np.testing.assert_allclose(rise[1:], 0.0, atol=1e-12)


def test_short_forecast_is_rejected():
    state = PlantState.uniform(60.0, (10, 10))
    with pytest.raises(ForecastCoverageError):
        model_for(state, TOY_TANK, TOY_HP, flat_forecasts(10), MpcConfig())


def test_measured_state_is_projected_onto_control_layers():
    state = PlantState(np.linspace(70, 60, 10), np.linspace(60, 40, 10))
    cfg = toy_config(2)
    cm = model_for(state, TOY_TANK, TOY_HP, flat_forecasts(2), cfg)
    C = np.concatenate(cm.tank.masses)
    assert C @ cm.x0 == pytest.approx(np.concatenate(TOY_TANK.masses) @ state.vector)


# ---------------------------------------------------------------------------
# Economic MPC
# ---------------------------------------------------------------------------

def test_zero_price_with_satisfiable_comfort_needs_no_slack():
    state = PlantState.uniform(66.0, (10, 10))
    cfg = toy_config(8, blocks=((2, 4),))
    cm = model_for(state, TOY_TANK, TOY_HP, flat_forecasts(8, price=0.0, draw=0.05), cfg)
    plan = economic_mpc(cm, cfg)
    assert plan.delta1 == pytest.approx(0.0, abs=1e-7)
    assert plan.delta2 == pytest.approx(0.0, abs=1e-7)


@pytest.mark.parametrize("seed", range(8))
def test_economic_matches_blocked_enumeration(seed):
    cm, cfg = toy_instance(seed, steps=8, blocks=((2, 4),))
    plan = economic_mpc(cm, cfg)
    best = blocked_optimum(cm, cfg)
    assert plan.objective["J_o"] == pytest.approx(best, rel=1e-6, abs=1e-6)
    assert plan.n_binaries == 4
    for blk in cm.blocks:  # constant inside every block
        assert len(set(plan.u[blk.start: blk.start + blk.length])) == 1


def test_price_spike_block_is_skipped_when_tank_can_coast():
    state = PlantState.uniform(70.0, (10, 10))
    cfg = toy_config(8, blocks=((2, 4),), max_switches=2)
    price = np.array([0.1, 0.1, 0.1, 0.1, 5.0, 5.0, 0.1, 0.1])
    fc = Forecasts(0.0, 300.0, price, np.full(8, 0.05), np.full(8, 10.0), 12.0)
    cm = model_for(state, TOY_TANK, TOY_HP, fc, cfg)
    plan = economic_mpc(cm, cfg)
    assert np.all(plan.u[4:6] == 0)
    assert plan.objective["J_o"] == pytest.approx(blocked_optimum(cm, cfg), rel=1e-6)


def test_cold_tank_heats_in_first_block():
    state = PlantState.uniform(55.5, (10, 10))
    cfg = toy_config(8, blocks=((2, 4),))
    fc = Forecasts(0.0, 300.0, np.full(8, 0.3), np.full(8, 0.15), np.full(8, 10.0), 12.0)
    cm = model_for(state, TOY_TANK, TOY_HP, fc, cfg)
    plan = economic_mpc(cm, cfg)
    assert plan.u[0] == 1
    assert plan.objective["J_o"] == pytest.approx(blocked_optimum(cm, cfg), rel=1e-6)


def test_soft_bounds_keep_hopeless_problems_feasible():
    state = PlantState.uniform(35.0, (10, 10))
    cfg = toy_config(6)
    fc = Forecasts(0.0, 300.0, np.full(6, 0.3), np.full(6, 0.4), np.full(6, 0.0), 12.0)
    plan = economic_mpc(model_for(state, TOY_TANK, TOY_HP, fc, cfg), cfg)
    assert plan.status == "optimal"
    assert plan.delta1 > 0 and plan.delta2 > 0


def test_switch_budget_counts_executed_history():
    state = PlantState.uniform(61.0, (10, 10))
    cfg = toy_config(8, max_switches=1)
    fc = Forecasts(0.0, 300.0, np.full(8, 0.3), np.full(8, 0.05), np.full(8, 10.0), 12.0)
    cm = model_for(state, TOY_TANK, TOY_HP, fc, cfg)
    # the heat pump switched on two steps ago: no further switch inside the window
    plan = economic_mpc(cm, cfg, history=[0, 0, 1, 1])
    seq = [0, 0, 1, 1, *plan.u]
    for end in range(len(seq)):
        window = seq[max(0, end - 8): end + 1]
        assert sum(abs(b - a) for a, b in zip(window[:-1], window[1:])) <= 1


def test_warm_start_does_not_change_the_optimum():
    cm, cfg = toy_instance(3, steps=8, blocks=((2, 4),))
    cold = economic_mpc(cm, cfg)
    warm = economic_mpc(cm, cfg, warm_start=np.ones(8, int))
    assert warm.objective["J_o"] == pytest.approx(cold.objective["J_o"], rel=1e-9)


def test_lp_dump_is_written(tmp_path):
    cm, cfg = toy_instance(0, steps=8, blocks=((2, 4),))
    economic_mpc(cm, cfg, lp_dump=tmp_path / "econ.lp")
    assert "Binaries" in (tmp_path / "econ.lp").read_text()


# ---------------------------------------------------------------------------
# Flexibility assessment and exploitation
# ---------------------------------------------------------------------------

def test_charged_tank_without_demand_offers_whole_period():
    state = PlantState.uniform(72.0, (10, 10))
    cfg = toy_config(6)
    cm = model_for(state, TOY_TANK, TOY_HP, flat_forecasts(6, draw=0.0), cfg)
    window = assess_flexibility(cm, cfg)
    assert window.offered == list(range(6))
    assert window.delta_star == 0.0


def test_heavy_demand_window_matches_enumeration():
    state = PlantState.uniform(60.5, (10, 10))
    cfg = toy_config(6)
    fc = Forecasts(0.0, 300.0, np.full(6, 0.2), np.full(6, 0.35), np.full(6, 10.0), 12.0)
    cm = model_for(state, TOY_TANK, TOY_HP, fc, cfg)
    window = assess_flexibility(cm, cfg)
    best, (d1, d2) = longest_window(cm, cfg, 6)
    assert window.delta_star > 0
    assert len(window.offered) == best
    assert window.plan.delta1 == pytest.approx(d1, abs=1e-6)


@pytest.mark.parametrize("seed", range(6))
def test_window_flags_are_consistent(seed):
    cm, cfg = toy_instance(seed)
    w = assess_flexibility(cm, cfg)
    assert np.all(np.diff(w.z) >= 0)
    assert np.all(w.s + w.z <= 1)
    assert np.all(w.plan.u[w.offered] == 0)
    if w.offered:
        assert w.offered == list(range(w.offered[0], w.offered[-1] + 1))


def test_cost_balanced_mode_trades_cost_against_window():
    cm, cfg = toy_instance(5)
    w = assess_flexibility(cm, cfg, mode=COST_BALANCED)
    assert w.plan.objective["J_f"] == pytest.approx(cfg.flex_weight * len(w.offered))
    with pytest.raises(ValueError):
        assess_flexibility(cm, cfg, mode="longest")


def test_empty_request_reproduces_economic_plan():
    cm, cfg = toy_instance(2)
    econ = economic_mpc(cm, cfg)
    same = exploit_flexibility(cm, cfg, [])
    np.testing.assert_array_equal(econ.u, same.u)
    assert same.objective["J_o"] == pytest.approx(econ.objective["J_o"])


@pytest.mark.parametrize("seed", range(6))
def test_full_request_is_served_no_worse_than_assessed(seed):
    cm, cfg = toy_instance(seed)
    w = assess_flexibility(cm, cfg)
    plan = exploit_flexibility(cm, cfg, w.offered)
    assert np.all(plan.u[w.offered] == 0)
    assert plan.delta1 <= w.plan.delta1 + 1e-6
    assert cfg.m1 * plan.delta1 + cfg.m2 * plan.delta2 <= \
        cfg.m1 * w.plan.delta1 + cfg.m2 * w.plan.delta2 + 1e-4


def test_single_step_request_is_pinned():
    cm, cfg = toy_instance(1, steps=8)
    econ = economic_mpc(cm, cfg)
    on = [t for t in range(8) if econ.u[t] == 1]
    target = on[len(on) // 2] if on else 3
    plan = exploit_flexibility(cm, cfg, [target])
    assert plan.u[target] == 0


# ---------------------------------------------------------------------------
# Rule-based baseline
# ---------------------------------------------------------------------------

def _state(top, bottom):
    return PlantState(np.array([top, 60.0]), np.array([55.0, bottom]))


def test_rule_switches_on_below_threshold():
    assert rule_based(_state(61.0, 50.0), currently_on=False) == 1


def test_rule_switches_off_when_bottom_is_hot():
    assert rule_based(_state(61.0, 63.0), currently_on=True) == 0


def test_rule_holds_inside_dead_band():
    assert rule_based(_state(63.0, 61.0), currently_on=True) == 1
    assert rule_based(_state(63.0, 61.0), currently_on=False) == 0


def test_rule_controller_starts_off_and_keeps_memory():
    ctrl = RuleBasedController(Hysteresis())
    assert ctrl.on is False
    assert ctrl(_state(63.0, 40.0)) == 0
    assert ctrl(_state(61.0, 40.0)) == 1
    assert ctrl(_state(63.0, 61.0)) == 1
    assert ctrl(_state(63.0, 63.0)) == 0


def test_plant_bounds_on_heat_pump_parameters():
    with pytest.raises(ValueError):
        HpParams(-1.0, PAPER_COP, 0.2)
    assert Disturbance(0.0, 12.0, 10.0).m_dot_s == 0.0
