"""
How long can the heat pump stay off?
====================================

Builds the coarse control model from a tank state, asks for the longest
off-window in the next three hours, then serves a request for part of it.
"""

import numpy as np

from hptes.harness import ScenarioConfig, control_forecasts, prepare_inputs
from hptes.mpc import assess_flexibility, economic_mpc, exploit_flexibility, model_for
from hptes.thermal import PlantState

cfg = ScenarioConfig()
inputs = prepare_inputs(cfg)
tank, hp = cfg.plant.tank(), cfg.plant.hp()

# A well charged tank at ten in the morning, warm at the top, cooler below.
t = cfg.day_start + 10 * 3600.0
state = PlantState(np.linspace(66.0, 62.0, 10), np.linspace(61.0, 48.0, 10), t)

# The economic plan over the six-hour horizon (13 blocked decisions).
fc = control_forecasts(inputs, cfg, t, cfg.mpc.horizon)
plan = economic_mpc(model_for(state, tank, hp, fc, cfg.mpc), cfg.mpc)
print("economic plan (5-min steps):", "".join(map(str, plan.u)))
print(f"cost {plan.objective['energy_cost']:.3f}, slacks {plan.delta1:.2f} / {plan.delta2:.2f} C")

# Assessment runs on single-step decisions over a four-hour look-ahead.
n = cfg.mpc.assessment_horizon
fc = control_forecasts(inputs, cfg, t, n)
cm = model_for(state, tank, hp, fc, cfg.mpc, [1] * n)
window = assess_flexibility(cm, cfg.mpc, heuristic=plan.u[:n])
print(f"offered window: steps {window.offered[0]}..{window.offered[-1]} "
      f"({len(window.offered) * 5} min), least slack {window.delta_star:.2f} C")

# The grid asks for the first hour of the window; the plan keeps it off.
request = window.offered[:12]
served = exploit_flexibility(cm, cfg.mpc, request)
print("served plan:", "".join(map(str, served.u[:cfg.mpc.assessment_period])))
print("off on every requested step:", bool(np.all(served.u[request] == 0)))
