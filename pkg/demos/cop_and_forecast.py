"""
Identifying the heat pump and forecasting hot-water use
========================================================

Fits the bilinear COP surface to noisy samples and builds a day-ahead
hot-water forecast from three weeks of history.
"""

import numpy as np

from hptes import synthetic
from hptes.forecast import forecast_combined
from hptes.harness import fit_or_best
from hptes.thermal import PAPER_COP, cop_eval, fit_cop

# Noisy COP measurements over the operating envelope of the heat pump.
rng = np.random.default_rng(7)
t_in = rng.uniform(30.0, 70.0, 176)
t_amb = rng.uniform(-5.0, 25.0, 176)
cop = cop_eval(PAPER_COP, t_in, t_amb) + rng.normal(0.0, 0.2, 176)

fit = fit_cop(list(zip(t_in, t_amb, cop)))
print("true   a =", np.round(PAPER_COP.coefficients, 4))
print("fitted a =", np.round(fit.params.coefficients, 4))
print(f"residual RMSE {fit.rmse:.3f}, VAF {fit.vaf:.1f}%, condition {fit.condition_number:.0f}")

# Three weeks of 5-minute draw history, then the day that follows.
step = 300.0
per_day = int(synthetic.DAY / step)
history = synthetic.demand_history(22, step, seed=3) / 3600.0   # kg/s
past, actual = history[:-per_day], history[-per_day:]

# One model with a daily season, one with a weekly season, averaged.
daily = fit_or_best(past, (1, 0, 1), (1, 1, 1, per_day))
weekly = fit_or_best(past, (1, 0, 1), (1, 1, 1, 7 * per_day))
forecast = forecast_combined(daily, weekly, past, 0.5, per_day).values

mae_model = np.mean(np.abs(forecast - actual))
mae_naive = np.mean(np.abs(past[-per_day:] - actual))
print(f"day-ahead MAE: combined {mae_model * 3600:.1f} L/h, "
      f"yesterday-repeats {mae_naive * 3600:.1f} L/h")
