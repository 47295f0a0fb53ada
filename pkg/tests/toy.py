"""Small control problems shared by the controller tests."""

from __future__ import annotations

import numpy as np

from hptes.mpc import Forecasts, MpcConfig, model_for
from hptes.thermal import PAPER_COP, HpParams, PlantState, TankParams

TOY_TANK = TankParams.uniform((10, 10), (500.0, 500.0), (2.5, 2.5), (1.5, 1.5))
TOY_HP = HpParams(10.0, PAPER_COP, 0.18)


def toy_config(steps: int = 6, **changes) -> MpcConfig:
    base = dict(horizon=steps, blocks=((1, steps),), assessment_horizon=steps,
                assessment_period=steps, switch_window=8, max_switches=2, time_limit=None)
    base.update(changes)
    return MpcConfig(**base)


def toy_instance(seed: int, steps: int = 6, **changes):
    """A random short-horizon control model with a warm-ish tank and a random draw."""
    rng = np.random.default_rng(seed)
    cfg = toy_config(steps, **changes)
    top = rng.uniform(58.0, 66.0)
    t1 = np.linspace(top, top - rng.uniform(0.0, 6.0), 10)
    t2 = np.linspace(t1[-1] - rng.uniform(0.0, 4.0), rng.uniform(35.0, 55.0), 10)
    state = PlantState(t1, t2, 0.0)
    fc = Forecasts(0.0, cfg.step, rng.uniform(0.05, 0.3, steps), rng.uniform(0.0, 0.4, steps),
                   rng.uniform(5.0, 15.0, steps), 12.0)
    return model_for(state, TOY_TANK, TOY_HP, fc, cfg), cfg
