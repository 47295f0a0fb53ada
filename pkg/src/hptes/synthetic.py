"""Synthetic inputs shaped like a Dutch office-building hot-water day.

Prices follow a day-ahead pattern with a morning and an evening peak and a
cheaper midday; hot-water use is a working-day hump peaking mid-afternoon.
All generators are deterministic for a given seed.
"""

from __future__ import annotations

import numpy as np

HOUR = 3600.0
DAY = 24 * HOUR
WEEK = 7 * DAY

OPENING = 7 * HOUR
CLOSING = 17.5 * HOUR


def price_profile(t) -> np.ndarray:
    """Day-ahead style price in EUR/kWh as a function of seconds since midnight."""
    h = (np.asarray(t, dtype=float) % DAY) / HOUR
    base = 0.105
    morning = 0.085 * np.exp(-0.5 * ((h - 8.25) / 1.1) ** 2)
    evening = 0.120 * np.exp(-0.5 * ((h - 18.5) / 1.6) ** 2)
    midday = -0.055 * np.exp(-0.5 * ((h - 13.5) / 1.8) ** 2)
    night = -0.03 * np.exp(-0.5 * ((np.minimum(h, 24 - h + 3) - 3.0) / 2.5) ** 2)
    return base + morning + evening + midday + night


def hourly_price(day_start: float = 0.0, hours: int = 48):
    """Hourly step prices (timestamps, EUR/kWh) sampled at each hour's midpoint."""
    t = day_start + HOUR * np.arange(hours)
    return t, np.round(price_profile(t + 0.5 * HOUR), 4)


def demand_shape(t, weekday: bool = True) -> np.ndarray:
    """Expected hot-water draw in L/h at seconds-since-midnight ``t``."""
    h = (np.asarray(t, dtype=float) % DAY) / HOUR
    open_ = (h >= 7.0) & (h < 17.5)
    if not weekday:
        return np.where(open_, 15.0, 0.0)
    morning = 70.0 * np.exp(-0.5 * ((h - 9.0) / 0.9) ** 2)
    lunch = 110.0 * np.exp(-0.5 * ((h - 12.5) / 0.8) ** 2)
    peak = 260.0 * np.exp(-0.5 * ((h - 15.0) / 0.9) ** 2)
    return np.where(open_, 25.0 + morning + lunch + peak, 0.0)


def demand_history(days: int, step: float = 300.0, seed: int = 0,
                   noise: float = 0.25, start_weekday: int = 0) -> np.ndarray:
    """Hot-water draw in L/h on a ``step`` grid over ``days`` consecutive days.

    Each day scales the weekday/weekend shape by a lognormal day factor and
    multiplies in autocorrelated noise, so the series has both a daily and a
    weekly season plus realistic day-to-day spread.
    """
    rng = np.random.default_rng(seed)
    per_day = int(round(DAY / step))
    out = np.empty(days * per_day)
    t = np.arange(per_day) * step + 0.5 * step
    rho = 0.8
    for d in range(days):
        weekday = (start_weekday + d) % 7 < 5
        factor = float(np.exp(rng.normal(0.0, 0.12)))
        e = np.empty(per_day)
        e[0] = rng.normal(0.0, noise)
        shocks = rng.normal(0.0, noise * np.sqrt(1 - rho ** 2), per_day)
        for k in range(1, per_day):
            e[k] = rho * e[k - 1] + shocks[k]
        out[d * per_day:(d + 1) * per_day] = demand_shape(t, weekday) * factor * np.exp(e)
    return out


def hourly_demand(day: int = 0, seed: int = 0, weekday: bool = True) -> np.ndarray:
    """Hourly metered consumption (L/h) for one day, as a building meter would log it."""
    rng = np.random.default_rng(seed + 1000 * day)
    t = (np.arange(24) + 0.5) * HOUR
    fine = np.linspace(0, HOUR, 13)[:-1] + HOUR / 24
    vals = np.array([demand_shape(h - 0.5 * HOUR + fine, weekday).mean() for h in t])
    return np.round(vals * np.exp(rng.normal(0.0, 0.08, 24)), 1)


def ambient_profile(t, mean: float = 11.0, swing: float = 3.0) -> np.ndarray:
    """Outdoor temperature (°C), coolest at 5:00 and warmest at 15:00."""
    h = (np.asarray(t, dtype=float) % DAY) / HOUR
    return mean + swing * np.cos(2 * np.pi * (h - 15.0) / 24.0)
