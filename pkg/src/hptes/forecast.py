"""Hot-water demand prediction.

Two pieces: turning hourly consumption readings into a minute-level profile
with a shape-preserving piecewise cubic, and seasonal ARIMA models fitted by
conditional sum of squares, blended as a daily/weekly pair.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import least_squares
from scipy.signal import lfilter

MEASURED = "measured"
INTERPOLATED = "interpolated"
SARIMA_COMBINED = "sarima-combined"

LITRES_PER_KG = 1.0


class ForecastError(ValueError):
    pass


class SarimaFitError(RuntimeError):
    """Fit did not converge; ``best`` holds the best parameters found."""

    def __init__(self, message: str, best: "SarimaSpec | None" = None):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class DemandForecast:
    start: float              # s
    step: float               # s
    values: np.ndarray        # kg/s
    provenance: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        vals = np.clip(np.asarray(self.values, dtype=float), 0.0, None)
        if not np.all(np.isfinite(vals)):
            raise ForecastError("demand values must be finite")
        object.__setattr__(self, "values", vals)
        prov = tuple(self.provenance) or (MEASURED,) * len(vals)
        if len(prov) == 1 and len(vals) != 1:
            prov = prov * len(vals)
        if len(prov) != len(vals):
            raise ForecastError("provenance must tag every point")
        object.__setattr__(self, "provenance", prov)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def times(self) -> np.ndarray:
        return self.start + self.step * np.arange(len(self.values))

    @property
    def litres_per_hour(self) -> np.ndarray:
        return self.values * 3600.0 * LITRES_PER_KG

    def resample(self, step: float) -> "DemandForecast":
        """Average onto a coarser grid whose step is a multiple of the current one."""
        ratio = step / self.step
        k = int(round(ratio))
        if k < 1 or abs(ratio - k) > 1e-9:
            raise ForecastError(f"cannot resample step {self.step:g}s onto {step:g}s")
        n = len(self.values) // k
        vals = self.values[: n * k].reshape(n, k).mean(axis=1)
        prov = tuple(self.provenance[i * k] for i in range(n))
        return DemandForecast(self.start, step, vals, prov, dict(self.meta))

    def window(self, start: float, count: int) -> np.ndarray:
        i0 = int(round((start - self.start) / self.step))
        if i0 < 0 or i0 + count > len(self.values):
            raise ForecastError("forecast does not cover the requested window")
        return self.values[i0: i0 + count]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["timestamp", "kg_per_s", "provenance"])
            for t, v, p in zip(self.times, self.values, self.provenance):
                w.writerow([f"{t:.6g}", f"{v:.8g}", p])


def interpolate_hourly(hourly, out_step: float = 60.0, start: float = 0.0) -> DemandForecast:
    """Minute-level (or ``out_step``) profile from hourly consumption in L/h.

    Each hourly reading is placed at the middle of its hour and joined by a
    monotone piecewise cubic (PCHIP), held flat beyond the first and last
    midpoints.  The curve is sampled at the centre of every output interval.
    The per-hour volume ratio (interpolated / measured) is reported in
    ``meta["volume_ratio"]``; it is not enforced.
    """
    q = np.asarray(hourly, dtype=float)
    if q.ndim != 1 or q.size < 2:
        raise ForecastError("need at least two hourly readings")
    if np.any(q < 0) or not np.all(np.isfinite(q)):
        raise ForecastError("hourly readings must be finite and non-negative")
    per_hour = 3600.0 / out_step
    if abs(per_hour - round(per_hour)) > 1e-9:
        raise ForecastError("out_step must divide one hour")
    per_hour = int(round(per_hour))
    knots = (np.arange(q.size) + 0.5) * 3600.0
    spline = PchipInterpolator(knots, q, extrapolate=False)
    t = (np.arange(q.size * per_hour) + 0.5) * out_step
    lph = spline(np.clip(t, knots[0], knots[-1]))
    lph = np.clip(lph, 0.0, None)
    hourly_mean = lph.reshape(q.size, per_hour).mean(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(q > 0, hourly_mean / q, np.where(hourly_mean > 0, np.inf, 1.0))
    kg_s = lph / 3600.0 / LITRES_PER_KG
    return DemandForecast(start, out_step, kg_s, (INTERPOLATED,) * kg_s.size,
                          {"volume_ratio": ratio})


# ---------------------------------------------------------------------------
# Seasonal ARIMA
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SarimaSpec:
    order: tuple[int, int, int]
    seasonal_order: tuple[int, int, int, int]
    ar: tuple[float, ...] = ()
    seasonal_ar: tuple[float, ...] = ()
    ma: tuple[float, ...] = ()
    seasonal_ma: tuple[float, ...] = ()
    sigma2: float = 0.0
    mean: float = 0.0

    def __post_init__(self):
        p, d, q = self.order
        P_, D, Q, S = self.seasonal_order
        if min(p, d, q, P_, D, Q) < 0 or S < 1:
            raise ForecastError("orders must be >= 0 and season length >= 1")
        for name, coef, k in (("ar", self.ar, p), ("seasonal_ar", self.seasonal_ar, P_),
                              ("ma", self.ma, q), ("seasonal_ma", self.seasonal_ma, Q)):
            if coef and len(coef) != k:
                raise ForecastError(f"{name} has {len(coef)} coefficients, order says {k}")
        if not self.is_stationary():
            raise ForecastError("AR polynomials must have all roots outside the unit circle")

    @property
    def season(self) -> int:
        return self.seasonal_order[3]

    def _coef(self, name: str, k: int) -> np.ndarray:
        c = getattr(self, name)
        return np.asarray(c if c else np.zeros(k), dtype=float)

    def ar_poly(self) -> np.ndarray:
        """Coefficients (ascending powers of L) of phi(L) * Phi(L^S)."""
        p, _, _ = self.order
        P_, _, _, S = self.seasonal_order
        return _mul_seasonal(_lag_poly(-self._coef("ar", p)),
                             _lag_poly(-self._coef("seasonal_ar", P_)), S)

    def ma_poly(self) -> np.ndarray:
        _, _, q = self.order
        _, _, Q, S = self.seasonal_order
        return _mul_seasonal(_lag_poly(self._coef("ma", q)),
                             _lag_poly(self._coef("seasonal_ma", Q)), S)

    def diff_poly(self) -> np.ndarray:
        _, d, _ = self.order
        _, D, _, S = self.seasonal_order
        poly = np.array([1.0])
        for _ in range(d):
            poly = np.convolve(poly, [1.0, -1.0])
        seas = np.zeros(S + 1)
        seas[0], seas[S] = 1.0, -1.0
        for _ in range(D):
            poly = np.convolve(poly, seas)
        return poly

    def is_stationary(self) -> bool:
        return _roots_outside(_lag_poly(-self._coef("ar", self.order[0]))) and \
            _roots_outside(_lag_poly(-self._coef("seasonal_ar", self.seasonal_order[0])))

    def residuals(self, y) -> np.ndarray:
        """One-step conditional residuals aligned with ``y`` (zeros where undefined)."""
        y = np.asarray(y, dtype=float)
        return _css_residuals(y, self.diff_poly(), self.ar_poly(), self.ma_poly(), self.mean)[1]

    def forecast(self, history, horizon: int) -> np.ndarray:
        y = np.asarray(history, dtype=float)
        full_ar = np.convolve(self.ar_poly(), self.diff_poly())
        ma = self.ma_poly()
        eps = self.residuals(y)
        n = y.size
        order_ar = full_ar.size - 1
        order_ma = ma.size - 1
        need = max(order_ar, order_ma)
        if n < need:
            raise ForecastError(f"history of {n} points is shorter than the model memory {need}")
        mu = self.mean
        yc = np.concatenate([y - mu, np.zeros(horizon)])
        e = np.concatenate([eps, np.zeros(horizon)])
        a = -full_ar[1:][::-1]           # multiplies y[t-order_ar .. t-1]
        b = ma[1:][::-1]
        for h in range(horizon):
            t = n + h
            val = 0.0
            if order_ar:
                val += a @ yc[t - order_ar: t]
            if order_ma:
                val += b @ e[t - order_ma: t]
            yc[t] = val
        return yc[n:] + mu


def _lag_poly(coefs: np.ndarray) -> np.ndarray:
    return np.concatenate([[1.0], np.asarray(coefs, dtype=float)])


def _mul_seasonal(nonseasonal: np.ndarray, seasonal: np.ndarray, S: int) -> np.ndarray:
    spread = np.zeros((seasonal.size - 1) * S + 1)
    spread[::S] = seasonal
    return np.convolve(nonseasonal, spread)


def _roots_outside(poly: np.ndarray) -> bool:
    if poly.size <= 1 or np.allclose(poly[1:], 0.0):
        return True
    roots = np.roots(poly[::-1])
    return bool(np.all(np.abs(roots) > 1.0))


def _project_outside(coefs: np.ndarray, sign: float, margin: float = 1e-3) -> np.ndarray:
    """Reflect lag-polynomial roots inside the unit circle to the outside."""
    poly = _lag_poly(sign * coefs)
    if _roots_outside(poly):
        return coefs
    roots = np.roots(poly[::-1])
    mod = np.abs(roots)
    roots = np.where(mod <= 1.0, roots / np.maximum(mod, 1e-12) ** 2 * (1 + margin), roots)
    roots = np.where(np.abs(roots) <= 1.0, roots * (1 + margin) / np.abs(roots), roots)
    new = np.real(np.poly(roots)[::-1])
    new = new / new[0]
    return sign * new[1:]


def _css_residuals(y, diff, ar, ma, mean):
    w = np.convolve(y, diff, mode="valid") if diff.size > 1 else y.copy()
    w = w - mean
    off = diff.size - 1
    if w.size <= ar.size - 1:
        raise ForecastError("series too short for the model orders")
    v = np.convolve(w, ar, mode="valid") if ar.size > 1 else w
    e = lfilter([1.0], ma, v)
    full = np.zeros(y.size)
    full[off + ar.size - 1:] = e
    return e, full


def fit_sarima(series, order=(1, 0, 1), seasonal_order=(1, 1, 1, 24),
               max_nfev: int = 200) -> SarimaSpec:
    """Conditional-sum-of-squares fit of a seasonal ARIMA model.

    Pre-sample innovations are zero and the first ``p + P*S`` differenced
    points only seed the recursion.  Coefficients are boxed to (-0.99, 0.99)
    and any AR/MA polynomial with roots on or inside the unit circle is
    reflected outward afterwards.  With no differencing the sample mean is
    removed first and forecasts revert to it.
    """
    y = np.asarray(series.values if isinstance(series, DemandForecast) else series, dtype=float)
    p, d, q = order
    P_, D, Q, S = seasonal_order
    base = SarimaSpec(tuple(order), tuple(seasonal_order))
    if y.size < 3 * S:
        raise ForecastError(f"history of {y.size} points is shorter than 3 seasons ({3 * S})")
    diff = base.diff_poly()
    w = np.convolve(y, diff, mode="valid") if diff.size > 1 else y
    if not np.all(np.isfinite(w)):
        raise ForecastError("differenced series is not finite")
    mean = float(np.mean(w)) if d + D == 0 else 0.0
    k = p + P_ + q + Q

    def unpack(theta):
        i = 0
        parts = []
        for n_ in (p, P_, q, Q):
            parts.append(tuple(float(v) for v in theta[i:i + n_]))
            i += n_
        return parts

    def spec_of(theta, sigma2=0.0):
        ar, sar, ma, sma = unpack(theta)
        return SarimaSpec(tuple(order), tuple(seasonal_order), ar, sar, ma, sma, sigma2, mean)

    def resid(theta):
        # iterates may leave the stationary region; only the final model is checked
        ar, sar, ma, sma = (np.array(c) for c in unpack(theta))
        ar_poly = _mul_seasonal(_lag_poly(-ar), _lag_poly(-sar), S)
        ma_poly = _mul_seasonal(_lag_poly(ma), _lag_poly(sma), S)
        e, _ = _css_residuals(y, diff, ar_poly, ma_poly, mean)
        return e

    if k == 0:
        e = resid(np.zeros(0))
        return spec_of(np.zeros(0), float(np.mean(e ** 2)))

    theta0 = np.zeros(k)
    res = least_squares(resid, theta0, bounds=(-0.99, 0.99), max_nfev=max_nfev, x_scale=0.5)
    theta = res.x.copy()
    ar, sar, ma, sma = unpack(theta)
    ar = tuple(_project_outside(np.array(ar), -1.0)) if ar else ()
    sar = tuple(_project_outside(np.array(sar), -1.0)) if sar else ()
    ma = tuple(_project_outside(np.array(ma), 1.0)) if ma else ()
    sma = tuple(_project_outside(np.array(sma), 1.0)) if sma else ()
    theta = np.array(ar + sar + ma + sma)
    e = resid(theta)
    fitted = spec_of(theta, float(np.mean(e ** 2)))
    if res.status == 0:
        raise SarimaFitError(f"no convergence after {res.nfev} evaluations", fitted)
    return fitted


def forecast_combined(daily: SarimaSpec, weekly: SarimaSpec, history, alpha: float,
                      horizon: int, start: float | None = None,
                      step: float | None = None) -> DemandForecast:
    """Blend ``alpha * weekly + (1 - alpha) * daily`` forecasts, clamped at zero."""
    if not 0.0 <= alpha <= 1.0:
        raise ForecastError(f"alpha must lie in [0, 1], got {alpha}")
    if isinstance(history, DemandForecast):
        y = history.values
        step = history.step if step is None else step
        start = history.start + history.step * len(y) if start is None else start
    else:
        y = np.asarray(history, dtype=float)
    step = 60.0 if step is None else step
    start = 0.0 if start is None else start
    yd = daily.forecast(y, horizon) if alpha < 1.0 else np.zeros(horizon)
    yw = weekly.forecast(y, horizon) if alpha > 0.0 else np.zeros(horizon)
    combined = alpha * yw + (1.0 - alpha) * yd
    return DemandForecast(start, step, np.clip(combined, 0.0, None),
                          (SARIMA_COMBINED,) * horizon,
                          {"alpha": alpha, "daily": yd, "weekly": yw})
