"""Closed-loop scenarios: plant simulator against a controller, plus metrics.

A scenario covers one operating day.  The plant advances at a fine step
(10 s by default) with the true hot-water draw; the controller is called
every control step (5 min) with the measured layer temperatures and the
forecasts available at that time.  Missing input files are replaced by the
synthetic generators in :mod:`hptes.synthetic`.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import datetime
from pathlib import Path
from typing import Callable

import numpy as np

from . import dsm as dsm_mod
from . import synthetic
from .forecast import (DemandForecast, ForecastError, fit_sarima, forecast_combined,
                       interpolate_hourly)
from .mpc import (COST_BALANCED, MAX_DURATION, ControlPlan, Forecasts, Hysteresis, MpcConfig,
                  PriceSeries, RuleBasedController, assess_flexibility, economic_mpc,
                  exploit_flexibility, model_for, refine_blocks)
from .thermal import (PAPER_COP, CopParams, Disturbance, HpParams, PlantError, PlantState,
                      TankParams, Trajectory, plant_step)

HOUR = 3600.0


class ScenarioError(RuntimeError):
    """Aborted run; carries the failing timestamp and the partial trajectory."""

    def __init__(self, message: str, timestamp: float | None = None, partial=None):
        super().__init__(message if timestamp is None else f"t={timestamp:g}s: {message}")
        self.timestamp = timestamp
        self.partial = partial


class SeriesError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlantConfig:
    layers: tuple[int, int] = (10, 10)
    tank_mass: tuple[float, float] = (500.0, 500.0)
    wall_ua: tuple[float, float] = (2.5, 2.5)
    mixing_ua: tuple[float, float] = (1.5, 1.5)
    rated_power: float = 10.0
    circulation_rate: float = 0.18
    cop: tuple[float, float, float, float] = (PAPER_COP.a1, PAPER_COP.a2, PAPER_COP.a3, PAPER_COP.a4)
    t_cold: float = 12.0
    initial_temperature: float | tuple[float, ...] = 60.0

    def tank(self) -> TankParams:
        return TankParams.uniform(self.layers, self.tank_mass, self.wall_ua, self.mixing_ua)

    def hp(self) -> HpParams:
        return HpParams(self.rated_power, CopParams(*self.cop), self.circulation_rate)

    def initial_state(self, timestamp: float) -> PlantState:
        t0 = self.initial_temperature
        if np.ndim(t0) == 0:
            return PlantState.uniform(float(t0), self.layers, timestamp)
        return PlantState.from_vector(np.asarray(t0, float), self.layers, timestamp)


@dataclass(frozen=True)
class ScenarioConfig:
    plant: PlantConfig = field(default_factory=PlantConfig)
    mpc: MpcConfig = field(default_factory=MpcConfig)
    price_csv: str | None = None
    demand_csv: str | None = None
    forecast_source: str = "perfect"       # perfect | sarima | file
    forecast_csv: str | None = None
    ambient_csv: str | None = None
    operating_hours: tuple[float, float] = (7.0, 17.5)
    controller: str = "economic"           # economic | dsm | rule-based
    grid_policy: str = dsm_mod.FULL
    assessment_mode: str = MAX_DURATION
    dsm_period_h: float = 3.0
    seed: int = 0
    day: int = 21                          # synthetic day index (0 = Monday of week 1)
    plant_dt: float = 10.0
    sarima_alpha: float = 0.5
    sarima_order: tuple[int, int, int] = (1, 0, 1)
    sarima_seasonal: tuple[int, int, int] = (1, 1, 1)
    history_days: int = 21
    output_dir: str | None = None
    lp_dump: bool = False

    def __post_init__(self):
        if self.controller not in ("economic", "dsm", "rule-based"):
            raise ValueError(f"unknown controller {self.controller!r}")
        if self.forecast_source not in ("perfect", "sarima", "file"):
            raise ValueError(f"unknown forecast source {self.forecast_source!r}")
        if self.forecast_source == "file" and not self.forecast_csv:
            raise ValueError("forecast_source 'file' needs forecast_csv")
        lo, hi = self.operating_hours
        if not 0 <= lo < hi <= 24:
            raise ValueError("operating hours must satisfy 0 <= open < close <= 24")
        if self.mpc.step % self.plant_dt:
            raise ValueError("control step must be a multiple of the plant step")
        for name in ("price_csv", "demand_csv", "forecast_csv", "ambient_csv"):
            path = getattr(self, name)
            if path and not Path(path).exists():
                raise FileNotFoundError(f"{name}: {path} does not exist")

    @property
    def day_start(self) -> float:
        return self.day * synthetic.DAY

    @property
    def opening(self) -> float:
        return self.day_start + self.operating_hours[0] * HOUR

    @property
    def closing(self) -> float:
        return self.day_start + self.operating_hours[1] * HOUR

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        data = dict(data)
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown scenario fields: {sorted(unknown)}")
        plant = PlantConfig(**_tuples(data.pop("plant", {})))
        mpc_data = _tuples(data.pop("mpc", {}))
        mpc = MpcConfig(**mpc_data)
        return cls(plant=plant, mpc=mpc, **_tuples(data))

    @classmethod
    def from_json(cls, path) -> "ScenarioConfig":
        base = Path(path).parent
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        for key in ("price_csv", "demand_csv", "forecast_csv", "ambient_csv", "output_dir"):
            if data.get(key) and not Path(data[key]).is_absolute():
                data[key] = str(base / data[key])
        return cls.from_dict(data)


def _tupled(v):
    return tuple(_tupled(x) for x in v) if isinstance(v, list) else v


def _tuples(d: dict) -> dict:
    return {k: _tupled(v) for k, v in d.items()}


# ---------------------------------------------------------------------------
# Series ingestion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Series:
    timestamps: np.ndarray
    values: np.ndarray
    kind: str
    step: float


def _parse_time(text: str, origin: list) -> float:
    try:
        return float(text)
    except ValueError:
        dt = datetime.fromisoformat(text.strip())
        if not origin:
            origin.append(dt.replace(hour=0, minute=0, second=0, microsecond=0))
        return (dt - origin[0]).total_seconds()


def read_series_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise SeriesError(f"{path}: file is empty")
    header = [h.strip().lower() for h in rows[0]]
    if len(header) < 2 or header[0] != "timestamp":
        raise SeriesError(f"{path}: expected header 'timestamp,value', got {rows[0]}")
    body = rows[1:]
    if not body:
        raise SeriesError(f"{path}: no data rows")
    origin: list = []
    try:
        t = np.array([_parse_time(r[0], origin) for r in body])
        v = np.array([float(r[1]) for r in body])
    except (ValueError, IndexError) as exc:
        raise SeriesError(f"{path}: unparsable row ({exc})") from exc
    return t, v


def ingest_series(path, kind: str, step: float = 300.0) -> Series:
    """Read ``timestamp,value`` and put it on the control grid.

    Prices are held constant until the next stamp, ambient temperature is
    interpolated linearly, and hourly demand (L/h) goes through the
    shape-preserving hourly-to-minute interpolation before averaging to
    ``step``; finer demand series are averaged directly.  Returned demand is
    in kg/s, prices in currency/kWh, ambient in °C.
    """
    if kind not in ("price", "demand", "ambient"):
        raise SeriesError(f"unknown series kind {kind!r}")
    t, v = read_series_csv(path)
    if t.size >= 2 and np.any(np.diff(t) <= 0):
        bad = int(np.argmax(np.diff(t) <= 0)) + 2
        raise SeriesError(f"{path}: timestamps are non-monotone at data row {bad}")
    if not np.all(np.isfinite(v)):
        raise SeriesError(f"{path}: non-finite values")
    native = float(np.median(np.diff(t))) if t.size >= 2 else step
    gaps = np.diff(t) > 2 * native + 1e-9
    if gaps.any():
        at = float(t[int(np.argmax(gaps))])
        raise SeriesError(f"{path}: gap longer than two samples after t={at:g}s")
    if kind == "demand" and np.any(v < 0):
        raise SeriesError(f"{path}: negative demand at t={float(t[int(np.argmax(v < 0))]):g}s")

    grid_start = math.floor(t[0] / step) * step
    if kind == "price":
        n = int(math.ceil((t[-1] + native - grid_start) / step))
        grid = grid_start + step * np.arange(n)
        idx = np.clip(np.searchsorted(t, grid, side="right") - 1, 0, None)
        return Series(grid, v[idx], kind, step)
    if kind == "ambient":
        n = int(math.floor((t[-1] - grid_start) / step)) + 1
        grid = grid_start + step * np.arange(n)
        return Series(grid, np.interp(grid, t, v), kind, step)
    if abs(native - HOUR) < 1e-6:
        minute = interpolate_hourly(v, out_step=60.0, start=t[0])
        res = minute.resample(step) if step >= 60 else minute
        return Series(res.times, res.values, kind, res.step)
    # already sub-hourly: average L/h onto the grid
    per = step / native
    k = int(round(per))
    if k >= 1 and abs(per - k) < 1e-9:
        m = v.size // k
        vals = v[: m * k].reshape(m, k).mean(axis=1) / 3600.0
        return Series(t[0] + step * np.arange(m), vals, kind, step)
    grid = t[0] + step * np.arange(int((t[-1] - t[0]) // step) + 1)
    return Series(grid, np.interp(grid, t, v) / 3600.0, kind, step)


# ---------------------------------------------------------------------------
# Scenario inputs
# ---------------------------------------------------------------------------

@dataclass
class ScenarioInputs:
    price: PriceSeries
    demand_truth: DemandForecast        # kg/s, fine resolution
    demand_forecast: DemandForecast     # kg/s, control step
    ambient: Callable[[float], float]
    t_cold: float


def _series_lookup(ts: np.ndarray, vs: np.ndarray, step: float):
    def at(t):
        k = np.floor((np.asarray(t, float) - ts[0]) / step + 1e-9).astype(int)
        inside = (k >= 0) & (k < vs.size)
        return np.where(inside, vs[np.clip(k, 0, vs.size - 1)], 0.0)
    return at


def prepare_inputs(cfg: ScenarioConfig) -> ScenarioInputs:
    step = cfg.mpc.step
    day0 = cfg.day_start
    weekday = cfg.day % 7 < 5

    if cfg.price_csv:
        s = ingest_series(cfg.price_csv, "price", step)
        price = PriceSeries(s.timestamps, s.values)
    else:
        price = PriceSeries(*synthetic.hourly_price(day0, 48))

    if cfg.demand_csv:
        t, v = read_series_csv(cfg.demand_csv)
        if np.any(v < 0):
            raise SeriesError(f"{cfg.demand_csv}: negative demand")
        native = float(np.median(np.diff(t)))
        if abs(native - HOUR) < 1e-6:
            truth = interpolate_hourly(v, 60.0, start=float(t[0]))
        else:
            truth = DemandForecast(float(t[0]), native, v / 3600.0)
    else:
        hourly = synthetic.hourly_demand(cfg.day, cfg.seed, weekday)
        truth = interpolate_hourly(hourly, 60.0, start=day0)

    n_fc = int(round(synthetic.DAY / step))
    if cfg.forecast_source == "perfect":
        factor = step / truth.step
        if abs(factor - round(factor)) < 1e-9 and factor >= 1:
            fc = truth.resample(step)
        else:
            grid = day0 + step * np.arange(n_fc)
            fc = DemandForecast(day0, step, np.interp(grid, truth.times, truth.values))
    elif cfg.forecast_source == "file":
        s = ingest_series(cfg.forecast_csv, "demand", step)
        fc = DemandForecast(float(s.timestamps[0]), step, s.values, ("sarima-combined",))
    else:
        fc = sarima_day_forecast(cfg)

    if cfg.ambient_csv:
        s = ingest_series(cfg.ambient_csv, "ambient", step)
        ambient = lambda t, ts=s.timestamps, vs=s.values: float(np.interp(t, ts, vs))  # noqa: E731
    else:
        ambient = lambda t: float(synthetic.ambient_profile(t))  # noqa: E731
    return ScenarioInputs(price, truth, fc, ambient, cfg.plant.t_cold)


def sarima_day_forecast(cfg: ScenarioConfig) -> DemandForecast:
    """Fit daily and weekly seasonal models on synthetic history and forecast the day."""
    step = cfg.mpc.step
    per_day = int(round(synthetic.DAY / step))
    days = cfg.history_days
    if cfg.day < days:
        raise ForecastError(f"day {cfg.day} has fewer than {days} days of history")
    hist = synthetic.demand_history(cfg.day, step, cfg.seed)[-days * per_day:] / 3600.0
    p, d, q = cfg.sarima_order
    P_, D, Q = cfg.sarima_seasonal
    daily = fit_or_best(hist, (p, d, q), (P_, D, Q, per_day))
    weekly = fit_or_best(hist, (p, d, q), (P_, D, Q, 7 * per_day))
    return forecast_combined(daily, weekly, hist, cfg.sarima_alpha, per_day,
                             start=cfg.day_start, step=step)


def fit_or_best(y, order, seasonal):
    """Fit a seasonal model, falling back to the best iterate when the fit is rejected."""
    from .forecast import SarimaFitError
    try:
        return fit_sarima(y, order, seasonal)
    except SarimaFitError as exc:
        return exc.best


def control_forecasts(inputs: ScenarioInputs, cfg: ScenarioConfig, t: float, n: int) -> Forecasts:
    step = cfg.mpc.step
    ts = t + step * np.arange(n)
    fc = inputs.demand_forecast
    draw = _series_lookup(fc.times, fc.values, fc.step)(ts)
    active = (ts >= cfg.opening - 1e-9) & (ts < cfg.closing - 1e-9)
    draw = np.where(active, draw, 0.0)
    amb = np.array([inputs.ambient(x + 0.5 * step) for x in ts])
    return Forecasts(t, step, inputs.price.at(ts), draw, amb, inputs.t_cold, active)


# ---------------------------------------------------------------------------
# Controllers
# ---------------------------------------------------------------------------

@dataclass
class SolveRecord:
    timestamp: float
    kind: str
    wall_time: float
    status: str
    nodes: int
    n_binaries: int
    predicted_violation: float


class EconomicController:
    def __init__(self, cfg: ScenarioConfig, tank: TankParams, hp: HpParams, inputs: ScenarioInputs,
                 lp_dir: Path | None = None):
        self.cfg, self.tank, self.hp, self.inputs = cfg, tank, hp, inputs
        self.history: list[int] = []
        self.prev: ControlPlan | None = None
        self.records: list[SolveRecord] = []
        self.plans: list[dict] = []
        self.lp_dir = lp_dir

    def _lp_path(self, t: float, kind: str):
        if self.lp_dir is None:
            return None
        return self.lp_dir / f"{kind}_{int(t)}.lp"

    def _record(self, t, kind, plan: ControlPlan, wall):
        pv = max(plan.delta1, plan.delta2)
        self.records.append(SolveRecord(t, kind, wall, plan.status, int(plan.stats.get("nodes", 0)),
                                        plan.n_binaries, pv))
        self.plans.append({"timestamp": t, "kind": kind, **plan.to_dict()})

    def _shifted(self):
        if self.prev is None:
            return None
        u = self.prev.u
        return np.concatenate([u[1:], u[-1:]])

    def economic(self, state: PlantState, t: float, pinned=()) -> ControlPlan:
        mcfg = self.cfg.mpc
        fc = control_forecasts(self.inputs, self.cfg, t, mcfg.horizon)
        blocks = refine_blocks(mcfg.block_lengths(), _run_edges(pinned)) if pinned else None
        cm = model_for(state, self.tank, self.hp, fc, mcfg, blocks)
        t0 = time.perf_counter()
        if pinned:
            plan = exploit_flexibility(cm, mcfg, pinned, self.history, self._shifted(),
                                       self._lp_path(t, "exploit"))
            kind = "exploit"
        else:
            plan = economic_mpc(cm, mcfg, self.history, self._shifted(),
                                lp_dump=self._lp_path(t, "economic"))
            kind = "economic"
        self._record(t, kind, plan, time.perf_counter() - t0)
        self.prev = plan
        return plan

    def __call__(self, state: PlantState, t: float) -> int:
        return self.economic(state, t).first

    def executed(self, u: int) -> None:
        self.history.append(int(u))
        self.history = self.history[-(self.cfg.mpc.switch_window + 1):]


def _run_edges(steps) -> list[int]:
    steps = sorted(set(int(s) for s in steps))
    edges = []
    for i, s in enumerate(steps):
        if i == 0 or steps[i - 1] != s - 1:
            edges.append(s)
        if i == len(steps) - 1 or steps[i + 1] != s + 1:
            edges.append(s + 1)
    return edges


class DsmController(EconomicController):
    """Economic MPC with the offer/request exchange layered on top."""

    def __init__(self, cfg, tank, hp, inputs, lp_dir=None):
        super().__init__(cfg, tank, hp, inputs, lp_dir)
        period = cfg.dsm_period_h * HOUR
        self.state = dsm_mod.DsmState(
            triggers=dsm_mod.assessment_triggers(cfg.operating_hours[0] * HOUR,
                                                 cfg.operating_hours[1] * HOUR, period,
                                                 cfg.day_start),
            step=cfg.mpc.step, day=cfg.day)
        self.grid = dsm_mod.synthetic_grid(period, cfg.grid_policy, cfg.seed)
        self.windows: list[dict] = []
        self.accepted: list[dsm_mod.RequestMessage] = []

    def assess(self, state: PlantState, t: float, heuristic=None):
        mcfg = self.cfg.mpc
        n = mcfg.assessment_horizon
        fc = control_forecasts(self.inputs, self.cfg, t, n)
        cm = model_for(state, self.tank, self.hp, fc, mcfg, [1] * n)
        t0 = time.perf_counter()
        window = assess_flexibility(cm, mcfg, mcfg.assessment_period, self.history,
                                    self.cfg.assessment_mode, heuristic,
                                    self._lp_path(t, "assess"))
        self._record(t, "assess", window.plan, time.perf_counter() - t0)
        k0 = self.state.step_index(t)
        self.windows.append({"timestamp": t, "offered": [k0 + i for i in window.offered],
                             "delta_star": window.delta_star})
        return [k0 + i for i in window.offered]

    def __call__(self, state: PlantState, t: float) -> int:
        action = dsm_mod.tick(self.state, t)
        if action.kind == "assess":
            # the economic plan seeds the assessment and stands if nothing is requested
            plan = self.economic(state, t)
            offered = self.assess(state, t, plan.u[: self.cfg.mpc.assessment_horizon])
            offer = dsm_mod.make_offer(self.state, offered, t)
            request = self.grid.respond(offer, t)
            if request is not None:
                decision = dsm_mod.receive_request(self.state, request, t)
                if decision.accepted:
                    self.accepted.append(request)
            action = dsm_mod.tick(self.state, t)
            if action.kind != "exploit":
                return plan.first
        if action.kind == "exploit":
            k = self.state.step_index(t)
            rel = [i - k for i in action.request]
            return self.economic(state, t, pinned=rel).first
        return self.economic(state, t).first


# ---------------------------------------------------------------------------
# Closed loop
# ---------------------------------------------------------------------------

@dataclass
class RunMetrics:
    controller: str
    span: tuple[float, float]
    average_supply_temperature: float
    max_comfort_violation: float
    max_safety_violation: float
    energy_kwh: float
    energy_cost: float
    solve_time_min: float
    solve_time_max: float
    solve_time_mean: float
    solve_time_median: float
    n_solves: int
    dr_requests_honored: int
    dr_requests_total: int
    predicted_max_slack: float
    on_time_s: float
    switches: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    @classmethod
    def from_dict(cls, d: dict) -> "RunMetrics":
        d = dict(d)
        d["span"] = tuple(d["span"])
        return cls(**d)


@dataclass
class RunResult:
    metrics: RunMetrics
    trajectory: Trajectory
    control_u: np.ndarray          # executed decision per control step
    control_times: np.ndarray
    solves: list[SolveRecord] = field(default_factory=list)
    plans: list[dict] = field(default_factory=list)
    dsm_log: list[dict] = field(default_factory=list)
    requests: list[dict] = field(default_factory=list)
    mode_history: list = field(default_factory=list)

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        self.metrics.to_json(out / "metrics.json")
        self.trajectory.to_csv(out / "trajectory.csv")
        with open(out / "plans.json", "w", encoding="utf-8") as fh:
            json.dump(self.plans, fh, indent=1, default=float)
        with open(out / "solves.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["timestamp", "kind", "wall_time", "status", "nodes", "n_binaries",
                        "predicted_violation"])
            for r in self.solves:
                w.writerow([r.timestamp, r.kind, f"{r.wall_time:.4f}", r.status, r.nodes,
                            r.n_binaries, f"{r.predicted_violation:.6g}"])
        if self.dsm_log:
            with open(out / "dsm_log.jsonl", "w", encoding="utf-8") as fh:
                for entry in self.dsm_log:
                    fh.write(json.dumps(entry) + "\n")


def run_scenario(cfg: ScenarioConfig, inputs: ScenarioInputs | None = None) -> RunResult:
    """Simulate one operating day in closed loop and score it on the plant trajectory."""
    inputs = prepare_inputs(cfg) if inputs is None else inputs
    tank, hp = cfg.plant.tank(), cfg.plant.hp()
    hp.cop.validate()
    lp_dir = None
    if cfg.lp_dump and cfg.output_dir:
        lp_dir = Path(cfg.output_dir) / "lp"
        lp_dir.mkdir(parents=True, exist_ok=True)
    mcfg = cfg.mpc
    n_sub = int(round(mcfg.step / cfg.plant_dt))
    t = cfg.opening
    n_ticks = int(round((cfg.closing - cfg.opening) / mcfg.step))
    state = cfg.plant.initial_state(t)

    if cfg.controller == "rule-based":
        rule = RuleBasedController(Hysteresis())
        ctrl = None
    elif cfg.controller == "dsm":
        ctrl = DsmController(cfg, tank, hp, inputs, lp_dir)
    else:
        ctrl = EconomicController(cfg, tank, hp, inputs, lp_dir)

    truth = inputs.demand_truth
    draw_at = _series_lookup(truth.times, truth.values, truth.step)
    times, temps, us, draws, ambs = [t], [state.vector], [], [], []
    ctrl_u, ctrl_t = [], []
    cost = 0.0
    try:
        for _ in range(n_ticks):
            if ctrl is not None:
                u_ctrl = int(ctrl(state, t))
                ctrl.executed(u_ctrl)
            for j in range(n_sub):
                if ctrl is None:
                    u = rule(state)
                else:
                    u = u_ctrl
                tm = state.timestamp
                d = Disturbance(float(draw_at(tm + 0.5 * cfg.plant_dt)), inputs.t_cold,
                                inputs.ambient(tm + 0.5 * cfg.plant_dt))
                state = plant_step(state, tank, hp, u, d, cfg.plant_dt)
                cost += float(inputs.price.at(tm)) * hp.rated_power * u * cfg.plant_dt / HOUR
                times.append(state.timestamp)
                temps.append(state.vector)
                us.append(u)
                draws.append(d.m_dot_s)
                ambs.append(d.t_amb)
                if j == 0:
                    ctrl_u.append(u)
                    ctrl_t.append(tm)
            t = state.timestamp
    except (PlantError, RuntimeError, ValueError) as exc:
        partial = _trajectory(times, temps, us, draws, ambs, tank.layers)
        if cfg.output_dir:
            out = Path(cfg.output_dir)
            out.mkdir(parents=True, exist_ok=True)
            partial.to_csv(out / "partial_trajectory.csv")
        raise ScenarioError(f"{type(exc).__name__}: {exc}", state.timestamp, partial) from exc

    traj = _trajectory(times, temps, us, draws, ambs, tank.layers)
    records = [] if ctrl is None else ctrl.records
    walls = np.array([r.wall_time for r in records]) if records else np.zeros(1)
    u_arr = np.asarray(us, int)
    top = traj.top
    mc = mcfg
    comfort_viol = float(np.max(mc.comfort - top, initial=0.0))
    safety_viol = float(max(np.max(mc.t_lower - top, initial=0.0),
                            np.max(top - mc.t_upper, initial=0.0)))
    honored = total = 0
    req_report = []
    if isinstance(ctrl, DsmController):
        k_of = {int(round(tt / mcfg.step)): u for tt, u in zip(ctrl_t, ctrl_u)}
        for req in ctrl.accepted:
            ok = all(k_of.get(i, 0) == 0 for i in req.indices)
            executed_any = any(i in k_of for i in req.indices)
            total += 1
            honored += int(ok)
            req_report.append({"window_id": req.window_id, "indices": list(req.indices),
                               "honored": ok, "executed": executed_any})
    metrics = RunMetrics(
        controller=cfg.controller,
        span=(cfg.opening, cfg.closing),
        average_supply_temperature=float(np.mean(top)),
        max_comfort_violation=comfort_viol,
        max_safety_violation=safety_viol,
        energy_kwh=float(hp.rated_power * u_arr.sum() * cfg.plant_dt / HOUR),
        energy_cost=float(cost),
        solve_time_min=float(walls.min()) if records else 0.0,
        solve_time_max=float(walls.max()) if records else 0.0,
        solve_time_mean=float(walls.mean()) if records else 0.0,
        solve_time_median=float(np.median(walls)) if records else 0.0,
        n_solves=len(records),
        dr_requests_honored=honored,
        dr_requests_total=total,
        predicted_max_slack=float(max((r.predicted_violation for r in records), default=0.0)),
        on_time_s=float(u_arr.sum() * cfg.plant_dt),
        switches=int(np.sum(np.abs(np.diff(u_arr)))) if u_arr.size else 0,
    )
    result = RunResult(metrics, traj, np.asarray(ctrl_u, int), np.asarray(ctrl_t),
                       records, [] if ctrl is None else ctrl.plans,
                       ctrl.state.log if isinstance(ctrl, DsmController) else [],
                       req_report,
                       ctrl.state.history if isinstance(ctrl, DsmController) else [])
    if cfg.output_dir:
        result.write(cfg.output_dir)
    return result


def _trajectory(times, temps, us, draws, ambs, layers) -> Trajectory:
    last_u = us[-1] if us else 0
    return Trajectory(np.asarray(times), np.asarray(temps), layers,
                      np.asarray(us + [last_u], int), np.asarray(draws + [draws[-1] if draws else 0.0]),
                      np.asarray(ambs + [ambs[-1] if ambs else np.nan]))


# ---------------------------------------------------------------------------
# Comparison
# ---------------------------------------------------------------------------

COMPARED = (("energy_kwh", "Energy Consumption (kWh)"), ("energy_cost", "Energy Cost"),
            ("average_supply_temperature", "Average Supply Temperature (°C)"),
            ("max_comfort_violation", "Maximal Constraint Violation (°C)"))


def compare_runs(runs: list[RunMetrics]) -> list[dict]:
    """Rows of absolute values with percentages relative to the first run."""
    if not runs:
        raise ValueError("nothing to compare")
    span = tuple(runs[0].span)
    for r in runs[1:]:
        if tuple(r.span) != span:
            raise ValueError(f"run spans differ: {span} vs {tuple(r.span)}")
    rows = []
    for key, label in COMPARED:
        base = getattr(runs[0], key)
        row = {"metric": label, "key": key}
        for i, r in enumerate(runs):
            v = getattr(r, key)
            pct = 100.0 * v / base if base else (100.0 if v == base else math.inf)
            row[f"{i}:{r.controller}"] = {"value": v, "percent": pct}
        rows.append(row)
    return rows


def format_comparison(rows: list[dict]) -> str:
    lines = []
    for row in rows:
        cells = [f"{v['value']:.2f} ({v['percent']:.2f}%)" for k, v in row.items()
                 if k not in ("metric", "key")]
        lines.append(f"{row['metric']:<36}" + "  ".join(f"{c:>20}" for c in cells))
    return "\n".join(lines)


def with_controller(cfg: ScenarioConfig, controller: str, **changes) -> ScenarioConfig:
    return replace(cfg, controller=controller, **changes)


# ---------------------------------------------------------------------------
# Model fidelity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FidelityReport:
    times: np.ndarray
    plant_top: np.ndarray
    model_top: np.ndarray
    u: np.ndarray

    @property
    def rmse(self) -> float:
        return float(np.sqrt(np.mean((self.plant_top - self.model_top) ** 2)))

    @property
    def max_error(self) -> float:
        return float(np.max(np.abs(self.plant_top - self.model_top)))


def open_loop_fidelity(traj: Trajectory, plant: PlantConfig, mpc: MpcConfig,
                       start: float | None = None, hours: float = 6.0) -> FidelityReport:
    """Replay recorded inputs through the coarse control model and compare top temperatures.

    The recorded draw and ambient temperature are averaged over each control
    step and the recorded heat-pump signal is rounded to the step's majority
    value; the model starts from the recorded plant state and runs open loop.
    """
    step = mpc.step
    t0 = float(traj.times[0] if start is None else start)
    n = int(round(hours * HOUR / step))
    k0 = int(np.searchsorted(traj.times, t0 - 1e-9))
    edges = t0 + step * np.arange(n + 1)
    if edges[-1] > traj.times[-1] + 1e-9:
        raise ValueError("trajectory is shorter than the requested window")
    idx = np.searchsorted(traj.times, edges - 1e-9)
    draw, amb, u = np.empty(n), np.empty(n), np.empty(n, int)
    for k in range(n):
        sl = slice(idx[k], idx[k + 1])
        draw[k] = traj.m_dot_s[sl].mean()
        amb[k] = traj.t_amb[sl].mean()
        u[k] = int(traj.u[sl].mean() >= 0.5)
    fc = Forecasts(t0, step, np.zeros(n), draw, amb, plant.t_cold, np.ones(n, bool))
    cm = model_for(traj.state(k0), plant.tank(), plant.hp(), fc, mpc, [1] * n)
    xs = cm.predict(u)
    return FidelityReport(edges, traj.temps[idx, 0], xs[:, 0], u)
