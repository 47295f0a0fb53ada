"""Mixed-integer controllers for the heat-pump / two-tank plant.

The control-oriented model is the layered tank of :mod:`hptes.thermal` at a
coarse stratification (two layers in Tank 1, four in Tank 2) discretised by
explicit Euler at the control step.  Within a move-blocking block the heat
pump decision ``u`` is constant, so the block maps the state at its start
affinely for each value of ``u``::

    x+ = Phi0 x + g0 + (Phi1 - Phi0) (x * u) + (g1 - g0) u

and the product ``x * u`` is encoded exactly with McCormick inequalities.
Supply temperatures inside a block are affine in the same variables, so the
temperature bounds are imposed at every base step even when the decision is
blocked.

Three problems share this model: the economic MPC, the flexibility
assessment (how long can the heat pump stay off) and the exploitation of a
demand-response request (economic MPC with the request pinned off).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .milp import MilpModel, MilpSolution, linearize_product, solve_milp
from .thermal import (T_MAX_PHYSICAL, T_MIN_PHYSICAL, Disturbance, HpParams, PlantState,
                      TankParams, euler_map, max_stable_dt, restratify)

ECONOMIC = "economic"
MAX_DURATION = "max-duration"
COST_BALANCED = "cost-balanced"

SLACK_TOL = 1e-6


class ForecastCoverageError(ValueError):
    """Forecasts do not cover the prediction horizon."""


@dataclass(frozen=True)
class MpcConfig:
    """Controller settings.  Lengths are counted in base control steps."""

    horizon: int = 72
    step: float = 300.0
    blocks: tuple[tuple[int, int], ...] = ((4, 6), (6, 4), (8, 3))
    t_lower: float = 55.0
    t_upper: float = 75.0
    comfort: float = 60.0
    m1: float = 1e4
    m2: float = 1e2
    switch_window: int = 8
    max_switches: int = 1
    flex_weight: float = 1.0
    layers: tuple[int, int] = (2, 4)
    layer_weights: tuple[tuple[float, ...], tuple[float, ...]] | None = ((1.0, 3.0), (1.0, 1.0, 1.0, 1.0))
    assessment_horizon: int = 48
    assessment_period: int = 36
    node_limit: int = 20_000
    time_limit: float | None = None
    rel_gap: float = 1e-6

    def __post_init__(self):
        if sum(n * c for n, c in self.blocks) != self.horizon:
            raise ValueError(f"blocks {self.blocks} do not span the horizon of {self.horizon} steps")
        if any(n < 1 or c < 0 for n, c in self.blocks):
            raise ValueError("block lengths must be >= 1 and counts >= 0")
        if not self.t_lower < self.t_upper:
            raise ValueError("lower temperature bound must be below the upper bound")
        if self.m1 < 0 or self.m2 < 0:
            raise ValueError("slack penalties must be non-negative")
        if self.flex_weight <= 0:
            raise ValueError("flexibility weight must be positive")
        if self.switch_window < 1 or self.max_switches < 0:
            raise ValueError("switch window must be >= 1 and the switch budget >= 0")
        if self.layer_weights is not None and tuple(len(w) for w in self.layer_weights) != tuple(self.layers):
            raise ValueError("layer weights must match the control layer counts")
        if not 0 < self.assessment_period <= self.assessment_horizon:
            raise ValueError("assessment period must lie inside the assessment horizon")

    def block_lengths(self) -> list[int]:
        return [n for n, c in self.blocks for _ in range(c)]

    @property
    def n_blocks(self) -> int:
        return sum(c for _, c in self.blocks)

    def unblocked(self) -> "MpcConfig":
        return replace(self, blocks=((1, self.horizon),))


@dataclass(frozen=True)
class PriceSeries:
    """Electricity price (currency/kWh), held constant from each timestamp to the next."""

    timestamps: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape or t.size == 0:
            raise ValueError("price timestamps and values must be equally long and non-empty")
        if np.any(np.diff(t) <= 0):
            raise ValueError("price timestamps must increase strictly")
        if not np.all(np.isfinite(v)):
            raise ValueError("prices must be finite")
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "values", v)

    def at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if np.any(t < self.timestamps[0]):
            raise ForecastCoverageError("price series starts after the requested time")
        idx = np.searchsorted(self.timestamps, t, side="right") - 1
        return self.values[idx]


@dataclass(frozen=True)
class Forecasts:
    """Per-base-step inputs over a horizon starting at ``start``.

    ``active`` marks the steps on which the temperature bounds apply
    (operating hours); outside them the tank may drift.
    """

    start: float
    step: float
    price: np.ndarray       # currency/kWh
    m_dot_s: np.ndarray     # kg/s
    t_amb: np.ndarray       # °C
    t_cold: np.ndarray      # °C
    active: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.price)
        for name in ("m_dot_s", "t_amb", "t_cold"):
            arr = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (n,)).copy()
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "price", np.asarray(self.price, dtype=float))
        act = np.ones(n, bool) if self.active is None else np.asarray(self.active, bool)
        if act.shape != (n,):
            raise ValueError("activity mask must match the price length")
        object.__setattr__(self, "active", act)
        if np.any(self.m_dot_s < 0):
            raise ValueError("hot-water draw forecast must be non-negative")

    def __len__(self) -> int:
        return len(self.price)

    def disturbance(self, k: int) -> Disturbance:
        return Disturbance(float(self.m_dot_s[k]), float(self.t_cold[k]), float(self.t_amb[k]))

    def head(self, n: int) -> "Forecasts":
        if n > len(self):
            raise ForecastCoverageError(f"forecasts cover {len(self)} steps, {n} requested")
        return Forecasts(self.start, self.step, self.price[:n], self.m_dot_s[:n],
                         self.t_amb[:n], self.t_cold[:n], self.active[:n])


@dataclass
class ControlPlan:
    u: np.ndarray                    # per base step
    states: np.ndarray               # predicted control-model states, (N + 1, n)
    delta1: float
    delta2: float
    objective: dict
    status: str
    blocks: list[int]
    stats: dict = field(default_factory=dict)
    model: MilpModel | None = field(default=None, repr=False)

    @property
    def first(self) -> int:
        return int(self.u[0])

    @property
    def top(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def n_binaries(self) -> int:
        return len(self.blocks)

    @property
    def suboptimal(self) -> bool:
        return self.status != "optimal"

    def to_dict(self) -> dict:
        return {"u": [int(v) for v in self.u], "predicted_top": [float(v) for v in self.top],
                "delta1": self.delta1, "delta2": self.delta2, "objective": self.objective,
                "status": self.status, "blocks": list(self.blocks),
                "stats": {k: v for k, v in self.stats.items() if k != "incumbent_history"}}


@dataclass
class FlexibilityWindow:
    """Result of a flexibility assessment; indices are base steps from the solve time."""

    period: list[int]                # assessment set T
    offered: list[int]               # F = {t | s_t = 1}
    s: np.ndarray
    z: np.ndarray
    plan: ControlPlan
    delta_star: float = 0.0
    start_time: float = 0.0

    def __post_init__(self):
        f = self.offered
        if f and (f != list(range(f[0], f[-1] + 1)) or not set(f) <= set(self.period)):
            raise ValueError("flexibility window must be one contiguous block inside T")

    @property
    def duration_steps(self) -> int:
        return len(self.offered)


# ---------------------------------------------------------------------------
# Control-oriented model
# ---------------------------------------------------------------------------

@dataclass
class BlockMap:
    length: int
    start: int
    phi: np.ndarray     # (2, n, n): block map for u = 0 and u = 1
    gamma: np.ndarray   # (2, n)
    top: np.ndarray     # (2, L, n): supply-temperature rows after each inner step
    top_c: np.ndarray   # (2, L)
    lo: np.ndarray      # state interval at block start
    hi: np.ndarray
    top_lo: np.ndarray  # supply-temperature interval after each inner step
    top_hi: np.ndarray


def _interval(A, b, lo, hi):
    Ap, An = np.clip(A, 0, None), np.clip(A, None, 0)
    return Ap @ lo + An @ hi + b, Ap @ hi + An @ lo + b


@dataclass
class ControlModel:
    """Block-composed affine prediction model at the control stratification."""

    tank: TankParams
    hp: HpParams
    x0: np.ndarray
    step: float
    forecasts: Forecasts
    blocks: list[BlockMap]
    step_maps: list[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]

    @property
    def n_states(self) -> int:
        return self.x0.size

    @property
    def horizon(self) -> int:
        return len(self.step_maps)

    def expand(self, u_blocks) -> np.ndarray:
        return np.concatenate([np.full(b.length, int(round(v)))
                               for b, v in zip(self.blocks, u_blocks)]).astype(int)

    def predict(self, u) -> np.ndarray:
        """States at every base step for a per-step (or per-block) decision sequence."""
        u = np.asarray(u)
        if u.size == len(self.blocks) and u.size != self.horizon:
            u = self.expand(u)
        if u.size != self.horizon:
            raise ValueError(f"need {self.horizon} decisions, got {u.size}")
        xs = np.empty((self.horizon + 1, self.n_states))
        xs[0] = self.x0
        for k, (A0, b0, A1, b1) in enumerate(self.step_maps):
            xs[k + 1] = (A1 @ xs[k] + b1) if u[k] else (A0 @ xs[k] + b0)
        return xs


def control_tank(plant_tank: TankParams, layers: tuple[int, int],
                 weights: tuple[Sequence[float], Sequence[float]] | None = None) -> TankParams:
    """Re-layer a tank description: same total mass, wall loss and axial conductance.

    ``weights`` gives the relative mass of each control layer per tank (top
    to bottom); equal layers when omitted.  An interface conducts the
    whole-height conductance scaled by the tank height over the distance
    between the two layer centres, and wall loss is shared by mass.
    """
    masses, cond, wall = [], [], []
    for k in range(2):
        n = int(layers[k])
        w = np.ones(n) if weights is None else np.asarray(weights[k], dtype=float)
        if w.size != n or np.any(w <= 0):
            raise ValueError(f"tank {k + 1} needs {n} positive layer weights")
        frac = w / w.sum()
        m = float(plant_tank.masses[k].sum())
        ua = float(plant_tank.wall_conductance[k].sum())
        g = plant_tank.layer_conductance[k]
        n_fine = plant_tank.masses[k].size
        # series resistance of the fine interfaces gives the whole-height conductance
        mix = 1.0 / float(np.sum(1.0 / g)) if g.size and np.all(g > 0) else 0.0
        if g.size and n_fine > 1:
            mix = mix * (n_fine - 1) / n_fine if mix else 0.0
        centre_gap = 0.5 * (frac[:-1] + frac[1:])
        masses.append(m * frac)
        cond.append(mix / centre_gap)
        wall.append(ua * frac)
    return TankParams(tuple(masses), tuple(cond), tuple(wall), plant_tank.cp)


def build_control_model(state: PlantState, tank: TankParams, hp: HpParams,
                        forecasts: Forecasts, config: MpcConfig,
                        blocks: Sequence[int] | None = None) -> ControlModel:
    """Compose per-step Euler maps into block maps over the prediction horizon.

    ``tank`` is the control stratification; a measured ``state`` with a
    different layering is projected onto it (mass-weighted averages).
    """
    blocks = list(config.block_lengths() if blocks is None else blocks)
    n_steps = sum(blocks)
    if len(forecasts) < n_steps:
        raise ForecastCoverageError(f"forecasts cover {len(forecasts)} steps, horizon is {n_steps}")
    if state.layers != tank.layers:
        fine = TankParams.uniform(state.layers, [m.sum() for m in tank.masses])
        state = restratify(state, fine, tank)
    x0 = state.vector
    dt = config.step
    limit = max_stable_dt(tank, hp, None, float(np.max(forecasts.m_dot_s[:n_steps], initial=0.0)))
    if dt > limit:
        raise ValueError(f"control step {dt:g}s exceeds the model stability limit {limit:.3g}s")

    n = x0.size
    step_maps = []
    for k in range(n_steps):
        d = forecasts.disturbance(k)
        A0, b0 = euler_map(tank, hp, 0, d, dt)
        A1, b1 = euler_map(tank, hp, 1, d, dt)
        step_maps.append((A0, b0, A1, b1))

    out: list[BlockMap] = []
    lo = hi = x0.copy()
    k = 0
    for L in blocks:
        phi = np.empty((2, n, n))
        gamma = np.empty((2, n))
        top = np.empty((2, L, n))
        top_c = np.empty((2, L))
        ends_lo, ends_hi = [], []
        top_lo = np.full(L, np.inf)
        top_hi = np.full(L, -np.inf)
        for u in (0, 1):
            P = np.eye(n)
            c = np.zeros(n)
            ilo, ihi = lo.copy(), hi.copy()
            for j in range(L):
                A, b = step_maps[k + j][2 * u], step_maps[k + j][2 * u + 1]
                P = A @ P
                c = A @ c + b
                ilo, ihi = _interval(A, b, ilo, ihi)
                ilo = np.clip(ilo, T_MIN_PHYSICAL, T_MAX_PHYSICAL)
                ihi = np.clip(ihi, T_MIN_PHYSICAL, T_MAX_PHYSICAL)
                top[u, j] = P[0]
                top_c[u, j] = c[0]
                top_lo[j] = min(top_lo[j], ilo[0])
                top_hi[j] = max(top_hi[j], ihi[0])
            phi[u], gamma[u] = P, c
            ends_lo.append(ilo)
            ends_hi.append(ihi)
        out.append(BlockMap(L, k, phi, gamma, top, top_c, lo, hi, top_lo, top_hi))
        lo, hi = np.minimum(*ends_lo), np.maximum(*ends_hi)
        k += L
    return ControlModel(tank, hp, x0, dt, forecasts, out, step_maps)


def refine_blocks(lengths: Sequence[int], cuts) -> list[int]:
    """Split blocks so that every index in ``cuts`` starts a block."""
    edges = set(np.cumsum([0] + list(lengths)).tolist())
    total = int(sum(lengths))
    edges |= {int(c) for c in cuts if 0 < c < total}
    e = sorted(edges)
    return [b - a for a, b in zip(e[:-1], e[1:])]


# ---------------------------------------------------------------------------
# Logic rows shared by the controller problems
# ---------------------------------------------------------------------------

def add_switch_limit(model: MilpModel, u: Sequence[int], starts: Sequence[int], horizon: int,
                     window: int, budget: int, history: Sequence[int] = ()) -> list[int]:
    """Cap the number of on/off switches in every trailing window of ``window`` steps.

    ``u[b]`` is the decision of the block starting at base step ``starts[b]``.
    Each block gets ``sw[b] >= |u[b] - u[b-1]|`` (the predecessor of the first
    block is the last executed decision in ``history``, off when empty), and
    the switches dated inside any window, plus those already executed in
    ``history`` that fall inside it, may not exceed ``budget``.
    Returns the switch indicator variables.
    """
    hist = [int(v) for v in history][-(window + 1):]
    u_prev = hist[-1] if hist else 0
    # hist[t] was executed at step t - len(hist); a switch is dated by the
    # step whose decision differs from its predecessor (negative indices)
    hist_sw = [t - len(hist) for t in range(1, len(hist)) if hist[t] != hist[t - 1]]
    sw = []
    for b in range(len(u)):
        w = model.add_var(f"sw[{b}]", 0.0, 1.0)
        sw.append(w)
        if b == 0:
            model.add_constraint({w: 1.0, u[0]: -1.0}, ">=", -u_prev)
            model.add_constraint({w: 1.0, u[0]: 1.0}, ">=", u_prev)
        else:
            model.add_constraint({w: 1.0, u[b]: -1.0, u[b - 1]: 1.0}, ">=", 0.0)
            model.add_constraint({w: 1.0, u[b]: 1.0, u[b - 1]: -1.0}, ">=", 0.0)
    seen: dict[tuple[int, ...], float] = {}
    for t in range(horizon):
        lo = t - window + 1
        inside = tuple(b for b, st in enumerate(starts) if lo <= st <= t)
        if not inside:
            continue
        n_hist = sum(1 for st in hist_sw if lo <= st)
        rhs = max(budget - n_hist, 0)
        seen[inside] = min(seen.get(inside, math.inf), rhs)
    for inside, rhs in seen.items():
        if len(inside) > rhs:
            model.add_constraint({sw[b]: 1.0 for b in inside}, "<=", rhs,
                                 f"switch[{inside[0]}..{inside[-1]}]")
    return sw


def add_flexibility_logic(model: MilpModel, u: Sequence[int], s: Sequence[int],
                          z: Sequence[int]) -> None:
    """Rows tying the window flags to the per-step decisions.

    ``s[t] = 1`` marks a step of the offered window (the heat pump must be
    off), ``z[t] = 1`` marks the steps after the window has closed.  Once
    ``z`` switches on it stays on and ``s`` can no longer be set, so the
    steps with ``s = 1`` always form one contiguous block.
    """
    n = len(s)
    for t in range(n):
        model.add_constraint({u[t]: 1.0, s[t]: 1.0}, "<=", 1.0, f"off[{t}]")
        model.add_constraint({s[t]: 1.0, z[t]: 1.0}, "<=", 1.0, f"phase[{t}]")
        if t + 1 < n:
            model.add_constraint({s[t + 1]: 1.0, s[t]: -1.0, z[t + 1]: 1.0}, ">=", 0.0, f"cont[{t}]")
            model.add_constraint({z[t + 1]: 1.0, z[t]: -1.0}, ">=", 0.0, f"after[{t}]")


# ---------------------------------------------------------------------------
# MILP assembly
# ---------------------------------------------------------------------------

class _Problem:
    """Variables and rows shared by the three controller problems."""

    def __init__(self, cm: ControlModel, config: MpcConfig, history: Sequence[int],
                 name: str, flags_first: int = 0):
        self.cm, self.cfg = cm, config
        self.model = MilpModel(name)
        m = self.model
        self.flag_s: list[int] = []
        self.flag_z: list[int] = []
        if flags_first:
            # branching picks the lowest index first: decide the window before the heating
            for t in range(flags_first):
                self.flag_s.append(m.add_binary(f"s[{t}]"))
                self.flag_z.append(m.add_binary(f"f[{t}]"))
        self.u = [m.add_binary(f"u[{b}]") for b in range(len(cm.blocks))]
        self.d1 = m.add_var("delta1", 0.0, T_MAX_PHYSICAL)
        self.d2 = m.add_var("delta2", 0.0, T_MAX_PHYSICAL)
        self.x: list[list[int] | None] = [None]
        self.zx: list[list[int] | None] = [None]
        n = cm.n_states
        for b, blk in enumerate(cm.blocks[1:], start=1):
            self.x.append([m.add_var(f"x[{b},{i}]", blk.lo[i], max(blk.hi[i], blk.lo[i]))
                           for i in range(n)])
            self.zx.append([linearize_product(m, self.x[b][i], self.u[b], f"xu[{b},{i}]")
                            for i in range(n)])
        self._dynamics()
        self._temperature_rows()
        self._switch_rows(history)
        self.energy_coeff = self._energy_coefficients()

    # affine expression helpers: {var: coeff}, constant
    def _affine(self, b: int, rows0, c0, rows1, c1):
        """Expression ``rows0 x + c0 + (rows1 - rows0)(x u) + (c1 - c0) u`` for block b."""
        u = self.u[b]
        if b == 0:
            x0 = self.cm.x0
            base = float(rows0 @ x0 + c0)
            return {u: float((rows1 - rows0) @ x0 + c1 - c0)}, base
        expr: dict[int, float] = {u: float(c1 - c0)}
        dr = rows1 - rows0
        for i in range(self.cm.n_states):
            if rows0[i]:
                expr[self.x[b][i]] = float(rows0[i])
            if dr[i]:
                expr[self.zx[b][i]] = float(dr[i])
        return expr, float(c0)

    def _dynamics(self):
        m = self.model
        for b in range(len(self.cm.blocks) - 1):
            blk = self.cm.blocks[b]
            for i in range(self.cm.n_states):
                expr, const = self._affine(b, blk.phi[0][i], blk.gamma[0][i],
                                           blk.phi[1][i], blk.gamma[1][i])
                expr[self.x[b + 1][i]] = expr.get(self.x[b + 1][i], 0.0) - 1.0
                m.add_constraint(expr, "==", -const, f"dyn[{b + 1},{i}]")

    def _temperature_rows(self):
        cfg, m = self.cfg, self.model
        active = self.cm.forecasts.active
        for b, blk in enumerate(self.cm.blocks):
            for j in range(blk.length):
                k = blk.start + j + 1          # state index after this inner step
                if not active[k - 1]:
                    continue
                expr, const = self._affine(b, blk.top[0, j], blk.top_c[0, j],
                                           blk.top[1, j], blk.top_c[1, j])
                lo, hi = blk.top_lo[j], blk.top_hi[j]
                if lo < cfg.comfort:
                    m.add_constraint({**expr, self.d2: 1.0}, ">=", cfg.comfort - const, f"comfort[{k}]")
                if lo < cfg.t_lower:
                    m.add_constraint({**expr, self.d1: 1.0}, ">=", cfg.t_lower - const, f"low[{k}]")
                if hi > cfg.t_upper:
                    m.add_constraint({**expr, self.d1: -1.0}, "<=", cfg.t_upper - const, f"high[{k}]")

    def _switch_rows(self, history: Sequence[int]):
        starts = [blk.start for blk in self.cm.blocks]
        self.sw = add_switch_limit(self.model, self.u, starts, self.cm.horizon,
                                   self.cfg.switch_window, self.cfg.max_switches, history)

    def _energy_coefficients(self) -> list[float]:
        kwh = self.cm.hp.rated_power * self.cm.step / 3600.0
        price = self.cm.forecasts.price
        return [kwh * float(price[blk.start: blk.start + blk.length].sum())
                for blk in self.cm.blocks]

    def energy_terms(self, scale: float = 1.0) -> dict[int, float]:
        return {u: scale * c for u, c in zip(self.u, self.energy_coeff)}

    def penalty_terms(self) -> dict[int, float]:
        return {self.d1: self.cfg.m1, self.d2: self.cfg.m2}

    def pin_off(self, steps) -> None:
        steps = set(int(s) for s in steps)
        for b, blk in enumerate(self.cm.blocks):
            covered = set(range(blk.start, blk.start + blk.length))
            if covered & steps:
                if not covered <= steps:
                    raise ValueError("pinned steps must align with block boundaries")
                self.model.fix(self.u[b], 0.0)

    def warm_start(self, u_steps) -> None:
        if u_steps is None:
            return
        u_steps = np.asarray(u_steps)
        ws = {}
        for b, blk in enumerate(self.cm.blocks):
            k = min(blk.start, u_steps.size - 1)
            ws[self.u[b]] = float(u_steps[k]) if u_steps.size else 0.0
        self.model.warm_start = ws

    def solve(self) -> MilpSolution:
        cfg = self.cfg
        return solve_milp(self.model, node_limit=cfg.node_limit, rel_gap=cfg.rel_gap,
                          time_limit=cfg.time_limit)

    def plan_from(self, sol: MilpSolution, flex_value: float = 0.0) -> ControlPlan:
        cm = self.cm
        if sol.x is None:
            raise RuntimeError(f"no feasible assignment found ({sol.status})")
        ub = np.array([round(sol.x[u]) for u in self.u], dtype=int)
        u = cm.expand(ub)
        states = cm.predict(u)
        energy = float(np.dot(self.energy_coeff, ub))
        d1, d2 = float(sol.x[self.d1]), float(sol.x[self.d2])
        penalty = self.cfg.m1 * d1 + self.cfg.m2 * d2
        objective = {"energy_cost": energy, "penalty": penalty, "J_o": energy + penalty,
                     "J_f": flex_value, "solver": float(sol.objective)}
        return ControlPlan(u, states, d1, d2, objective, sol.status,
                           [blk.length for blk in cm.blocks], dict(sol.stats), self.model)


def _default_history(history):
    return [] if history is None else list(history)


def economic_mpc(cm: ControlModel, config: MpcConfig, history: Sequence[int] | None = None,
                 warm_start=None, pinned_off: Sequence[int] = (), lp_dump=None) -> ControlPlan:
    """Minimise energy cost plus slack penalties over the blocked horizon.

    ``history`` holds the executed decisions before the solve (oldest first)
    and feeds the switch-count windows that straddle the present.
    """
    prob = _Problem(cm, config, _default_history(history), "economic_mpc")
    prob.pin_off(pinned_off)
    prob.model.set_objective({**prob.energy_terms(), **prob.penalty_terms()})
    prob.warm_start(warm_start)
    if lp_dump is not None:
        prob.model.write_lp(lp_dump)
    sol = prob.solve()
    return prob.plan_from(sol)


def assess_flexibility(cm: ControlModel, config: MpcConfig, period: int | None = None,
                       history: Sequence[int] | None = None, mode: str = MAX_DURATION,
                       heuristic=None, lp_dump=None) -> FlexibilityWindow:
    """Find the contiguous off-window F inside the first ``period`` steps.

    ``max-duration`` maximises |F| among plans whose slack is as small as
    any plan can achieve: a first solve finds that least slack (skipped
    when ``heuristic``, a per-step decision sequence, already meets every
    bound), the second maximises |F| with the slack capped at it.  A tiny
    energy-cost term breaks ties between equally long windows.
    ``cost-balanced`` minimises ``J_o - lambda |F|`` in a single solve.
    """
    period = config.assessment_period if period is None else int(period)
    if not 0 < period <= cm.horizon:
        raise ValueError("assessment period must lie inside the horizon")
    if any(blk.length != 1 for blk in cm.blocks[:period]):
        raise ValueError("assessment needs one decision per step over the assessment period")
    history = _default_history(history)

    delta_star = (0.0, 0.0)
    stage1_stats = None
    seed = None if heuristic is None else np.asarray(heuristic)[: cm.horizon]
    if mode == MAX_DURATION:
        need_stage1 = True
        if heuristic is not None:
            xs = cm.predict(np.asarray(heuristic)[: cm.horizon])
            need_stage1 = _violation(xs, cm.forecasts.active, config) > 0.0
        if need_stage1:
            first = _Problem(cm, config, history, "flex_least_slack")
            first.model.set_objective({first.d1: config.m1, first.d2: config.m2})
            first.warm_start(heuristic)
            sol1 = first.solve()
            stage1_stats = sol1.stats
            if sol1.x is not None:
                delta_star = (float(sol1.x[first.d1]), float(sol1.x[first.d2]))
                seed = cm.expand(np.array([round(sol1.x[u]) for u in first.u], dtype=int))
    elif mode != COST_BALANCED:
        raise ValueError(f"unknown assessment mode {mode!r}")

    prob = _Problem(cm, config, history, f"flex_{mode}", flags_first=period)
    m = prob.model
    s, z = prob.flag_s, prob.flag_z
    add_flexibility_logic(m, prob.u[:period], s, z)  # one block per step over the period
    if mode == MAX_DURATION:
        m.set_bounds(prob.d1, 0.0, delta_star[0] + SLACK_TOL)
        m.set_bounds(prob.d2, 0.0, delta_star[1] + SLACK_TOL)
        total = sum(prob.energy_coeff) or 1.0
        tie = 0.5 / total  # whole tie-break term stays below one step of window
        m.set_objective({**{v: -1.0 for v in s}, **prob.energy_terms(tie)})
    else:
        m.set_objective({**prob.energy_terms(), **prob.penalty_terms(),
                         **{v: -config.flex_weight for v in s}})
    if seed is not None:
        # an empty window on top of a known heating plan is always admissible
        prob.warm_start(seed)
        prob.model.warm_start.update({v: 0.0 for v in (*s, *z)})
    if lp_dump is not None:
        m.write_lp(lp_dump)
    sol = prob.solve()
    if sol.x is None:
        raise RuntimeError(f"flexibility assessment found no admissible plan ({sol.status})")
    sv = np.array([round(sol.x[v]) for v in s], dtype=int)
    zv = np.array([round(sol.x[v]) for v in z], dtype=int)
    plan = prob.plan_from(sol, flex_value=float(sv.sum()) * (1.0 if mode == MAX_DURATION
                                                             else config.flex_weight))
    if stage1_stats is not None:
        plan.stats["least_slack_stage"] = {k: v for k, v in stage1_stats.items()
                                           if k != "incumbent_history"}
    offered = [t for t in range(period) if sv[t]]
    return FlexibilityWindow(list(range(period)), offered, sv, zv, plan,
                             max(delta_star), cm.forecasts.start)


def exploit_flexibility(cm: ControlModel, config: MpcConfig, request: Sequence[int],
                        history: Sequence[int] | None = None, warm_start=None,
                        lp_dump=None) -> ControlPlan:
    """Economic MPC with the heat pump held off on every requested step.

    Blocks are split at the request boundaries so the pin is exact.  If the
    switch history makes the pinned problem infeasible the history windows
    are dropped and ``stats["history_relaxed"]`` is set.
    """
    request = sorted(int(t) for t in request if 0 <= int(t) < cm.horizon)
    try:
        return economic_mpc(cm, config, history, warm_start, pinned_off=request, lp_dump=lp_dump)
    except RuntimeError:
        plan = economic_mpc(cm, config, [], warm_start, pinned_off=request)
        plan.stats["history_relaxed"] = True
        return plan


def _violation(states: np.ndarray, active: np.ndarray, config: MpcConfig) -> float:
    top = states[1:, 0][np.asarray(active[: len(states) - 1], bool)]
    if top.size == 0:
        return 0.0
    return float(max(np.max(config.comfort - top, initial=0.0),
                     np.max(config.t_lower - top, initial=0.0),
                     np.max(top - config.t_upper, initial=0.0)))


def model_for(state: PlantState, plant_tank: TankParams, hp: HpParams,
              forecasts: Forecasts, config: MpcConfig, blocks=None) -> ControlModel:
    """Build the control model at ``config.layers`` from the plant description."""
    tank = control_tank(plant_tank, config.layers, config.layer_weights)
    return build_control_model(state, tank, hp, forecasts, config, blocks)


# ---------------------------------------------------------------------------
# Rule-based baseline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Hysteresis:
    on_below: float = 62.0    # switch on when the Tank 1 top falls below this
    off_above: float = 62.0   # switch off once the Tank 2 bottom exceeds this


def rule_based(state: PlantState, hysteresis: Hysteresis = Hysteresis(),
               currently_on: bool = False) -> int:
    if currently_on:
        return 0 if state.hp_inlet > hysteresis.off_above else 1
    return 1 if state.top < hysteresis.on_below else 0


@dataclass
class RuleBasedController:
    hysteresis: Hysteresis = field(default_factory=Hysteresis)
    on: bool = False

    def __call__(self, state: PlantState) -> int:
        u = rule_based(state, self.hysteresis, self.on)
        self.on = bool(u)
        return u
