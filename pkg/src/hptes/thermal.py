"""Heat pump and stratified two-tank storage models.

The plant is a series pair of tanks discretised into fully mixed layers.
Layers are stacked into one vector, Tank 1 top to bottom followed by Tank 2
top to bottom; water moves along that chain.  Hot water is drawn from the
top of Tank 1 and replaced by cold mains water at the bottom of Tank 2.
With the heat pump on, the circulation ``m_dot_p`` leaves the bottom of
Tank 2, passes the (ideal) heat exchanger and re-enters at the top of
Tank 1, so the net downward flow through every internal interface is
``u * m_dot_p - m_dot_s``.

For a fixed on/off decision and disturbance the layer dynamics are affine,

    dT/dt = M(u, d) T + v(u, d),

which is what both the fine plant simulator and the coarse control model
integrate (explicit Euler).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

CP_WATER = 4186.0  # J/(kg °C)
T_MIN_PHYSICAL, T_MAX_PHYSICAL = 0.0, 100.0


class CalibrationError(ValueError):
    """Raised when COP samples cannot identify the bilinear surface."""


class PlantError(RuntimeError):
    """Raised by the plant simulator; carries the failing timestamp."""

    def __init__(self, message: str, timestamp: float | None = None, partial=None):
        super().__init__(message if timestamp is None else f"t={timestamp:g}s: {message}")
        self.timestamp = timestamp
        self.partial = partial


# ---------------------------------------------------------------------------
# Heat pump
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CopParams:
    """Coefficients of the bilinear COP surface ``a1 + a2*Tin + a3*Tamb + a4*Tin*Tamb``."""

    a1: float
    a2: float
    a3: float
    a4: float
    t_in_range: tuple[float, float] = (10.0, 70.0)
    t_amb_range: tuple[float, float] = (-5.0, 25.0)

    def __call__(self, t_in, t_amb):
        return cop_eval(self, t_in, t_amb)

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([self.a1, self.a2, self.a3, self.a4])

    def corner_values(self) -> np.ndarray:
        lo_i, hi_i = self.t_in_range
        lo_a, hi_a = self.t_amb_range
        return np.array([cop_eval(self, ti, ta) for ti in (lo_i, hi_i) for ta in (lo_a, hi_a)])

    def validate(self) -> None:
        # Bilinear, so the extremes over the box sit at its corners.
        corners = self.corner_values()
        if np.any(corners <= 0.0):
            raise ValueError(f"COP surface is non-positive on the operating box: {corners}")


PAPER_COP = CopParams(3.3297, -0.0423, 0.0219, 0.0003)


def cop_eval(cop: CopParams, t_in, t_amb):
    """Bilinear COP at inlet water temperature ``t_in`` and ambient ``t_amb`` (°C)."""
    return cop.a1 + cop.a2 * t_in + cop.a3 * t_amb + cop.a4 * t_in * t_amb


@dataclass(frozen=True)
class CopFit:
    params: CopParams
    rmse: float
    vaf: float  # variance accounted for, percent
    n_samples: int
    condition_number: float


def fit_cop(samples, t_in_range=None, t_amb_range=None) -> CopFit:
    """Least-squares fit of the bilinear COP surface.

    ``samples`` is an iterable of ``(t_in, t_amb, cop_measured)``.
    """
    data = np.asarray(list(samples), dtype=float)
    if data.ndim != 2 or data.shape[1] != 3:
        raise CalibrationError("samples must be (t_in, t_amb, cop) triples")
    if len(data) < 4:
        raise CalibrationError(f"need at least 4 samples for 4 coefficients, got {len(data)}")
    t_in, t_amb, y = data.T
    X = np.column_stack([np.ones_like(t_in), t_in, t_amb, t_in * t_amb])
    sv = np.linalg.svd(X, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
    if not np.isfinite(cond) or cond > 1e12:
        raise CalibrationError(f"design matrix is rank deficient (condition number {cond:.3g})")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    rmse = float(np.sqrt(np.mean(resid ** 2)))
    var_y = float(np.var(y))
    vaf = float(100.0 * (1.0 - np.var(resid) / var_y)) if var_y > 0 else 100.0
    params = CopParams(*map(float, coef),
                       t_in_range=t_in_range or (float(t_in.min()), float(t_in.max())),
                       t_amb_range=t_amb_range or (float(t_amb.min()), float(t_amb.max())))
    return CopFit(params, rmse, vaf, len(data), cond)


@dataclass(frozen=True)
class HpParams:
    rated_power: float        # kW electric
    cop: CopParams
    circulation_rate: float   # kg/s through the heat exchanger

    def __post_init__(self):
        if self.rated_power <= 0 or self.circulation_rate <= 0:
            raise ValueError("rated power and circulation rate must be positive")


def hp_heat_output(hp: HpParams, t_in: float, t_amb: float, u: int,
                   cp: float = CP_WATER) -> tuple[float, float]:
    """Heat delivered (kW) and heat-exchanger outlet temperature (°C)."""
    if u not in (0, 1):
        raise ValueError(f"u must be 0 or 1, got {u!r}")
    q_kw = float(cop_eval(hp.cop, t_in, t_amb)) * hp.rated_power * u
    t_out = t_in + q_kw * 1e3 / (hp.circulation_rate * cp)
    return q_kw, t_out


# ---------------------------------------------------------------------------
# Tanks and plant state
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TankParams:
    """Layer masses and conductances of the two tanks (each listed top to bottom).

    ``layer_conductance[k]`` couples layer i and i+1 of tank k (length n_k - 1);
    ``wall_conductance[k]`` couples every layer of tank k to ambient.
    """

    masses: tuple[np.ndarray, np.ndarray]
    layer_conductance: tuple[np.ndarray, np.ndarray]
    wall_conductance: tuple[np.ndarray, np.ndarray]
    cp: float = CP_WATER

    def __post_init__(self):
        masses = tuple(np.asarray(m, dtype=float) for m in self.masses)
        layer = tuple(np.asarray(g, dtype=float).reshape(-1) for g in self.layer_conductance)
        wall = tuple(np.asarray(g, dtype=float).reshape(-1) for g in self.wall_conductance)
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "layer_conductance", layer)
        object.__setattr__(self, "wall_conductance", wall)
        if len(masses) != 2:
            raise ValueError("exactly two tanks are modelled")
        for k in range(2):
            n = masses[k].size
            if n < 1:
                raise ValueError(f"tank {k + 1} needs at least one layer")
            if layer[k].size != n - 1 or wall[k].size != n:
                raise ValueError(f"tank {k + 1}: conductance arrays do not match {n} layers")
            if np.any(masses[k] <= 0) or np.any(layer[k] < 0) or np.any(wall[k] < 0):
                raise ValueError(f"tank {k + 1}: masses must be positive, conductances >= 0")
        if self.cp <= 0:
            raise ValueError("specific heat must be positive")

    @classmethod
    def uniform(cls, layers=(10, 10), mass=(500.0, 500.0), wall_ua=(2.5, 2.5),
                mixing_ua=(1.5, 1.5), cp: float = CP_WATER) -> "TankParams":
        """Equal-mass layers from whole-tank properties.

        ``wall_ua`` is the total wall loss coefficient per tank (W/°C), split by
        layer.  ``mixing_ua`` is the effective axial conductance over the full
        tank height (k·A/H, W/°C); a layer interface over height H/n conducts
        ``n * mixing_ua``.
        """
        masses, cond, wall = [], [], []
        for n, m, ua, mix in zip(layers, mass, wall_ua, mixing_ua):
            n = int(n)
            masses.append(np.full(n, m / n))
            cond.append(np.full(n - 1, n * mix))
            wall.append(np.full(n, ua / n))
        return cls(tuple(masses), tuple(cond), tuple(wall), cp)

    @property
    def layers(self) -> tuple[int, int]:
        return self.masses[0].size, self.masses[1].size

    @property
    def n_states(self) -> int:
        return sum(self.layers)

    @property
    def heat_capacity(self) -> np.ndarray:
        return np.concatenate(self.masses) * self.cp


@dataclass(frozen=True)
class Disturbance:
    m_dot_s: float          # kg/s hot-water draw
    t_cold: float           # °C mains supply
    t_amb: float            # °C ambient (heat-pump source and tank surroundings)

    def __post_init__(self):
        if self.m_dot_s < 0:
            raise ValueError("hot-water draw must be non-negative")


@dataclass(frozen=True)
class PlantState:
    t1: np.ndarray
    t2: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        t1 = np.array(self.t1, dtype=float).reshape(-1)
        t2 = np.array(self.t2, dtype=float).reshape(-1)
        t1.flags.writeable = False
        t2.flags.writeable = False
        object.__setattr__(self, "t1", t1)
        object.__setattr__(self, "t2", t2)
        both = np.concatenate([t1, t2])
        if not np.all(np.isfinite(both)):
            raise ValueError("layer temperatures must be finite")

    @classmethod
    def from_vector(cls, x, layers: tuple[int, int], timestamp: float = 0.0) -> "PlantState":
        x = np.asarray(x, dtype=float)
        return cls(x[: layers[0]], x[layers[0]:], timestamp)

    @classmethod
    def uniform(cls, temperature: float, layers: tuple[int, int], timestamp: float = 0.0):
        return cls(np.full(layers[0], temperature), np.full(layers[1], temperature), timestamp)

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.t1, self.t2])

    @property
    def layers(self) -> tuple[int, int]:
        return self.t1.size, self.t2.size

    @property
    def top(self) -> float:
        """Supply temperature: top layer of Tank 1."""
        return float(self.t1[0])

    @property
    def hp_inlet(self) -> float:
        """Heat-pump inlet temperature: bottom layer of Tank 2."""
        return float(self.t2[-1])

    def in_physical_bounds(self) -> bool:
        v = self.vector
        return bool(np.all((v >= T_MIN_PHYSICAL) & (v <= T_MAX_PHYSICAL)))


# ---------------------------------------------------------------------------
# Dynamics
# ---------------------------------------------------------------------------

def dynamics(tank: TankParams, hp: HpParams, u: int, dist: Disturbance):
    """Continuous-time affine dynamics ``(M, v)`` with ``dT/dt = M T + v``."""
    n = tank.n_states
    C = tank.heat_capacity
    cp = tank.cp
    M = np.zeros((n, n))
    v = np.zeros(n)
    n1 = tank.layers[0]
    offsets = (0, n1)
    for k in range(2):
        o = offsets[k]
        for i, g in enumerate(tank.layer_conductance[k]):
            a, b = o + i, o + i + 1
            M[a, a] -= g
            M[a, b] += g
            M[b, b] -= g
            M[b, a] += g
        for i, g in enumerate(tank.wall_conductance[k]):
            M[o + i, o + i] -= g
            v[o + i] += g * dist.t_amb

    f = u * hp.circulation_rate - dist.m_dot_s   # downward, kg/s
    for i in range(n - 1):
        if f > 0:
            M[i + 1, i + 1] -= f * cp
            M[i + 1, i] += f * cp
        elif f < 0:
            M[i, i] += f * cp
            M[i, i + 1] -= f * cp

    if u:
        mp_cp = hp.circulation_rate * cp
        gain = hp.rated_power * 1e3
        M[0, 0] -= mp_cp
        M[0, n - 1] += mp_cp + gain * (hp.cop.a2 + hp.cop.a4 * dist.t_amb)
        v[0] += gain * (hp.cop.a1 + hp.cop.a3 * dist.t_amb)
    M[n - 1, n - 1] -= dist.m_dot_s * cp
    v[n - 1] += dist.m_dot_s * cp * dist.t_cold

    return M / C[:, None], v / C


def max_stable_dt(tank: TankParams, hp: HpParams, u: int | None = None,
                  m_dot_s: float = 0.0) -> float:
    """Largest explicit-Euler step keeping every layer update a convex combination.

    With ``u=None`` the bound covers both heat-pump states.
    """
    us = (0, 1) if u is None else (u,)
    worst = 0.0
    for uu in us:
        M, _ = dynamics(tank, hp, uu, Disturbance(m_dot_s, 10.0, 10.0))
        worst = max(worst, float(np.max(-np.diag(M))))
    return np.inf if worst <= 0 else 1.0 / worst


def euler_map(tank: TankParams, hp: HpParams, u: int, dist: Disturbance, dt: float):
    """Discrete affine map ``T+ = A T + b`` for one explicit Euler step."""
    M, v = dynamics(tank, hp, u, dist)
    return np.eye(M.shape[0]) + dt * M, dt * v


def plant_step(state: PlantState, tank: TankParams, hp: HpParams, u: int,
               dist: Disturbance, dt: float) -> PlantState:
    if u not in (0, 1):
        raise ValueError(f"u must be 0 or 1, got {u!r}")
    if dt <= 0:
        raise ValueError("dt must be positive")
    limit = max_stable_dt(tank, hp, u, dist.m_dot_s)
    if dt > limit * (1 + 1e-12):
        raise PlantError(f"dt={dt:g}s exceeds the stability limit {limit:.3g}s", state.timestamp)
    M, v = dynamics(tank, hp, u, dist)
    x = state.vector
    x_new = x + dt * (M @ x + v)
    if np.any(x_new < T_MIN_PHYSICAL):
        j = int(np.argmin(x_new))
        raise PlantError(f"layer {j} temperature went negative ({x_new[j]:.3g} °C)", state.timestamp)
    if np.any(x_new > T_MAX_PHYSICAL):
        j = int(np.argmax(x_new))
        raise PlantError(f"layer {j} temperature exceeds boiling ({x_new[j]:.4g} °C)", state.timestamp)
    return PlantState.from_vector(x_new, tank.layers, state.timestamp + dt)


def enthalpy_balance(before: PlantState, after: PlantState, tank: TankParams, hp: HpParams,
                     u: int, dist: Disturbance, dt: float) -> tuple[float, float]:
    """Stored-energy change (J) and boundary heat input over a step (J)."""
    C = tank.heat_capacity
    stored = float(C @ (after.vector - before.vector))
    x = before.vector
    q_hp = hp_heat_output(hp, before.hp_inlet, dist.t_amb, u, tank.cp)[0] * 1e3
    walls = np.concatenate(tank.wall_conductance)
    q_wall = float(walls @ (x - dist.t_amb))
    q_in = dist.m_dot_s * tank.cp * dist.t_cold
    q_out = dist.m_dot_s * tank.cp * before.top
    return stored, dt * (q_hp - q_wall + q_in - q_out)


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    times: np.ndarray
    temps: np.ndarray            # (len, n1 + n2)
    layers: tuple[int, int]
    u: np.ndarray                # control applied over [t_k, t_k+1); last entry repeats
    m_dot_s: np.ndarray
    t_amb: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.times)

    def state(self, k: int) -> PlantState:
        return PlantState.from_vector(self.temps[k], self.layers, float(self.times[k]))

    @property
    def top(self) -> np.ndarray:
        return self.temps[:, 0]

    def header(self) -> list[str]:
        n1, n2 = self.layers
        return (["timestamp"] + [f"T1_{i + 1}" for i in range(n1)]
                + [f"T2_{i + 1}" for i in range(n2)] + ["u", "m_dot_s", "T_amb"])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(self.header())
            for k in range(len(self.times)):
                w.writerow([f"{self.times[k]:.6g}"] + [f"{v:.6f}" for v in self.temps[k]]
                           + [int(self.u[k]), f"{self.m_dot_s[k]:.8g}", f"{self.t_amb[k]:.6g}"])

    @classmethod
    def concatenate(cls, first: "Trajectory", second: "Trajectory") -> "Trajectory":
        return cls(np.concatenate([first.times, second.times[1:]]),
                   np.vstack([first.temps, second.temps[1:]]), first.layers,
                   np.concatenate([first.u[:-1], second.u]),
                   np.concatenate([first.m_dot_s[:-1], second.m_dot_s]),
                   np.concatenate([first.t_amb[:-1], second.t_amb]))


def _at(series, k: int, t: float):
    return series(t) if callable(series) else series[k]


def simulate(initial: PlantState, tank: TankParams, hp: HpParams,
             controls: Sequence[int] | Callable[[float], int],
             dists: Sequence[Disturbance] | Callable[[float], Disturbance],
             horizon: float, dt: float) -> Trajectory:
    """Integrate the plant; ``controls``/``dists`` are per-step sequences or functions of time."""
    steps = horizon / dt
    n_steps = int(round(steps))
    if abs(steps - n_steps) > 1e-9 or n_steps < 0:
        raise ValueError("horizon must be a non-negative multiple of dt")
    if not callable(controls) and len(controls) < n_steps:
        raise ValueError("control series does not cover the horizon")
    if not callable(dists) and len(dists) < n_steps:
        raise ValueError("disturbance series does not cover the horizon")
    times = [initial.timestamp]
    temps = [initial.vector]
    us, mds, tas = [], [], []
    state = initial
    for k in range(n_steps):
        t = state.timestamp
        u = int(_at(controls, k, t))
        d = _at(dists, k, t)
        try:
            state = plant_step(state, tank, hp, u, d, dt)
        except PlantError as exc:
            partial = Trajectory(np.array(times), np.array(temps), tank.layers,
                                 np.array(us + [0]), np.array(mds + [0.0]), np.array(tas + [np.nan]))
            raise PlantError(str(exc), t, partial) from exc
        times.append(state.timestamp)
        temps.append(state.vector)
        us.append(u)
        mds.append(d.m_dot_s)
        tas.append(d.t_amb)
    us.append(us[-1] if us else 0)
    mds.append(mds[-1] if mds else 0.0)
    tas.append(tas[-1] if tas else np.nan)
    return Trajectory(np.array(times), np.array(temps), tank.layers, np.array(us, dtype=int),
                      np.array(mds), np.array(tas))


def aggregate_layers(temps: np.ndarray, fine_masses: np.ndarray,
                     coarse_masses: np.ndarray) -> np.ndarray:
    """Mass-weighted average of a fine layer profile onto a coarser one of equal total mass."""
    temps = np.asarray(temps, float)
    fe = np.concatenate([[0.0], np.cumsum(fine_masses)])
    ce = np.concatenate([[0.0], np.cumsum(coarse_masses)])
    ce = ce * (fe[-1] / ce[-1])
    out = np.empty(len(coarse_masses))
    for j in range(len(coarse_masses)):
        lo, hi = ce[j], ce[j + 1]
        overlap = np.clip(np.minimum(fe[1:], hi) - np.maximum(fe[:-1], lo), 0.0, None)
        out[j] = overlap @ temps / overlap.sum()
    return out


def restratify(state: PlantState, fine: TankParams, coarse: TankParams) -> PlantState:
    """Project a plant state onto the layering of another tank model (enthalpy preserving)."""
    t1 = aggregate_layers(state.t1, fine.masses[0], coarse.masses[0])
    t2 = aggregate_layers(state.t2, fine.masses[1], coarse.masses[1])
    return PlantState(t1, t2, state.timestamp)
