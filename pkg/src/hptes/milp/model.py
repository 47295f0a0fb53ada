"""Mixed-integer linear program container.

Variables are referred to by integer index.  Every variable carries finite
bounds; binaries are continuous variables with bounds inside [0, 1] plus an
integrality flag.  Constraints are stored sparsely as ``{var: coeff}`` rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

CONTINUOUS = "continuous"
BINARY = "binary"

LE, EQ, GE = "<=", "==", ">="
_SENSES = {LE, EQ, GE, "<", "=", ">", "≤", "≥"}
_CANONICAL = {"<": LE, "≤": LE, "=": EQ, ">": GE, "≥": GE}

FEAS_TOL = 1e-7
INT_TOL = 1e-6


class ModelError(ValueError):
    """Raised when a model violates its structural invariants."""


@dataclass
class Variable:
    name: str
    kind: str
    lb: float
    ub: float


@dataclass
class Constraint:
    coeffs: dict[int, float]
    sense: str
    rhs: float
    name: str


@dataclass
class MilpSolution:
    status: str  # "optimal" | "infeasible" | "iteration-limit"
    objective: float
    x: np.ndarray | None
    stats: dict = field(default_factory=dict)
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None

    @property
    def is_optimal(self) -> bool:
        return self.status == "optimal"

    def value(self, var: int) -> float:
        return float(self.x[var])


class MilpModel:
    """A minimisation problem over bounded continuous and binary variables."""

    def __init__(self, name: str = "milp"):
        self.name = name
        self.variables: list[Variable] = []
        self.constraints: list[Constraint] = []
        self.objective: dict[int, float] = {}
        self.objective_constant = 0.0
        self.warm_start: dict[int, float] | None = None

    # -- building ---------------------------------------------------------
    @property
    def num_vars(self) -> int:
        return len(self.variables)

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)

    def add_var(self, name: str | None = None, lb: float = 0.0, ub: float = 0.0,
                kind: str = CONTINUOUS) -> int:
        if not (math.isfinite(lb) and math.isfinite(ub)):
            raise ModelError(f"variable {name!r} needs finite bounds, got [{lb}, {ub}]")
        if lb > ub:
            raise ModelError(f"variable {name!r} has empty domain [{lb}, {ub}]")
        if kind == BINARY and (lb < 0.0 or ub > 1.0):
            raise ModelError(f"binary {name!r} bounds must lie in [0, 1]")
        if kind not in (CONTINUOUS, BINARY):
            raise ModelError(f"unknown variable kind {kind!r}")
        idx = len(self.variables)
        self.variables.append(Variable(name or f"x{idx}", kind, float(lb), float(ub)))
        return idx

    def add_binary(self, name: str | None = None, lb: float = 0.0, ub: float = 1.0) -> int:
        return self.add_var(name, lb, ub, kind=BINARY)

    def add_constraint(self, coeffs: Mapping[int, float] | Iterable[tuple[int, float]],
                       sense: str, rhs: float, name: str | None = None) -> int:
        if sense not in _SENSES and sense not in (LE, EQ, GE):
            raise ModelError(f"unknown constraint sense {sense!r}")
        sense = _CANONICAL.get(sense, sense)
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        row: dict[int, float] = {}
        for var, a in items:
            if not 0 <= var < len(self.variables):
                raise ModelError(f"constraint {name!r} references undeclared variable {var}")
            row[var] = row.get(var, 0.0) + float(a)
        if not math.isfinite(rhs):
            raise ModelError(f"constraint {name!r} has non-finite rhs")
        idx = len(self.constraints)
        self.constraints.append(Constraint(row, sense, float(rhs), name or f"c{idx}"))
        return idx

    def set_objective(self, coeffs: Mapping[int, float], constant: float = 0.0) -> None:
        self.objective = {}
        for var, a in coeffs.items():
            self.objective[var] = self.objective.get(var, 0.0) + float(a)
        self.objective_constant = float(constant)

    def add_objective_term(self, var: int, coeff: float) -> None:
        self.objective[var] = self.objective.get(var, 0.0) + float(coeff)

    def set_bounds(self, var: int, lb: float, ub: float) -> None:
        v = self.variables[var]
        if lb > ub + 1e-12:
            raise ModelError(f"variable {v.name!r} has empty domain [{lb}, {ub}]")
        v.lb, v.ub = float(lb), float(max(ub, lb))

    def fix(self, var: int, value: float) -> None:
        self.set_bounds(var, value, value)

    @property
    def binaries(self) -> list[int]:
        return [i for i, v in enumerate(self.variables) if v.kind == BINARY]

    def copy(self) -> "MilpModel":
        other = MilpModel(self.name)
        other.variables = [Variable(v.name, v.kind, v.lb, v.ub) for v in self.variables]
        other.constraints = [Constraint(dict(c.coeffs), c.sense, c.rhs, c.name)
                             for c in self.constraints]
        other.objective = dict(self.objective)
        other.objective_constant = self.objective_constant
        other.warm_start = None if self.warm_start is None else dict(self.warm_start)
        return other

    # -- numerical views ----------------------------------------------------
    def to_arrays(self):
        """Dense arrays ``(c, A, row_lo, row_hi, lb, ub, is_binary)``."""
        n, m = self.num_vars, self.num_constraints
        c = np.zeros(n)
        for var, a in self.objective.items():
            c[var] = a
        A = np.zeros((m, n))
        row_lo = np.full(m, -np.inf)
        row_hi = np.full(m, np.inf)
        for i, con in enumerate(self.constraints):
            for var, a in con.coeffs.items():
                A[i, var] = a
            if con.sense in (LE, EQ):
                row_hi[i] = con.rhs
            if con.sense in (GE, EQ):
                row_lo[i] = con.rhs
        lb = np.array([v.lb for v in self.variables])
        ub = np.array([v.ub for v in self.variables])
        is_bin = np.array([v.kind == BINARY for v in self.variables], dtype=bool)
        return c, A, row_lo, row_hi, lb, ub, is_bin

    def evaluate(self, x: np.ndarray) -> float:
        return self.objective_constant + sum(a * x[v] for v, a in self.objective.items())

    def violations(self, x: np.ndarray) -> dict[str, float]:
        """Largest bound, row and integrality violations of an assignment."""
        x = np.asarray(x, dtype=float)
        _, A, row_lo, row_hi, lb, ub, is_bin = self.to_arrays()
        act = A @ x if A.size else np.zeros(0)
        row = 0.0
        if act.size:
            row = float(np.max(np.maximum(row_lo - act, act - row_hi), initial=0.0))
        bnd = float(np.max(np.maximum(lb - x, x - ub), initial=0.0))
        xb = x[is_bin]
        integ = float(np.max(np.abs(xb - np.round(xb)), initial=0.0))
        return {"row": max(row, 0.0), "bound": max(bnd, 0.0), "integrality": integ}

    def is_feasible(self, x: np.ndarray, feas_tol: float = FEAS_TOL,
                    int_tol: float = INT_TOL) -> bool:
        v = self.violations(x)
        return v["row"] <= feas_tol and v["bound"] <= feas_tol and v["integrality"] <= int_tol

    # -- LP text format ---------------------------------------------------------
    def to_lp_string(self) -> str:
        """Render in the CPLEX LP text format understood by most solvers."""
        names = [_lp_name(v.name, i) for i, v in enumerate(self.variables)]

        def expr(coeffs: Mapping[int, float]) -> str:
            parts = []
            for var, a in coeffs.items():
                if a == 0.0:
                    continue
                sign = "-" if a < 0 else "+"
                parts.append(f"{sign} {abs(a):.17g} {names[var]}")
            if not parts:
                return "0 " + names[0] if names else "0"
            text = " ".join(parts)
            return text[2:] if text.startswith("+ ") else text

        lines = [f"\\ {self.name}", "Minimize", f" obj: {expr(self.objective)}"]
        if self.objective_constant:
            lines[-1] += f" + {self.objective_constant:.17g} constant_one"
        lines.append("Subject To")
        for i, con in enumerate(self.constraints):
            sense = {LE: "<=", GE: ">=", EQ: "="}[con.sense]
            lines.append(f" {_lp_name(con.name, i, 'c')}: {expr(con.coeffs)} {sense} {con.rhs:.17g}")
        lines.append("Bounds")
        for name, v in zip(names, self.variables):
            lines.append(f" {v.lb:.17g} <= {name} <= {v.ub:.17g}")
        if self.objective_constant:
            lines.append(" constant_one = 1")
        bins = [names[i] for i in self.binaries]
        if bins:
            lines.append("Binaries")
            for k in range(0, len(bins), 8):
                lines.append(" " + " ".join(bins[k:k + 8]))
        lines.append("End")
        return "\n".join(lines) + "\n"

    def write_lp(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_lp_string())


def _lp_name(name: str, idx: int, prefix: str = "x") -> str:
    cleaned = "".join(ch if ch.isalnum() or ch in "_.[]" else "_" for ch in name)
    if not cleaned or cleaned[0].isdigit() or cleaned[0] in ".eE":
        cleaned = f"{prefix}{idx}_{cleaned}"
    return cleaned
