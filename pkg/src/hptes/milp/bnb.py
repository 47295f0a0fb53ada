"""LP relaxation and branch-and-bound over binary variables."""

from __future__ import annotations

import heapq
import itertools
import time

import numpy as np

from .model import FEAS_TOL, INT_TOL, MilpModel, MilpSolution, ModelError
from .simplex import Basis, LPEngine

REL_GAP = 1e-6
ABS_GAP = 1e-9
PLUNGE_FRACTION = 0.0


def solve_lp(model: MilpModel, max_iter: int = 50_000) -> MilpSolution:
    """Solve the continuous relaxation (binaries relaxed to their bounds)."""
    c, A, row_lo, row_hi, lb, ub, _ = model.to_arrays()
    t0 = time.perf_counter()
    res = LPEngine(c, A, row_lo, row_hi).solve(lb, ub, max_iter=max_iter)
    stats = {"lp_pivots": res.iterations, "nodes": 0, "wall_time": time.perf_counter() - t0}
    if res.status != "optimal":
        status = "infeasible" if res.status == "infeasible" else "iteration-limit"
        return MilpSolution(status, np.inf if status == "infeasible" else np.nan, None, stats)
    return MilpSolution("optimal", res.objective + model.objective_constant, res.x, stats,
                        duals=res.duals, reduced_costs=res.reduced_costs)


class _Node:
    __slots__ = ("lb", "ub", "bound", "depth", "basis")

    def __init__(self, lb, ub, bound, depth, basis):
        self.lb, self.ub, self.bound, self.depth, self.basis = lb, ub, bound, depth, basis


def solve_milp(model: MilpModel, node_limit: int = 20_000, rel_gap: float = REL_GAP,
               time_limit: float | None = None, int_tol: float = INT_TOL) -> MilpSolution:
    """Branch-and-bound that alternates depth-first dives with best-bound selection.

    Branching always picks the fractional binary with the lowest index.  A
    dive follows the child nearer the LP value while the node bound stays
    within ``PLUNGE_FRACTION`` of the gap above the best open bound; after
    that the open node with the best bound is taken next.  The root solution rounded to the nearest integers is also tried as an
    incumbent.  Every choice is deterministic, so repeated runs on the same
    model return the same assignment.  ``model.warm_start`` (a mapping
    of binary index to 0/1) seeds the incumbent when it is feasible.
    """
    c, A, row_lo, row_hi, lb0, ub0, is_bin = model.to_arrays()
    bins = np.nonzero(is_bin)[0]
    engine = LPEngine(c, A, row_lo, row_hi)
    const = model.objective_constant
    t0 = time.perf_counter()
    stats = {"nodes": 0, "lp_pivots": 0, "pruned": 0, "incumbent_history": [],
             "warm_start_used": False}

    incumbent_x: np.ndarray | None = None
    incumbent = np.inf

    def cutoff() -> float:
        if not np.isfinite(incumbent):
            return np.inf
        return incumbent - max(ABS_GAP, rel_gap * abs(incumbent))

    def polish(x: np.ndarray, basis: Basis | None):
        lb, ub = lb0.copy(), ub0.copy()
        vals = np.round(x[bins])
        lb[bins] = vals
        ub[bins] = vals
        res = engine.solve(lb, ub, basis)
        stats["lp_pivots"] += res.iterations
        return res

    if model.warm_start:
        lb, ub = lb0.copy(), ub0.copy()
        values = {int(k): float(round(v)) for k, v in model.warm_start.items() if is_bin[int(k)]}
        complete = all(int(k) in values for k in bins)
        in_bounds = all(lb0[k] - int_tol <= v <= ub0[k] + int_tol for k, v in values.items())
        if complete and in_bounds:
            for k, v in values.items():
                lb[k] = ub[k] = v
            res = engine.solve(lb, ub)
            stats["lp_pivots"] += res.iterations
            if res.status == "optimal":
                incumbent, incumbent_x = res.objective, res.x
                stats["warm_start_used"] = True
                stats["incumbent_history"].append((0, incumbent + const))

    counter = itertools.count()
    heap: list = []
    root = _Node(lb0.copy(), ub0.copy(), -np.inf, 0, None)
    plunge: _Node | None = root
    status = "optimal"
    best_open = -np.inf

    while plunge is not None or heap:
        if stats["nodes"] >= node_limit or (
                time_limit is not None and time.perf_counter() - t0 > time_limit):
            status = "iteration-limit"
            break
        if plunge is not None:
            node, plunge = plunge, None
        else:
            node = heapq.heappop(heap)[2]
        if node.bound >= cutoff():
            stats["pruned"] += 1
            continue
        stats["nodes"] += 1
        res = engine.solve(node.lb, node.ub, node.basis)
        stats["lp_pivots"] += res.iterations
        if res.status == "infeasible":
            continue
        if res.status != "optimal":
            # LP trouble at a node: keep its bound so the gap stays honest.
            status = "iteration-limit"
            continue
        if res.objective >= cutoff():
            stats["pruned"] += 1
            continue
        xb = res.x[bins]
        frac = np.abs(xb - np.round(xb)) > int_tol
        if node.depth == 0 and frac.any():
            # rounding heuristic at the root: fix every binary to its nearest value
            guess = polish(res.x, res.basis)
            if guess.status == "optimal" and guess.objective < incumbent:
                incumbent, incumbent_x = guess.objective, guess.x
                stats["incumbent_history"].append((stats["nodes"], incumbent + const))
        if not frac.any():
            final = polish(res.x, res.basis)
            if final.status == "optimal" and final.objective < incumbent:
                incumbent, incumbent_x = final.objective, final.x
                stats["incumbent_history"].append((stats["nodes"], incumbent + const))
            continue
        j = int(bins[np.argmax(frac)])
        down_ub = node.ub.copy()
        down_ub[j] = 0.0
        up_lb = node.lb.copy()
        up_lb[j] = 1.0
        down = _Node(node.lb, down_ub, res.objective, node.depth + 1, res.basis)
        up = _Node(up_lb, node.ub, res.objective, node.depth + 1, res.basis)
        # dive towards the rounded LP value while the node stays close to the
        # best open bound; otherwise both children wait in the best-bound queue
        near, far = (up, down) if xb[np.argmax(frac)] >= 0.5 else (down, up)
        heapq.heappush(heap, (far.bound, next(counter), far))
        lower = min(heap[0][0], res.objective)
        if incumbent_x is None or res.objective <= lower + PLUNGE_FRACTION * (incumbent - lower):
            plunge = near
        else:
            heapq.heappush(heap, (near.bound, next(counter), near))

    open_bounds = [item[0] for item in heap]
    if plunge is not None:
        open_bounds.append(plunge.bound)
    best_open = min(open_bounds) if open_bounds else incumbent
    stats["wall_time"] = time.perf_counter() - t0
    if incumbent_x is None:
        if status == "optimal":
            return MilpSolution("infeasible", np.inf, None, stats)
        stats["gap"] = np.inf
        return MilpSolution("iteration-limit", np.nan, None, stats)
    x = incumbent_x.copy()
    x[bins] = np.round(x[bins])
    obj = incumbent + const
    if status == "optimal":
        stats["gap"] = 0.0
    else:
        lower = min(best_open, incumbent) + const
        stats["gap"] = (obj - lower) / max(1.0, abs(obj))
    return MilpSolution(status, obj, x, stats)


def linearize_product(model: MilpModel, t: int, u: int, name: str | None = None) -> int:
    """Add ``z = t * u`` for continuous ``t`` and binary ``u`` (exact at integral u).

    Uses the four McCormick inequalities built from the bounds of ``t``; these
    coincide with the big-M formulation and leave no relaxation error once u
    is 0 or 1.
    """
    tv, uv = model.variables[t], model.variables[u]
    if uv.kind != "binary":
        raise ModelError(f"{uv.name!r} is not binary")
    lo, hi = tv.lb, tv.ub
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise ModelError(f"{tv.name!r} must be bounded to linearise its product")
    z = model.add_var(name or f"{tv.name}*{uv.name}", min(lo, 0.0), max(hi, 0.0))
    model.add_constraint({z: 1.0, u: -hi}, "<=", 0.0)
    model.add_constraint({z: 1.0, u: -lo}, ">=", 0.0)
    model.add_constraint({z: 1.0, t: -1.0, u: -lo}, "<=", -lo)
    model.add_constraint({z: 1.0, t: -1.0, u: -hi}, ">=", -hi)
    return z


__all__ = ["solve_lp", "solve_milp", "linearize_product", "FEAS_TOL", "INT_TOL"]
