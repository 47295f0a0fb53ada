"""Bounded-variable dual simplex on a sparse LU factorisation.

The LP is held in computational form

    min  c'x   s.t.  A x - r = 0,   lb <= x <= ub,   row_lo <= r <= row_hi

so every row owns a logical variable ``r`` and the basis is always square of
size ``m``.  Because every structural variable is boxed, the all-logical
basis with each structural placed at its cost-favourable bound is dual
feasible, and the dual simplex runs without a phase 1.  Primal infeasibility
shows up as an unbounded dual ray.

Pricing is dual steepest edge; the ratio test passes breakpoints of boxed
variables by flipping them to their opposite bound (bound-flipping ratio
test) and picks the largest pivot among near-ties.  Zero-cost columns are
perturbed slightly to fight dual degeneracy; the perturbation is removed at
the end and a primal simplex pass restores optimality for the true costs.

The basis is factorised with a sparse LU and updated in product form (one
eta vector per pivot), refactorised every ``REFACTOR_EVERY`` pivots.  Warm
starts take a :class:`Basis` from a previous solve; after bound changes it
stays dual feasible, which is what branch-and-bound relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

AT_LOWER, AT_UPPER, FREE = 0, 1, 2

PRIMAL_TOL = 1e-9
DUAL_TOL = 1e-9
PIVOT_TOL = 1e-9
REL_PIVOT = 1e-7
PERTURB = 1e-6
REFACTOR_EVERY = 64
STALL_LIMIT = 200
SINGULAR_TOL = 1e-11


@dataclass
class Basis:
    basic: np.ndarray   # int, length m: column index held at each basis position
    status: np.ndarray  # int, length n + m: AT_LOWER/AT_UPPER/FREE for nonbasics
    weights: np.ndarray | None = None  # dual steepest-edge weights per basis position

    def copy(self) -> "Basis":
        return Basis(self.basic.copy(), self.status.copy(),
                     None if self.weights is None else self.weights.copy())


@dataclass
class LPResult:
    status: str
    objective: float
    x: np.ndarray | None
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    basis: Basis | None = None
    iterations: int = 0


class SingularBasis(RuntimeError):
    """Basis matrix without a usable LU; ``dependent`` lists (position, row) swaps."""

    def __init__(self, message: str, dependent=()):
        super().__init__(message)
        self.dependent = list(dependent)


class _Factor:
    """LU of a basis matrix plus a product-form eta file."""

    def __init__(self, B: sparse.csc_matrix):
        try:
            self.lu = splu(B, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SingularBasis(str(exc)) from exc
        diag = np.abs(self.lu.U.diagonal())
        tiny = np.nonzero(diag <= SINGULAR_TOL * max(1.0, float(diag.max(initial=0.0))))[0]
        if tiny.size:
            # Pr B Pc = L U: pivot k belongs to basis position perm_c[k] and to
            # the row r with perm_r[r] == k
            row_of = np.empty_like(self.lu.perm_r)
            row_of[self.lu.perm_r] = np.arange(self.lu.perm_r.size)
            raise SingularBasis("numerically singular basis",
                                [(int(self.lu.perm_c[k]), int(row_of[k])) for k in tiny])
        self.etas: list[tuple[int, np.ndarray]] = []

    def ftran(self, a: np.ndarray) -> np.ndarray:
        y = self.lu.solve(a)
        for p, w in self.etas:
            yp = y[p] / w[p]
            if yp:
                y -= yp * w
            y[p] = yp
        return y

    def btran(self, r: np.ndarray) -> np.ndarray:
        r = r.copy()
        for p, w in reversed(self.etas):
            r[p] = (r[p] - (r @ w - r[p] * w[p])) / w[p]
        return self.lu.solve(r, trans="T")

    def update(self, p: int, w: np.ndarray) -> None:
        self.etas.append((p, w.copy()))


class LPEngine:
    """Reusable simplex over a fixed constraint matrix; bounds vary per call."""

    def __init__(self, c: np.ndarray, A, row_lo: np.ndarray, row_hi: np.ndarray):
        self.A_csc = sparse.csc_matrix(A, dtype=float)
        self.A_csc.eliminate_zeros()
        self.A_csr = self.A_csc.tocsr()
        self.AT_csr = self.A_csc.T.tocsr()
        self.m, self.n = self.A_csc.shape
        self.c = np.asarray(c, dtype=float)
        self.row_lo = np.asarray(row_lo, dtype=float)
        self.row_hi = np.asarray(row_hi, dtype=float)
        if np.any(~np.isfinite(self.row_lo) & ~np.isfinite(self.row_hi)):
            raise ValueError("every row needs at least one finite side")
        self.c_full = np.concatenate([self.c, np.zeros(self.m)])
        rng = np.random.default_rng(self.n)
        self.perturbation = (rng.choice((-1.0, 1.0), self.n + self.m) * PERTURB
                             * (1.0 + np.abs(self.c_full)) * (1.0 + rng.random(self.n + self.m)))

    # -- helpers -------------------------------------------------------------
    def column(self, j: int) -> np.ndarray:
        col = np.zeros(self.m)
        if j < self.n:
            sl = slice(self.A_csc.indptr[j], self.A_csc.indptr[j + 1])
            col[self.A_csc.indices[sl]] = self.A_csc.data[sl]
        else:
            col[j - self.n] = -1.0
        return col

    def basis_matrix(self, basic: np.ndarray) -> sparse.csc_matrix:
        A = self.A_csc
        rows, cols, vals = [], [], []
        for pos, j in enumerate(basic):
            if j < self.n:
                sl = slice(A.indptr[j], A.indptr[j + 1])
                rows.append(A.indices[sl])
                vals.append(A.data[sl])
                cols.append(np.full(sl.stop - sl.start, pos))
            else:
                rows.append(np.array([j - self.n]))
                vals.append(np.array([-1.0]))
                cols.append(np.array([pos]))
        return sparse.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                 shape=(self.m, self.m))

    def row_alpha(self, rho: np.ndarray) -> np.ndarray:
        return np.concatenate([self.AT_csr @ rho, -rho])

    def full_times(self, x: np.ndarray) -> np.ndarray:
        return self.A_csr @ x[: self.n] - x[self.n:]

    # -- public ----------------------------------------------------------------
    def default_basis(self) -> Basis:
        basic = np.arange(self.n, self.n + self.m)
        status = np.full(self.n + self.m, AT_LOWER, dtype=int)
        status[: self.n] = np.where(self.c < 0, AT_UPPER, AT_LOWER)
        return Basis(basic, status, np.ones(self.m))

    def solve(self, lb: np.ndarray, ub: np.ndarray, basis: Basis | None = None,
              max_iter: int = 50_000) -> LPResult:
        n, m = self.n, self.m
        lo = np.concatenate([np.asarray(lb, float), self.row_lo])
        hi = np.concatenate([np.asarray(ub, float), self.row_hi])
        if np.any(lo > hi + PRIMAL_TOL):
            return LPResult("infeasible", np.inf, None)
        if m == 0:
            x = np.where(self.c < 0, ub, lb).astype(float)
            return LPResult("optimal", float(self.c @ x), x, np.zeros(0), self.c.copy(),
                            Basis(np.zeros(0, int), np.zeros(n, int)), 0)

        warm = basis is not None
        basis = self.default_basis() if basis is None else basis.copy()
        state = _State(self, lo, hi, basis, warm)
        status = state.run(max_iter)
        if status == "optimal" and state.shifted:
            status = state.unshift_and_polish(max_iter)
        if status != "optimal":
            return LPResult(status, np.inf if status == "infeasible" else np.nan, None,
                            basis=state.basis(), iterations=state.iterations)
        x = state.x[:n].copy()
        x = np.clip(x, lo[:n], hi[:n])
        y = state.factor.btran(state.c_B())
        d = self.c - self.AT_csr @ y
        return LPResult("optimal", float(self.c @ x), x, y, d, state.basis(), state.iterations)


class _State:
    """Mutable simplex iterate; one instance per solve."""

    def __init__(self, eng: LPEngine, lo: np.ndarray, hi: np.ndarray, basis: Basis,
                 warm: bool = False):
        self.eng = eng
        self.warm = warm
        self.lo, self.hi = lo, hi
        self.basic = basis.basic.astype(int).copy()
        self.status = basis.status.astype(int).copy()
        self.weights = (np.ones(eng.m) if basis.weights is None
                        else np.asarray(basis.weights, float).copy())
        self.N = eng.n + eng.m
        self.cost = eng.c_full.copy()
        self.shifted = False
        self.iterations = 0
        self.is_basic = np.zeros(self.N, dtype=bool)
        self.is_basic[self.basic] = True
        self.fixed = np.abs(hi - lo) <= PRIMAL_TOL
        self.boxed = np.isfinite(lo) & np.isfinite(hi)
        self.x = np.zeros(self.N)
        self._refactor()
        self._place_nonbasics()
        self._compute_primal()
        self._perturb_costs()
        self._make_dual_feasible()

    # -- bookkeeping -----------------------------------------------------------
    def basis(self) -> Basis:
        return Basis(self.basic.copy(), self.status.copy(), self.weights.copy())

    def c_B(self) -> np.ndarray:
        return self.eng.c_full[self.basic]

    def _refactor(self) -> None:
        for _ in range(3):
            try:
                self.factor = _Factor(self.eng.basis_matrix(self.basic))
                return
            except SingularBasis as exc:
                if not exc.dependent or not self._repair(exc.dependent):
                    break
        # Unrepairable: fall back to the all-logical basis.
        eng = self.eng
        self.basic = np.arange(eng.n, eng.n + eng.m)
        self.is_basic[:] = False
        self.is_basic[self.basic] = True
        self.status[: eng.n] = np.where(self.cost[: eng.n] < 0, AT_UPPER, AT_LOWER)
        self.weights = np.ones(eng.m)
        self.factor = _Factor(eng.basis_matrix(self.basic))
        self._place_nonbasics()

    def _repair(self, dependent) -> bool:
        """Swap dependent basis columns for the logicals of their pivot rows."""
        changed = False
        for pos, row in dependent:
            logical = self.eng.n + row
            if self.is_basic[logical]:
                continue
            out = self.basic[pos]
            self.basic[pos] = logical
            self.is_basic[out] = False
            self.is_basic[logical] = True
            self.weights[pos] = 1.0
            x = self.x[out]
            self.status[out] = AT_UPPER if (np.isfinite(self.hi[out])
                                             and abs(self.hi[out] - x) < abs(x - self.lo[out])) else AT_LOWER
            changed = True
        if changed:
            self._place_nonbasics()
        return changed

    def _place_nonbasics(self) -> None:
        lo, hi = self.lo, self.hi
        nb = ~self.is_basic
        st = self.status
        fin_lo, fin_hi = np.isfinite(lo), np.isfinite(hi)
        st[nb & (st == AT_LOWER) & ~fin_lo & fin_hi] = AT_UPPER
        st[nb & (st == AT_UPPER) & ~fin_hi & fin_lo] = AT_LOWER
        st[nb & (st == FREE) & fin_lo] = AT_LOWER
        st[nb & (st == FREE) & ~fin_lo & fin_hi] = AT_UPPER
        st[nb & ~fin_lo & ~fin_hi] = FREE
        self.x[nb & (st == AT_LOWER)] = lo[nb & (st == AT_LOWER)]
        self.x[nb & (st == AT_UPPER)] = hi[nb & (st == AT_UPPER)]
        self.x[nb & (st == FREE)] = 0.0

    def _compute_primal(self) -> None:
        xn = self.x.copy()
        xn[self.basic] = 0.0
        self.x[self.basic] = -self.factor.ftran(self.eng.full_times(xn))

    def _compute_dual(self) -> None:
        y = self.factor.btran(self.cost[self.basic])
        self.d = self.cost - self.eng.row_alpha(y)
        self.d[self.basic] = 0.0

    def _dual_infeasible(self) -> np.ndarray:
        d, st = self.d, self.status
        bad = np.zeros(self.N, dtype=bool)
        nb = ~self.is_basic & ~self.fixed
        bad |= nb & (st == AT_LOWER) & (d < -DUAL_TOL)
        bad |= nb & (st == AT_UPPER) & (d > DUAL_TOL)
        bad |= nb & (st == FREE) & (np.abs(d) > DUAL_TOL)
        return bad

    def _perturb_costs(self, scale: float = 1.0, seed: int = 0) -> None:
        # Zero-cost columns make the dual massively degenerate; a small
        # perturbation breaks the ties.  The first one is a fixed vector of the
        # engine, so a warm basis from a sibling solve stays dual feasible.
        # Escalations after a stall move each nonbasic in the direction that
        # keeps it dual feasible.
        movable = ~self.fixed & self.boxed
        movable[self.eng.n:] = False
        if seed == 0:
            self.cost[movable] += self.eng.perturbation[movable]
        else:
            rng = np.random.default_rng(self.N + seed)
            mag = scale * PERTURB * (1.0 + np.abs(self.eng.c_full)) * (1.0 + rng.random(self.N))
            sign = np.where(self.status == AT_UPPER, -1.0, 1.0)
            sign[self.is_basic] = rng.choice((-1.0, 1.0), int(self.is_basic.sum()))
            self.cost[movable] += sign[movable] * mag[movable]
        self.shifted = self.shifted or bool(movable.any())

    def _make_dual_feasible(self) -> None:
        self._compute_dual()
        bad = self._dual_infeasible()
        if not bad.any():
            return
        if self.warm:
            # tiny infeasibilities left by the perturbation: absorb them in the
            # costs instead of flipping bounds, which would wreck primal progress
            small = bad & (np.abs(self.d) <= 10.0 * PERTURB * (1.0 + np.abs(self.cost)))
            if small.any():
                self.cost[small] -= self.d[small]
                self.shifted = True
                self.d[small] = 0.0
                bad &= ~small
        flip = bad & self.boxed
        if flip.any():
            self.status[flip] = np.where(self.d[flip] < 0, AT_UPPER, AT_LOWER)
            self.x[flip] = np.where(self.status[flip] == AT_UPPER, self.hi[flip], self.lo[flip])
            self._compute_primal()
        shift = bad & ~self.boxed
        if shift.any():
            self.cost[shift] -= self.d[shift]
            self.shifted = True
            self._compute_dual()

    def _reset(self) -> None:
        self._refactor()
        self._compute_primal()
        self._make_dual_feasible()

    # -- dual simplex ------------------------------------------------------------
    def run(self, max_iter: int) -> str:
        banned: set[int] = set()
        rounds = 0
        bland = False
        best_obj = -np.inf
        stall = 0
        retried = False
        releases = 0
        since_refactor = 0
        eng = self.eng
        while True:
            if self.iterations >= max_iter:
                return "iteration-limit"
            if since_refactor >= REFACTOR_EVERY:
                self._reset()
                since_refactor = 0

            xB = self.x[self.basic]
            lo_B, hi_B = self.lo[self.basic], self.hi[self.basic]
            below = lo_B - xB
            above = xB - hi_B
            infeas = np.maximum(below, above)
            tol = PRIMAL_TOL * (1.0 + np.maximum(np.abs(np.where(np.isfinite(lo_B), lo_B, 0)),
                                                 np.abs(np.where(np.isfinite(hi_B), hi_B, 0))))
            cand = infeas > tol
            if not cand.any():
                if since_refactor > 0:
                    # Confirm on a fresh factorisation before declaring optimality.
                    self._reset()
                    since_refactor = 0
                    continue
                return "optimal"
            if bland:
                idx = np.nonzero(cand)[0]
                p = int(idx[np.argmin(self.basic[idx])])
            else:
                score = np.where(cand, infeas * infeas / self.weights, -np.inf)
                p = int(np.argmax(score))
            to_lower = below[p] > above[p]
            s = 1.0 if to_lower else -1.0

            e_p = np.zeros(eng.m)
            e_p[p] = 1.0
            rho = self.factor.btran(e_p)
            alpha = eng.row_alpha(rho)
            alpha[self.basic] = 0.0
            st = self.status
            movable = ~self.is_basic & ~self.fixed
            if banned:
                movable[list(banned)] = False
            sa = s * alpha
            direction_ok = movable & (((st == AT_LOWER) & (sa < 0)) | ((st == AT_UPPER) & (sa > 0))
                                      | (st == FREE))
            absalpha = np.abs(alpha)
            amax = float(absalpha[direction_ok].max(initial=0.0))
            idx = np.nonzero(direction_ok & (absalpha > max(PIVOT_TOL, REL_PIVOT * amax)))[0]
            if idx.size == 0:
                idx = np.nonzero(direction_ok & (absalpha > PIVOT_TOL))[0]
            if idx.size == 0 and banned and releases < 2:
                # the only candidates were set aside as unstable: reconsider
                # them rather than misreport infeasibility
                banned.clear()
                releases += 1
                continue
            if idx.size == 0:
                if not retried:
                    retried = True
                    self._reset()
                    since_refactor = 0
                    continue
                return "infeasible"
            absa = absalpha[idx]
            dd = np.where(st[idx] == AT_UPPER, -self.d[idx], self.d[idx])
            dd = np.where(st[idx] == FREE, np.abs(self.d[idx]), np.maximum(dd, 0.0))
            ratios = dd / absa
            flips = np.zeros(0, dtype=int)
            if bland:
                rmin = ratios.min()
                q = int(idx[ratios <= rmin + 1e-12].min())
            else:
                order = np.argsort(ratios, kind="stable")
                span = np.where(self.boxed[idx] & (st[idx] != FREE),
                                self.hi[idx] - self.lo[idx], np.inf)[order]
                slope = infeas[p] - np.cumsum(absa[order] * span)
                passed = slope <= tol[p]
                if passed.any():
                    stop = int(np.argmax(passed))
                elif self._row_can_recover(infeas[p], absalpha, direction_ok, tol[p]):
                    # only candidates dropped by the relative pivot filter can close the
                    # gap; stepping to the last kept breakpoint is still dual feasible
                    stop = len(order) - 1
                else:
                    # every breakpoint can be passed: the dual ray is unbounded
                    if not retried:
                        retried = True
                        self._reset()
                        since_refactor = 0
                        continue
                    return "infeasible"
                flips = idx[order[:stop]]
                rest = order[stop:]
                theta_max = np.min((dd[rest] + DUAL_TOL) / absa[rest])
                sub = rest[ratios[rest] <= theta_max]
                q = int(idx[sub[np.argmax(absa[sub])]])
            retried = False

            w = self.factor.ftran(eng.column(q))
            if (abs(w[p]) < max(PIVOT_TOL, REL_PIVOT * float(np.abs(w).max()))
                    or abs(w[p] - alpha[q]) > 1e-6 * (1 + abs(alpha[q]))):
                if since_refactor > 0:
                    self._reset()
                    since_refactor = 0
                    continue
                if (abs(w[p]) < PIVOT_TOL
                        or abs(w[p] - alpha[q]) > 1e-6 * (1 + abs(alpha[q]))):
                    # unusable even on a fresh factorisation: try another entering column
                    banned.add(q)
                    continue
            banned.clear()
            releases = 0
            theta_d = self.d[q] / alpha[q]
            self.d -= theta_d * alpha
            leave = self.basic[p]
            self.d[q] = 0.0
            self.d[leave] = -theta_d

            if flips.size:
                up = self.status[flips] == AT_LOWER
                delta_x = np.where(up, self.hi[flips] - self.lo[flips],
                                   self.lo[flips] - self.hi[flips])
                self.status[flips] = np.where(up, AT_UPPER, AT_LOWER)
                self.x[flips] = np.where(up, self.hi[flips], self.lo[flips])
                a = np.zeros(eng.m)
                struct = flips < eng.n
                if struct.any():
                    a += eng.A_csc[:, flips[struct]] @ delta_x[struct]
                if (~struct).any():
                    np.add.at(a, flips[~struct] - eng.n, -delta_x[~struct])
                self.x[self.basic] -= self.factor.ftran(a)

            bound = self.lo[leave] if to_lower else self.hi[leave]
            delta = (self.x[leave] - bound) / w[p]
            self.x[self.basic] -= delta * w
            self.x[q] += delta
            self.x[leave] = bound
            self.status[leave] = AT_LOWER if to_lower else AT_UPPER
            self._update_weights(p, w, rho)
            self._pivot(p, q, w)
            self.iterations += 1
            since_refactor += 1

            obj = float(self.cost @ self.x)
            if obj > best_obj + 1e-12 * (1 + abs(obj)):
                best_obj = obj
                stall = 0
            else:
                stall += 1
                if stall > STALL_LIMIT:
                    stall = 0
                    if rounds < 2:
                        # stuck on a degenerate vertex: perturb harder and go on
                        rounds += 1
                        self._perturb_costs(10.0 ** rounds, rounds)
                        self._reset()
                        since_refactor = 0
                        best_obj = -np.inf
                    else:
                        bland = True

    def _row_can_recover(self, gap: float, absalpha: np.ndarray, direction_ok: np.ndarray,
                         tol: float) -> bool:
        """Whether moving every eligible nonbasic to its far bound closes the row's gap."""
        j = np.nonzero(direction_ok & (absalpha > 0.0))[0]
        unbounded = ~self.boxed[j] | (self.status[j] == FREE)
        if unbounded.any():
            return True
        return float(np.sum(absalpha[j] * (self.hi[j] - self.lo[j]))) >= gap - tol

    def _update_weights(self, p: int, w: np.ndarray, rho: np.ndarray) -> None:
        # exact dual steepest-edge recurrence for the row norms of B^-1
        wp = w[p]
        beta_p = max(float(rho @ rho), 1e-12)
        tau = self.factor.ftran(rho)
        ratio = w / wp
        new = self.weights - 2.0 * ratio * tau + ratio * ratio * beta_p
        self.weights = np.maximum(new, 1e-4)
        self.weights[p] = max(beta_p / (wp * wp), 1e-12)

    def _pivot(self, p: int, q: int, w: np.ndarray) -> None:
        leave = self.basic[p]
        self.factor.update(p, w)
        self.basic[p] = q
        self.is_basic[q] = True
        self.is_basic[leave] = False

    # -- primal cleanup ------------------------------------------------------------
    def unshift_and_polish(self, max_iter: int) -> str:
        self.cost = self.eng.c_full.copy()
        self.shifted = False
        self._refactor()
        self._compute_primal()
        self._compute_dual()
        return self._primal(max_iter)

    def _primal(self, max_iter: int) -> str:
        bland = False
        stall = 0
        best = np.inf
        since_refactor = 0
        eng = self.eng
        while True:
            if self.iterations >= max_iter:
                return "iteration-limit"
            if since_refactor >= REFACTOR_EVERY:
                self._refactor()
                self._compute_primal()
                self._compute_dual()
                since_refactor = 0
            d, st = self.d, self.status
            movable = ~self.is_basic & ~self.fixed
            inc = movable & (st != AT_UPPER) & (d < -DUAL_TOL)
            dec = movable & (st != AT_LOWER) & (d > DUAL_TOL)
            cand = inc | dec
            if not cand.any():
                return "optimal"
            if bland:
                q = int(np.nonzero(cand)[0][0])
            else:
                q = int(np.argmax(np.where(cand, np.abs(d), -np.inf)))
            direction = 1.0 if inc[q] else -1.0
            w = self.factor.ftran(eng.column(q))
            change = -direction * w
            xB = self.x[self.basic]
            lo_B, hi_B = self.lo[self.basic], self.hi[self.basic]
            # Harris two-pass ratio test: relax bounds by the tolerance, then take
            # the largest pivot among rows blocking within the relaxed step
            cmax = float(np.abs(change).max(initial=0.0))
            ptol = max(PIVOT_TOL, REL_PIVOT * cmax)
            dn = change < -ptol
            up = change > ptol
            room = np.full(eng.m, np.inf)
            room[dn] = np.maximum(xB[dn] - lo_B[dn], 0.0)
            room[up] = np.maximum(hi_B[up] - xB[up], 0.0)
            absc = np.abs(change)
            blocking = dn | up
            t_flip = self.hi[q] - self.lo[q] if self.boxed[q] else np.inf
            if blocking.any():
                t_relaxed = float(np.min((room[blocking] + PRIMAL_TOL) / absc[blocking]))
                ratios = np.where(blocking, room / np.where(blocking, absc, 1.0), np.inf)
                near = blocking & (ratios <= t_relaxed)
                p = int(np.argmax(np.where(near, absc, -np.inf)))
                step = float(ratios[p])
            else:
                p, step = -1, np.inf
            if t_flip <= step:
                self.x[self.basic] += t_flip * change
                self.x[q] = self.hi[q] if direction > 0 else self.lo[q]
                self.status[q] = AT_UPPER if direction > 0 else AT_LOWER
                self.iterations += 1
                continue
            if not np.isfinite(step):
                return "unbounded"
            e_p = np.zeros(eng.m)
            e_p[p] = 1.0
            rho = self.factor.btran(e_p)
            alpha = eng.row_alpha(rho)
            leave = self.basic[p]
            to_lower = change[p] < 0
            self.x[self.basic] += step * change
            self.x[q] += direction * step
            self.x[leave] = self.lo[leave] if to_lower else self.hi[leave]
            self.status[leave] = AT_LOWER if to_lower else AT_UPPER
            theta = self.d[q] / w[p]
            self.d -= theta * alpha
            self.d[q] = 0.0
            self.d[leave] = -theta
            self._update_weights(p, w, rho)
            self._pivot(p, q, w)
            self.iterations += 1
            since_refactor += 1
            obj = float(self.cost @ self.x)
            if obj < best - 1e-12 * (1 + abs(obj)):
                best = obj
                stall = 0
            else:
                stall += 1
                if stall > STALL_LIMIT:
                    bland = True


def solve_lp_arrays(c, A, row_lo, row_hi, lb, ub, basis: Basis | None = None,
                    max_iter: int = 50_000) -> LPResult:
    return LPEngine(c, A, row_lo, row_hi).solve(lb, ub, basis, max_iter)
