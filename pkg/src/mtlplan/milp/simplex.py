"""Dense-tableau simplex with implicit variable bounds.

Cold solves run two phases (artificial variables, then the real cost) with
Dantzig pricing and a switch to Bland's rule once 1000 consecutive degenerate
pivots have been made.  Binary variables are relaxed to ``[0, 1]``.

:class:`LpSolver` keeps the standard form of one model so branch and bound can
re-solve it under tightened bounds starting from a parent's optimal basis: the
basis stays dual feasible, and a bounded dual simplex restores primal
feasibility.  The final tableaux of the most recent solves are kept in a
small cache keyed by their basis, so the children of a node (which all start
from the node's basis) usually skip the refactorization.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .model import EQ, GE, LE, MilpModel

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"

FEAS_TOL = 1e-7
_PIVOT_TOL = 1e-9
_COST_TOL = 1e-9
_STALL_LIMIT = 1000
_CACHE_SIZE = 16
# pivots applied to a cached tableau since its last factorization
_MAX_AGE = 400


@dataclass(frozen=True)
class Basis:
    """Enough of an optimal tableau to rebuild it: basic columns, bound flags, live rows."""

    basic: np.ndarray
    at_upper: np.ndarray
    rows: np.ndarray


@dataclass
class LpResult:
    status: str
    objective: float = np.nan
    x: Optional[np.ndarray] = None
    iterations: int = 0
    bland: bool = False
    basis: Optional[Basis] = None

    @property
    def assignment(self) -> dict:
        return {} if self.x is None else {i: float(v) for i, v in enumerate(self.x)}


def solve_lp(model: MilpModel, lower=None, upper=None, max_iter: Optional[int] = None) -> LpResult:
    """Solve the LP relaxation of ``model``.

    ``lower``/``upper`` override the declared variable bounds (branch and bound
    passes tightened bounds this way).
    """
    return LpSolver(model).solve(lower, upper, max_iter=max_iter)


def linprog_dense(c, A, senses, b, lb, ub, max_iter: Optional[int] = None) -> LpResult:
    """``min c@x`` s.t. ``A[i]@x (senses[i]) b[i]`` and ``lb <= x <= ub``."""
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float).reshape(len(b), c.size)
    return _StandardForm(c, A, list(senses), np.asarray(b, dtype=float),
                         np.asarray(lb, dtype=float), np.asarray(ub, dtype=float)).cold(max_iter)


class LpSolver:
    """Reusable LP relaxation of a fixed model under varying variable bounds."""

    def __init__(self, model: MilpModel):
        self.model = model
        A, senses, b = model.dense_rows()
        lb, ub = model.bounds()
        self.lb0, self.ub0 = lb, ub
        self.form = _StandardForm(model.cost_vector(), A, senses, b, lb, ub)

    def solve(self, lower=None, upper=None, warm: Optional[Basis] = None,
              max_iter: Optional[int] = None) -> LpResult:
        lb = self.lb0 if lower is None else np.asarray(lower, dtype=float)
        ub = self.ub0 if upper is None else np.asarray(upper, dtype=float)
        if np.any(lb > ub + FEAS_TOL):
            return LpResult(INFEASIBLE)
        res = None
        if warm is not None:
            res = self.form.warm(lb, ub, warm, max_iter)
        if res is None:
            form = self.form if (lower is None and upper is None) else self.form.rebound(lb, ub)
            res = form.cold(max_iter)
        if res.status == OPTIMAL:
            res.objective += self.model.objective_constant
        return res


class _StandardForm:
    """``std @ y = rhs`` with ``y >= 0`` (plus slacks), ``x = offset + Σ sign * y``."""

    def __init__(self, c, A, senses, b, lb, ub):
        self.c, self.A_orig, self.senses, self.b = c, A, senses, b
        self.lb, self.ub = lb, ub
        n = c.size
        cols, signs = [], []
        offset = np.zeros(n)
        y_upper = []
        for j in range(n):
            lo, hi = lb[j], ub[j]
            if np.isfinite(lo):
                offset[j] = lo
                cols.append(j); signs.append(1.0); y_upper.append(max(hi - lo, 0.0))
            elif np.isfinite(hi):
                offset[j] = hi
                cols.append(j); signs.append(-1.0); y_upper.append(np.inf)
            else:
                cols.extend((j, j)); signs.extend((1.0, -1.0)); y_upper.extend((np.inf, np.inf))
        self.cols = np.array(cols, dtype=int)
        self.signs = np.array(signs)
        self.offset = offset
        m = len(b)
        n_y = self.cols.size
        n_slack = sum(1 for s in senses if s != EQ)
        ncol = n_y + n_slack
        std = np.zeros((m, ncol))
        std[:, :n_y] = A[:, self.cols] * self.signs
        slack_of_row = np.full(m, -1)
        k = n_y
        for i, s in enumerate(senses):
            if s == LE:
                std[i, k] = 1.0
            elif s == GE:
                std[i, k] = -1.0
            elif s != EQ:
                raise ValueError(f"unknown relation {s!r}")
            if s != EQ:
                slack_of_row[i] = k
                k += 1
        rhs = b - A @ offset
        flip = rhs < 0
        std[flip] *= -1
        self.rhs = np.where(flip, -rhs, rhs)
        self.std = std
        self.slack_of_row = slack_of_row
        self.upper = np.concatenate([np.array(y_upper), np.full(n_slack, np.inf)])
        self.cost = np.concatenate([c[self.cols] * self.signs, np.zeros(n_slack)])
        self.n_y, self.ncol, self.m = n_y, ncol, m
        self._cache: "OrderedDict[int, tuple]" = OrderedDict()

    def rebound(self, lb, ub) -> "_StandardForm":
        return _StandardForm(self.c, self.A_orig, self.senses, self.b, lb, ub)

    # -- results --------------------------------------------------------------

    def _finish(self, state: "_Tableau", lb, ub, age: int = 0) -> LpResult:
        y = state.refined_values(self.std, self.rhs)
        x = self.offset.copy()
        np.add.at(x, self.cols, self.signs * y[:self.n_y])
        # clamp round-off onto the box
        x = np.minimum(np.maximum(x, lb), ub)
        basis = Basis(state.basis.copy(), state.at_upper.copy(), state.rows.copy())
        age += state.iters
        if age <= _MAX_AGE and state.T.shape[1] == self.ncol:
            nb = y.copy()
            nb[state.basis] = 0.0
            # B^-1 rhs, so a later warm start can rebuild xB for any bounds
            beta = y[state.basis] + state.T @ nb
            self._cache[id(basis)] = (basis, state.T, beta, age)
            while len(self._cache) > _CACHE_SIZE:
                self._cache.popitem(last=False)
        return LpResult(OPTIMAL, float(self.c @ x), x, state.iters, state.bland, basis)

    def _limit(self, max_iter):
        return max_iter if max_iter is not None else 50 * (self.m + self.ncol) + 1000

    # -- cold start -------------------------------------------------------------

    def cold(self, max_iter: Optional[int] = None) -> LpResult:
        if np.any(self.lb > self.ub + FEAS_TOL):
            return LpResult(INFEASIBLE)
        m, ncol = self.m, self.ncol
        basis = np.empty(m, dtype=int)
        art_rows = []
        for i in range(m):
            s = self.slack_of_row[i]
            if s >= 0 and self.std[i, s] > 0:
                basis[i] = s
            else:
                art_rows.append(i)
        n_art = len(art_rows)
        T = np.zeros((m, ncol + n_art))
        T[:, :ncol] = self.std
        for a, i in enumerate(art_rows):
            T[i, ncol + a] = 1.0
            basis[i] = ncol + a
        upper = np.concatenate([self.upper, np.full(n_art, np.inf)])
        state = _Tableau(T, basis, self.rhs.copy(), np.zeros(ncol + n_art), upper,
                         np.zeros(ncol + n_art, dtype=bool))
        limit = self._limit(max_iter)
        if n_art:
            cost1 = np.zeros(ncol + n_art)
            cost1[ncol:] = 1.0
            if state.run(cost1, limit) == ITERATION_LIMIT:
                return LpResult(ITERATION_LIMIT, iterations=state.iters)
            infeas = float(np.sum(state.values()[ncol:]))
            if infeas > FEAS_TOL * max(1.0, float(np.max(np.abs(self.rhs), initial=0.0))):
                return LpResult(INFEASIBLE, iterations=state.iters)
            state.drop_artificials(ncol)
        status = state.run(self.cost, limit)
        if status != OPTIMAL:
            return LpResult(status, iterations=state.iters)
        return self._finish(state, self.lb, self.ub)

    # -- warm start -------------------------------------------------------------

    def _y_bounds(self, lb, ub):
        """Bounds on the standard-form columns for variable bounds ``[lb, ub]``."""
        lo = np.zeros(self.ncol)
        up = self.upper.copy()
        v = self.cols
        pos = self.signs > 0
        fin = np.isfinite(self.lb[v])
        shifted = pos & fin
        lo[:self.n_y][shifted] = lb[v[shifted]] - self.offset[v[shifted]]
        up[:self.n_y][shifted] = ub[v[shifted]] - self.offset[v[shifted]]
        flipped = ~pos & ~np.isfinite(self.lb[v]) & np.isfinite(self.ub[v])
        if np.any(np.isfinite(lb[v[flipped]])) or np.any(ub[v[flipped]] != self.ub[v[flipped]]):
            return None
        free = ~fin & ~np.isfinite(self.ub[v])
        if np.any(np.isfinite(lb[v[free]])) or np.any(np.isfinite(ub[v[free]])):
            return None
        return lo, up

    def warm(self, lb, ub, warm: Basis, max_iter: Optional[int] = None) -> Optional[LpResult]:
        """Dual simplex from ``warm``; ``None`` when the basis cannot be reused."""
        bounds = self._y_bounds(lb, ub)
        if bounds is None:
            return None
        lo, up = bounds
        rows = warm.rows
        at_upper = warm.at_upper.copy()
        nb_val = np.where(at_upper, up, lo)
        nb_val[warm.basic] = 0.0
        hit = self._cache.get(id(warm))
        if hit is not None and hit[0] is warm:
            self._cache.move_to_end(id(warm))
            _, T0, beta, age = hit
            T = T0.copy()
            xB = beta - T @ nb_val
        else:
            age = 0
            S = self.std[rows]
            try:
                lu = scipy.linalg.lu_factor(S[:, warm.basic], check_finite=False)
            except (ValueError, np.linalg.LinAlgError):
                return None
            if not np.all(np.isfinite(lu[0])) or np.min(np.abs(np.diag(lu[0]))) < 1e-11:
                return None
            T = scipy.linalg.lu_solve(lu, S, check_finite=False)
            xB = scipy.linalg.lu_solve(lu, self.rhs[rows] - S @ nb_val, check_finite=False)
        state = _Tableau(T, warm.basic.copy(), xB, lo, up, at_upper, rows.copy())
        limit = self._limit(max_iter)
        status = state.dual_run(self.cost, limit)
        if status == INFEASIBLE:
            return LpResult(INFEASIBLE, iterations=state.iters)
        if status != OPTIMAL:
            return None
        # dual simplex ends primal and dual feasible; a primal pass mops up round-off
        if state.run(self.cost, limit) != OPTIMAL:
            return None
        return self._finish(state, lb, ub, age)


class _Tableau:
    def __init__(self, T, basis, xB, lower, upper, at_upper, rows=None):
        self.T = T
        self.basis = basis
        self.xB = xB
        self.lower = lower
        self.upper = upper
        self.at_upper = at_upper
        self.iters = 0
        self.bland = False
        self.rows = np.arange(T.shape[0]) if rows is None else rows

    def values(self) -> np.ndarray:
        v = np.where(self.at_upper, self.upper, self.lower)
        v[self.basis] = self.xB
        return v

    def run(self, cost: np.ndarray, limit: int) -> str:
        """Primal simplex from a primal feasible basis."""
        T = self.T
        d = cost - cost[self.basis] @ T
        is_basic = np.zeros(T.shape[1], dtype=bool)
        is_basic[self.basis] = True
        movable = self.upper - self.lower > 0
        stalled = 0
        while True:
            if self.iters >= limit:
                return ITERATION_LIMIT
            score = np.where(self.at_upper, d, -d)
            eligible = (score > _COST_TOL) & ~is_basic & movable
            if not eligible.any():
                return OPTIMAL
            if self.bland:
                q = int(np.flatnonzero(eligible)[0])
            else:
                q = int(np.argmax(np.where(eligible, score, -np.inf)))
            sgn = -1.0 if self.at_upper[q] else 1.0
            alpha = sgn * T[:, q]
            loB = self.lower[self.basis]
            upB = self.upper[self.basis]
            room_down = np.maximum(self.xB - loB, 0.0)
            ratios = np.full(alpha.size, np.inf)
            dec = alpha > _PIVOT_TOL
            ratios[dec] = room_down[dec] / alpha[dec]
            inc = (alpha < -_PIVOT_TOL) & np.isfinite(upB)
            ratios[inc] = np.maximum(upB[inc] - self.xB[inc], 0.0) / -alpha[inc]
            theta = ratios.min() if ratios.size else np.inf
            flip_len = self.upper[q] - self.lower[q]
            if not np.isfinite(theta) and not np.isfinite(flip_len):
                return UNBOUNDED
            self.iters += 1
            if flip_len <= theta:
                self.xB = self.xB - flip_len * alpha
                self.at_upper[q] = not self.at_upper[q]
                stalled = 0
                continue
            ties = np.flatnonzero(ratios <= theta + 1e-12)
            if self.bland:
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                r = int(ties[np.argmax(np.abs(alpha[ties]))])
            entering_val = self.lower[q] + theta if sgn > 0 else self.upper[q] - theta
            leaving = self.basis[r]
            self.at_upper[leaving] = alpha[r] < 0
            self.xB = self.xB - theta * alpha
            self.xB[r] = entering_val
            self._pivot(r, q, d)
            is_basic[leaving] = False
            is_basic[q] = True
            self.at_upper[q] = False
            if theta <= 1e-12:
                stalled += 1
                if stalled >= _STALL_LIMIT:
                    self.bland = True
            else:
                stalled = 0

    def dual_run(self, cost: np.ndarray, limit: int) -> str:
        """Bounded dual simplex from a dual feasible basis."""
        T = self.T
        d = cost - cost[self.basis] @ T
        is_basic = np.zeros(T.shape[1], dtype=bool)
        is_basic[self.basis] = True
        movable = (self.upper - self.lower > 0) & ~is_basic
        while True:
            if self.iters >= limit:
                return ITERATION_LIMIT
            loB = self.lower[self.basis]
            upB = self.upper[self.basis]
            below = loB - self.xB
            above = self.xB - upB
            viol = np.maximum(below, above)
            r = int(np.argmax(viol))
            if viol[r] <= FEAS_TOL:
                return OPTIMAL
            row = T[r]
            if below[r] > above[r]:
                # basic value must rise to its lower bound
                target = loB[r]
                cand = movable & ((~self.at_upper & (row < -_PIVOT_TOL)) | (self.at_upper & (row > _PIVOT_TOL)))
            else:
                target = upB[r]
                cand = movable & ((~self.at_upper & (row > _PIVOT_TOL)) | (self.at_upper & (row < -_PIVOT_TOL)))
            if not cand.any():
                return INFEASIBLE
            idx = np.flatnonzero(cand)
            ratios = np.abs(d[idx]) / np.abs(row[idx])
            best = ratios.min()
            ties = idx[ratios <= best + 1e-12]
            q = int(ties[np.argmax(np.abs(row[ties]))])
            self.iters += 1
            delta = (self.xB[r] - target) / row[q]
            entering_val = (self.upper[q] if self.at_upper[q] else self.lower[q]) + delta
            leaving = self.basis[r]
            self.xB = self.xB - delta * T[:, q]
            self.xB[r] = entering_val
            self.at_upper[leaving] = below[r] <= above[r]
            self._pivot(r, q, d)
            is_basic[leaving] = False
            is_basic[q] = True
            movable[q] = False
            movable[leaving] = self.upper[leaving] - self.lower[leaving] > 0
            self.at_upper[q] = False

    def _pivot(self, r: int, q: int, d: Optional[np.ndarray] = None):
        T = self.T
        T[r] /= T[r, q]
        col = T[:, q].copy()
        col[r] = 0.0
        nz = np.flatnonzero(col)
        if nz.size:
            prow = T[r]
            nzc = np.flatnonzero(prow)
            if nzc.size * 3 < prow.size:
                T[np.ix_(nz, nzc)] -= np.outer(col[nz], prow[nzc])
            else:
                T[nz] -= np.outer(col[nz], prow)
        if d is not None and d[q] != 0.0:
            d -= d[q] * T[r]
        self.basis[r] = q

    def drop_artificials(self, ncol: int):
        """Pivot zero-level artificials out of the basis, delete redundant rows."""
        keep = []
        for r in range(self.T.shape[0]):
            if self.basis[r] < ncol:
                keep.append(r)
                continue
            row = np.abs(self.T[r, :ncol])
            row[self.basis[self.basis < ncol]] = 0.0
            j = int(np.argmax(row)) if row.size else -1
            if j >= 0 and row[j] > 1e-7:
                val = self.upper[j] if self.at_upper[j] else self.lower[j]
                self._pivot(r, j)
                self.xB[r] = val
                self.at_upper[j] = False
                keep.append(r)
        keep = np.array(keep, dtype=int)
        self.T = self.T[keep][:, :ncol]
        self.basis = self.basis[keep]
        self.xB = self.xB[keep]
        self.rows = self.rows[keep]
        self.lower = self.lower[:ncol]
        self.upper = self.upper[:ncol]
        self.at_upper = self.at_upper[:ncol]

    def refined_values(self, std: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        """Recompute basic values from the original columns to shed round-off."""
        v = np.where(self.at_upper, self.upper, self.lower)
        v[self.basis] = 0.0
        rows = self.rows
        B = std[np.ix_(rows, self.basis)]
        resid = rhs[rows] - std[rows] @ v
        try:
            xB = np.linalg.solve(B, resid)
            if not np.all(np.isfinite(xB)) or np.max(np.abs(xB - self.xB)) > 1e-5 * (1 + np.max(np.abs(self.xB), initial=0)):
                xB = self.xB
        except np.linalg.LinAlgError:
            xB = self.xB
        v[self.basis] = xB
        return v
