"""Bounded-variable primal simplex (revised form, dense basis, two phases).

Solves ``max c.x  s.t.  A x = b,  lb <= x <= ub`` with finite ``lb``.
Entering variables are chosen by Dantzig's rule until a run of degenerate
pivots exceeds ``bland_after``; then Bland's smallest-index rule takes over
for good, which rules out cycling.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"


@dataclass
class LPResult:
    status: str
    x: np.ndarray
    objective: float
    duals: np.ndarray
    basis: np.ndarray
    iterations: int
    infeasibility: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


class _Tableau:
    def __init__(self, A, b, lb, ub, c, tol, bland_after):
        self.A = A
        self.b = b
        self.lb = lb
        self.ub = ub
        self.c = c
        self.tol = tol
        self.bland_after = bland_after
        self.degenerate_run = 0
        self.bland = False
        self.iterations = 0

    def setup(self, basis, at_upper):
        self.basis = np.array(basis, dtype=np.int64)
        self.at_upper = np.array(at_upper, dtype=bool)
        self._refresh()

    def _refresh(self):
        n = self.A.shape[1]
        nonbasic = np.ones(n, dtype=bool)
        nonbasic[self.basis] = False
        self.nonbasic = nonbasic
        xN = np.where(self.at_upper, self.ub, self.lb)
        xN = np.where(nonbasic, xN, 0.0)
        self.B = self.A[:, self.basis]
        rhs = self.b - self.A @ xN
        xB = np.linalg.solve(self.B, rhs)
        self.x = xN
        self.x[self.basis] = xB

    def duals(self):
        return np.linalg.solve(self.B.T, self.c[self.basis])

    def run(self, max_iter):
        tol = self.tol
        n = self.A.shape[1]
        idx = np.arange(n)
        while self.iterations < max_iter:
            y = self.duals()
            d = self.c - y @ self.A
            movable = self.nonbasic & (self.ub > self.lb)
            up = movable & ~self.at_upper & (d > tol)
            down = movable & self.at_upper & (d < -tol)
            cand = up | down
            if not cand.any():
                return OPTIMAL
            if self.bland:
                j = int(idx[cand][0])
            else:
                j = int(idx[cand][np.argmax(np.abs(d[cand]))])
            direction = 1.0 if up[j] else -1.0
            alpha = np.linalg.solve(self.B, self.A[:, j])
            # x_B moves by -direction * t * alpha
            delta = -direction * alpha
            xB = self.x[self.basis]
            lbB = self.lb[self.basis]
            ubB = self.ub[self.basis]
            with np.errstate(divide="ignore", invalid="ignore"):
                lim = np.where(delta < -tol, (xB - lbB) / -delta,
                               np.where(delta > tol, (ubB - xB) / delta, np.inf))
            lim = np.maximum(lim, 0.0)
            t_flip = self.ub[j] - self.lb[j]
            t_best = lim.min() if lim.size else np.inf
            if t_flip <= t_best:
                if not np.isfinite(t_flip):
                    return UNBOUNDED
                self.at_upper[j] = not self.at_upper[j]
                t = t_flip
                self._refresh()
            else:
                if not np.isfinite(t_best):
                    return UNBOUNDED
                ties = np.nonzero(lim <= t_best + tol * max(1.0, t_best))[0]
                if self.bland:
                    r = int(ties[np.argmin(self.basis[ties])])
                else:
                    r = int(ties[np.argmax(np.abs(delta[ties]))])
                t = t_best
                leaving = self.basis[r]
                self.at_upper[leaving] = delta[r] > 0
                self.at_upper[j] = False
                self.basis[r] = j
                self._refresh()
            self.iterations += 1
            if t <= tol:
                self.degenerate_run += 1
                if self.degenerate_run > self.bland_after:
                    self.bland = True
            else:
                self.degenerate_run = 0
        return ITERATION_LIMIT


def solve_lp(c, A, b, lb, ub, *, tol: float = 1e-10, feas_tol: float = 1e-9,
             max_iter: int = 50_000, bland_after: int = 1000) -> LPResult:
    """Maximize ``c @ x`` over ``{A x = b, lb <= x <= ub}``.

    On infeasibility the result carries the phase-one residual and the
    phase-one duals (of ``max -sum(artificials)``), which price columns that
    would reduce the residual.
    """
    A = np.asarray(A, float)
    b = np.asarray(b, float)
    c = np.asarray(c, float)
    lb = np.asarray(lb, float)
    ub = np.asarray(ub, float)
    m, n = A.shape
    if np.any(~np.isfinite(lb)):
        raise ValueError("lower bounds must be finite")
    # phase one: artificials absorb the residual of x = lb
    resid = b - A @ lb
    sign = np.where(resid >= 0, 1.0, -1.0)
    A1 = np.hstack([A, np.diag(sign)])
    lb1 = np.concatenate([lb, np.zeros(m)])
    ub1 = np.concatenate([ub, np.full(m, np.inf)])
    c1 = np.concatenate([np.zeros(n), -np.ones(m)])
    tab = _Tableau(A1, b, lb1, ub1, c1, tol, bland_after)
    tab.setup(np.arange(n, n + m), np.zeros(n + m, dtype=bool))
    status = tab.run(max_iter)
    infeas = float(np.sum(tab.x[n:]))
    if status != OPTIMAL or infeas > feas_tol * max(1.0, np.abs(b).max(initial=0.0)):
        return LPResult(INFEASIBLE if status == OPTIMAL else status, tab.x[:n].copy(), -np.inf,
                        tab.duals(), tab.basis.copy(), tab.iterations, infeas)
    # phase two: artificials pinned at zero, real objective
    tab.ub = np.concatenate([ub, np.zeros(m)])
    tab.c = np.concatenate([c, np.zeros(m)])
    tab.at_upper[n:] = False
    tab._refresh()
    tab.degenerate_run = 0
    status = tab.run(max_iter)
    x = tab.x[:n].copy()
    return LPResult(status, x, float(c @ x), tab.duals(), tab.basis.copy(), tab.iterations,
                    float(np.sum(np.abs(tab.x[n:]))))
