"""Column pricing for the staircase moment problem.

The reduced cost of a staircase ``R`` is a ratio ``N(R) / area(R)`` minus the
normalization dual, where ``N`` is linear in the set.  Two searches feed the
column pool:

* a grid search that is exact over staircases whose corners sit on a fixed
  grid: Dinkelbach iterations on the ratio, each solved by a column dynamic
  program, then reduced to at most ``k`` steps and polished;
* multistart Nelder-Mead from random log-space starts, each restart drawing
  from its own ``(seed, iteration, restart)`` substream.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DegenerateAtomError
from .geometry import ATOM_EPS, StaircaseAtom, StepFunction, dominating_staircase

INF = math.inf


@dataclass(frozen=True)
class PricingBudget:
    restarts: int = 64
    max_evals: int = 4000
    use_grid: bool = True
    grid_cells: int = 96
    dinkelbach_iters: int = 40
    polish_evals: int = 4000
    three_step_cells: int = 64
    lazy_restarts: bool = True
    threads: int | None = None
    seed: int = 0
    init: StaircaseAtom | None = None


@dataclass(frozen=True)
class Duals:
    """Master duals; ``omega`` is 1 for optimality pricing and 0 for phase one."""

    norm: float
    capX: float
    capY: float
    rows: np.ndarray
    omega: float = 1.0


@dataclass
class PricingResult:
    atom: StaircaseAtom
    reduced_cost: float
    candidates: list = field(default_factory=list)
    restarts_run: int = 0
    grid_ratio: float = -INF


def thread_cap() -> int:
    env = os.environ.get("TAILBOUND_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            pass
    return cap


class PricingContext:
    """Problem data laid out for the kernels, plus the pricing grid."""

    def __init__(self, problem, grid_cells: int = 96):
        self.problem = problem
        self.x0 = problem.constraints.x0
        self.y0 = problem.constraints.y0
        self.rects = problem.rects
        self.rect_list = [r.rect for r in problem.constraints.rows]
        self.bx, self.slope, self.icpt = problem.boundary.arrays()
        self.k = problem.k
        self.L = problem.box_bound
        self.Xg, self.Yg = pricing_grid(problem, grid_cells)

    def ratio(self, duals: Duals, atom: StaircaseAtom) -> float:
        area, RX, RY, s, ro = kernels.staircase_eval(atom.z, atom.w, atom.x0, atom.y0, self.rects,
                                                     self.bx, self.slope, self.icpt)
        num = duals.omega * s - duals.capX * RY - duals.capY * RX - float(duals.rows @ ro)
        return num / area


def _crossings(problem, levels):
    out = []
    for b, a, c in problem.boundary.pieces:
        if math.isinf(c) or a == 0.0:
            continue
        for y in levels:
            out.append((y - c) / a)
    return out


def pricing_grid(problem, cells: int = 96):
    """Grid abscissae/ordinates: every critical coordinate, a uniform core and a geometric tail."""
    cs = problem.constraints
    x0, y0, L = cs.x0, cs.y0, problem.box_bound
    rects = problem.rects
    ylev = [y0] + [v for v in rects[:, 2:].ravel() if math.isfinite(v)]
    xc = [v for v in rects[:, :2].ravel() if math.isfinite(v)]
    xc += [b for b in problem.boundary.bx]
    xc += _crossings(problem, ylev)
    xc = [v for v in xc if x0 < v < x0 + L]
    yc = list(ylev)
    g = problem.boundary.g(np.array([x0] + xc), y0)
    yc += [v for v in np.atleast_1d(g) if math.isfinite(v)]
    yc = [v for v in yc if y0 < v < y0 + L]
    span_x = max([v - x0 for v in xc] + [1.0])
    span_y = max([v - y0 for v in yc] + [1.0])
    span_x = min(span_x, L / 2)
    span_y = min(span_y, L / 2)

    def axis(o, crit, span):
        core = o + np.linspace(0.0, 2.0 * span, cells + 1)
        near = o + span * np.geomspace(1e-4, 1.0 / cells, 12)
        tail = o + np.geomspace(2.0 * span, L, max(8, cells // 4))
        pts = np.concatenate(([o, o + L], crit, core, near, tail))
        pts = np.unique(pts[(pts >= o) & (pts <= o + L)])
        return pts

    return axis(x0, np.array(xc), span_x), axis(y0, np.array(yc), span_y)


def _grid_atom(ctx: PricingContext, heights: np.ndarray) -> StaircaseAtom:
    cols = int(np.sum(heights >= 0))
    vals = ctx.Yg[heights[:cols] + 1]
    f = StepFunction(ctx.Xg[: cols + 1], vals).merged()
    return f.to_atom(ctx.y0)


def grid_price(ctx: PricingContext, duals: Duals, budget: PricingBudget):
    """Best grid staircase by Dinkelbach's method; returns ``(atom, ratio)`` or ``(None, -inf)``."""
    theta = duals.norm
    best, best_ratio = None, -INF
    for _ in range(budget.dinkelbach_iters):
        F = kernels.dp_fill(ctx.Xg, ctx.Yg, ctx.y0, ctx.bx, ctx.slope, ctx.icpt, ctx.rects,
                            duals.rows, duals.omega, theta, duals.capY)
        val, heights = kernels.dp_solve(F, ctx.Yg, ctx.y0, duals.capX)
        atom = _grid_atom(ctx, heights)
        r = ctx.ratio(duals, atom)
        if r > best_ratio:
            best, best_ratio = atom, r
        if val <= 0.0 or r <= theta + 1e-14 * max(1.0, abs(theta)):
            break
        theta = r
    return best, best_ratio


def _reduce_steps(ctx: PricingContext, atom: StaircaseAtom, cells: int) -> StaircaseAtom:
    if atom.k <= ctx.k:
        return atom
    return dominating_staircase(atom, ctx.rect_list, ctx.problem.boundary, cells=cells)


def polish(ctx: PricingContext, duals: Duals, atom: StaircaseAtom, max_evals: int):
    """Nelder-Mead in (log z, log w1, w2..) from ``atom``; returns the better of start and result."""
    start_ratio = ctx.ratio(duals, atom)
    if max_evals <= 0:
        return atom, start_ratio
    k = atom.k
    t0 = kernels.encode_params(atom.z, atom.w)
    step = np.concatenate((np.full(k + 1, 0.3), np.maximum(0.3 * atom.w[1:], 0.05 * atom.w.sum() / k)))
    t, val, _ = kernels.polish_staircase(t0, step, k, ctx.x0, ctx.y0, ctx.rects, duals.rows,
                                         duals.capX, duals.capY, duals.omega, ctx.bx, ctx.slope,
                                         ctx.icpt, ATOM_EPS, ctx.L, ctx.L, max_evals)
    z, w = kernels.decode_params(t, k, ATOM_EPS, ctx.L, ctx.L)
    try:
        new = StaircaseAtom.clamped(ctx.x0, ctx.y0, z, w).simplified()
    except DegenerateAtomError:
        return atom, start_ratio
    r = ctx.ratio(duals, new)
    if r > start_ratio:
        return new, r
    return atom, start_ratio


def random_start(ctx: PricingContext, rng: np.random.Generator) -> StaircaseAtom:
    k = ctx.k
    lo = math.log(1e-3)
    hi = math.log(ctx.L)
    RX = math.exp(rng.uniform(lo, hi))
    RY = math.exp(rng.uniform(lo, hi))
    z = RX * rng.dirichlet(np.ones(k))
    w = RY * rng.dirichlet(np.ones(k))
    return StaircaseAtom.clamped(ctx.x0, ctx.y0, z, w)


def _restart(ctx, duals, budget, iteration, r):
    rng = np.random.default_rng([budget.seed, iteration, r])
    init = budget.init if (r == 0 and budget.init is not None) else random_start(ctx, rng)
    atom, ratio = polish(ctx, duals, init, budget.max_evals)
    return ratio, atom


def price_column(problem, duals: Duals, budget: PricingBudget = PricingBudget(), iteration: int = 0,
                 tol: float = 0.0, context: PricingContext | None = None) -> PricingResult:
    """Search for the staircase with the largest reduced cost.

    With ``lazy_restarts`` the random restarts run only when the grid search
    fails to find a reduced cost above ``tol``.
    """
    ctx = context or PricingContext(problem, budget.grid_cells)
    cands = []
    grid_ratio = -INF
    if budget.use_grid:
        atom, r = grid_price(ctx, duals, budget)
        grid_ratio = r
        if atom is not None:
            cands.append((r, atom))
            reduced = _reduce_steps(ctx, atom, budget.three_step_cells)
            reduced, r2 = polish(ctx, duals, reduced, budget.polish_evals)
            cands.append((r2, reduced))
    cands = [c for c in cands if c[1].k <= ctx.k]
    run_restarts = budget.restarts > 0 and (
        not budget.lazy_restarts or not cands or max(c[0] for c in cands) - duals.norm <= tol)
    n_run = 0
    if run_restarts:
        n_run = budget.restarts
        threads = min(budget.threads or thread_cap(), n_run)
        if threads > 1:
            with ThreadPoolExecutor(threads) as ex:
                res = list(ex.map(lambda r: _restart(ctx, duals, budget, iteration, r), range(n_run)))
        else:
            res = [_restart(ctx, duals, budget, iteration, r) for r in range(n_run)]
        cands.extend(res)
    if not cands:
        raise RuntimeError("pricing produced no candidate; enable the grid search or restarts")
    # deterministic winner: reduced cost, then lexicographic atom
    cands.sort(key=lambda c: (-c[0], c[1].key()))
    best_ratio, best = cands[0]
    out = [(r - duals.norm, a) for r, a in cands]
    return PricingResult(best, best_ratio - duals.norm, out, n_run, grid_ratio)
