"""Moment-problem reduction and column generation for the bivariate OU bound.

For a fixed tail mass ``c`` the worst case is a mixture of uniform
distributions on staircase sets.  Each staircase contributes one column with
coefficients relative to its area; the master LP picks the mixture, pricing
proposes new staircases.  Internally the LP is kept in ratio units (divided
by ``c``) so that tolerances do not depend on how rare the tail is.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import kernels
from .constraints import ConstraintSet, encode_float
from .errors import DegenerateAtomError, GeometryDomainError
from .geometry import AxisRectangle, RareEventBoundary, StaircaseAtom, rects_array
from .pricing import Duals, PricingBudget, PricingContext, price_column
from .simplex import OPTIMAL, solve_lp

log = logging.getLogger("tailbound.solver")
INF = math.inf


# ---------------------------------------------------------------------------
# problem assembly
# ---------------------------------------------------------------------------

def corner_count(constraints: ConstraintSet) -> int:
    """Number of rectangle edges that sit on the mode or at infinity."""
    n = 0
    for row in constraints.rows:
        r = row.rect
        n += (r.x1 == constraints.x0) + math.isinf(r.x2) + (r.y1 == constraints.y0) + math.isinf(r.y2)
    return int(n)


def step_count(n: int, n_prime: int = 0) -> int:
    return 3 * (4 * n - n_prime + 1)


def default_box_bound(constraints: ConstraintSet) -> float:
    span = 0.0
    for row in constraints.rows:
        r = row.rect
        for v, o in ((r.x1, constraints.x0), (r.x2, constraints.x0), (r.y1, constraints.y0), (r.y2, constraints.y0)):
            if math.isfinite(v):
                span = max(span, v - o)
    return 1e3 * max(span, 10.0)


@dataclass
class MomentProblem:
    constraints: ConstraintSet
    boundary: RareEventBoundary
    c: float
    k: int
    n_prime: int
    rects: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    box_bound: float
    warnings: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.constraints.n

    @property
    def capX(self) -> float:
        return self.constraints.uX / self.c

    @property
    def capY(self) -> float:
        return self.constraints.uY / self.c


def build_problem(constraints: ConstraintSet, boundary: RareEventBoundary, c: float,
                  box_bound: float | None = None, c_tol: float = 1e-12) -> MomentProblem:
    """Fix the tail mass at ``c`` and rescale unconditional rows by it."""
    lF, uF = constraints.lF, constraints.uF
    if not (c > 0 and lF - c_tol * max(1.0, uF) <= c <= uF + c_tol * max(1.0, uF)):
        raise GeometryDomainError(f"c={c} outside [{lF}, {uF}] or not positive")
    lo, hi, warnings = [], [], []
    for i, row in enumerate(constraints.rows):
        a, b = (row.a, row.b) if row.conditional else (row.a / c, row.b / c)
        if a > 1.0:
            warnings.append(f"row {i}: lower bound {a:.6g} exceeds 1 after rescaling; clipped")
        lo.append(min(a, 1.0))
        hi.append(min(b, 1.0))
    n_prime = corner_count(constraints)
    return MomentProblem(
        constraints=constraints,
        boundary=boundary.anchored(constraints.x0),
        c=float(c),
        k=step_count(constraints.n, n_prime),
        n_prime=n_prime,
        rects=rects_array(r.rect for r in constraints.rows),
        lo=np.array(lo, float),
        hi=np.array(hi, float),
        box_bound=float(box_bound) if box_bound else default_box_bound(constraints),
        warnings=warnings,
    )


@dataclass(frozen=True)
class ColumnEvaluation:
    objective_coeff: float
    uX_coeff: float
    uY_coeff: float
    row_coeffs: np.ndarray
    area: float


def evaluate_column(problem: MomentProblem, atom: StaircaseAtom) -> ColumnEvaluation:
    bx, sl, ic = problem.boundary.arrays()
    area, RX, RY, s, ro = kernels.staircase_eval(atom.z, atom.w, atom.x0, atom.y0, problem.rects, bx, sl, ic)
    if not area > 1e-12:
        raise DegenerateAtomError(f"atom area {area} below 1e-12")
    return ColumnEvaluation(problem.c * min(s / area, 1.0), RY / area, RX / area,
                            np.minimum(ro / area, 1.0), area)


# ---------------------------------------------------------------------------
# master LP
# ---------------------------------------------------------------------------

@dataclass
class MasterResult:
    status: str
    value: float
    probs: np.ndarray
    duals: Duals
    infeasibility: float
    iterations: int


def _row_layout(problem: MomentProblem):
    caps = []
    if math.isfinite(problem.constraints.uX):
        caps.append(("uX", problem.capX))
    if math.isfinite(problem.constraints.uY):
        caps.append(("uY", problem.capY))
    return caps


def master_lp_solve(problem: MomentProblem, columns: Sequence[ColumnEvaluation]) -> MasterResult:
    """Best mixture over ``columns``; on infeasibility, phase-one duals and residual."""
    N = len(columns)
    if N == 0:
        raise ValueError("master needs at least one column")
    caps = _row_layout(problem)
    n = problem.n
    nc = len(caps)
    m = 1 + nc + n
    obj = np.array([col.objective_coeff for col in columns]) / problem.c
    A = np.zeros((m, N + nc + n))
    A[0, :N] = 1.0
    for i, (name, _) in enumerate(caps):
        A[1 + i, :N] = [col.uX_coeff if name == "uX" else col.uY_coeff for col in columns]
        A[1 + i, N + i] = 1.0
    if n:
        A[1 + nc:, :N] = np.array([col.row_coeffs for col in columns]).T
        A[1 + nc:, N + nc:] = -np.eye(n)
    b = np.concatenate(([1.0], [v for _, v in caps], np.zeros(n)))
    lb = np.concatenate((np.zeros(N + nc), problem.lo))
    ub = np.concatenate((np.full(N + nc, INF), problem.hi))
    cvec = np.concatenate((obj, np.zeros(nc + n)))
    res = solve_lp(cvec, A, b, lb, ub)
    y = res.duals
    cap_duals = {name: float(y[1 + i]) for i, (name, _) in enumerate(caps)}
    omega = 1.0 if res.ok else 0.0
    duals = Duals(float(y[0]), cap_duals.get("uX", 0.0), cap_duals.get("uY", 0.0),
                  np.array(y[1 + nc:], float), omega)
    probs = np.clip(res.x[:N], 0.0, None)
    value = problem.c * float(obj @ probs) if res.ok else -INF
    return MasterResult(res.status, value, probs, duals, res.infeasibility, res.iterations)


def constraint_slacks(problem: MomentProblem, columns, probs) -> dict:
    """Margins of every master constraint (nonnegative when satisfied), ratio units."""
    probs = np.asarray(probs, float)
    out = {"normalization": float(probs.sum() - 1.0)}
    if math.isfinite(problem.constraints.uX):
        out["uX"] = float(problem.capX - sum(p * c.uX_coeff for p, c in zip(probs, columns)))
    if math.isfinite(problem.constraints.uY):
        out["uY"] = float(problem.capY - sum(p * c.uY_coeff for p, c in zip(probs, columns)))
    for i in range(problem.n):
        v = float(sum(p * c.row_coeffs[i] for p, c in zip(probs, columns)))
        out[f"row{i}"] = {"value": v, "lower": v - float(problem.lo[i]), "upper": float(problem.hi[i]) - v}
    return out


def min_margin(slacks: dict) -> float:
    worst = -abs(slacks["normalization"])
    for key, v in slacks.items():
        if key == "normalization":
            continue
        if isinstance(v, dict):
            worst = min(worst, v["lower"], v["upper"])
        else:
            worst = min(worst, v)
    return worst


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass
class DiscreteMixture:
    atoms: list
    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, float)
        if len(self.atoms) != self.probs.size:
            raise ValueError("one probability per atom")

    def to_dict(self) -> dict:
        return {"atoms": [a.to_dict() for a in self.atoms], "probs": self.probs.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "DiscreteMixture":
        return cls([StaircaseAtom.from_dict(a) for a in d["atoms"]], np.array(d["probs"], float))


@dataclass
class SolveReport:
    value: float
    best_c: float
    mixture: DiscreteMixture
    slacks: dict
    diagnostics: dict
    status: str = OPTIMAL
    verification: dict | None = None

    @property
    def feasible(self) -> bool:
        return self.status == OPTIMAL

    def to_dict(self) -> dict:
        d = {
            "value": encode_float(self.value),
            "best_c": self.best_c,
            "status": self.status,
            "mixture": self.mixture.to_dict(),
            "slacks": self.slacks,
            "diagnostics": self.diagnostics,
        }
        if self.verification is not None:
            d["verification"] = self.verification
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SolveReport":
        v = d["value"]
        value = float(v) if not isinstance(v, str) else float(v.replace("inf", "Infinity"))
        diag = d.get("diagnostics", {})
        if diag.get("kind") == "1pou":
            from .pou import PouMixture
            mixture = PouMixture.from_dict(d["mixture"])
        else:
            mixture = DiscreteMixture.from_dict(d["mixture"])
        return cls(value, float(d["best_c"]), mixture, d.get("slacks", {}), diag, d.get("status", OPTIMAL),
                   d.get("verification"))


# ---------------------------------------------------------------------------
# column generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SolverOptions:
    tol_rc: float = 1e-7          # reduced-cost tolerance in units of c
    max_iters: int = 400
    columns_per_iter: int = 4
    prune: bool = True
    budget: PricingBudget = PricingBudget()


def seed_atoms(problem: MomentProblem) -> list:
    """Rectangles anchored at the mode spanning every critical corner and a geometric ladder."""
    cs = problem.constraints
    x0, y0, L = cs.x0, cs.y0, problem.box_bound
    xs = {v for v in problem.rects[:, :2].ravel() if math.isfinite(v) and v > x0}
    ys = {v for v in problem.rects[:, 2:].ravel() if math.isfinite(v) and v > y0}
    xs |= {v for v in problem.boundary.bx if x0 < v < x0 + L}
    g = problem.boundary.g(np.array(sorted(xs | {x0})), y0)
    ys |= {float(v) for v in np.atleast_1d(g) if math.isfinite(v) and y0 < v < y0 + L}
    span = max([v - x0 for v in xs] + [v - y0 for v in ys] + [1.0])
    ladder = span * np.geomspace(1e-2, L / span, 9)
    xs |= set((x0 + ladder).tolist())
    ys |= set((y0 + ladder).tolist())
    atoms = []
    for xe in sorted(xs):
        for ye in sorted(ys):
            if xe - x0 <= L and ye - y0 <= L:
                atoms.append(StaircaseAtom(x0, y0, [xe - x0], [ye - y0]))
    return atoms


def _support_report(problem, atoms, columns, probs, diag, status=OPTIMAL):
    value = problem.c * float(sum(p * col.objective_coeff / problem.c for p, col in zip(probs, columns)))
    return SolveReport(value=value, best_c=problem.c, mixture=DiscreteMixture(list(atoms), probs),
                       slacks=constraint_slacks(problem, columns, probs), diagnostics=diag, status=status)


def solve_fixed_c(problem: MomentProblem, opts: SolverOptions = SolverOptions()) -> SolveReport:
    """Column generation at fixed ``c``; returns a report whose mixture has at most n + 3 atoms."""
    budget = opts.budget
    ctx = PricingContext(problem, budget.grid_cells)
    atoms, columns, keys = [], [], set()

    def add(atom):
        key = atom.key()
        if key in keys:
            return False
        try:
            col = evaluate_column(problem, atom)
        except DegenerateAtomError:
            return False
        keys.add(key)
        atoms.append(atom)
        columns.append(col)
        return True

    for a in seed_atoms(problem):
        add(a)
    seeded = len(atoms)
    history, restarts, it = [], 0, 0
    last_rc = INF
    mr = None
    status = OPTIMAL
    for it in range(opts.max_iters):
        mr = master_lp_solve(problem, columns)
        phase1 = mr.status != OPTIMAL
        if not phase1:
            history.append(mr.value)
        tol = opts.tol_rc if not phase1 else 1e-10
        pr = price_column(problem, mr.duals, budget, iteration=it, tol=tol, context=ctx)
        restarts += pr.restarts_run
        last_rc = pr.reduced_cost
        log.debug("iter %d phase %d value=%.6g rc=%.3g pool=%d", it, 1 if phase1 else 2,
                  mr.value, last_rc, len(atoms))
        if last_rc <= tol:
            if phase1:
                status = "infeasible"
            break
        added = 0
        for rc, atom in pr.candidates:
            if rc <= tol or added >= opts.columns_per_iter:
                continue
            added += add(atom)
        if added == 0:
            break
    else:
        mr = master_lp_solve(problem, columns)

    diag = {
        "iterations": it + 1,
        "columns_generated": len(atoms) - seeded,
        "pool_size": len(atoms),
        "pricing_restarts": restarts,
        "final_reduced_cost": last_rc,
        "k": problem.k,
        "n": problem.n,
        "n_prime": problem.n_prime,
        "box_bound": problem.box_bound,
        "c": problem.c,
        "value_history": history,
        "warnings": list(problem.warnings),
    }
    if mr.status != OPTIMAL:
        diag["phase1_residual"] = mr.infeasibility
        support = np.nonzero(mr.probs > 0)[0]
        return SolveReport(value=-INF, best_c=problem.c,
                           mixture=DiscreteMixture([atoms[i] for i in support], mr.probs[support]),
                           slacks={}, diagnostics=diag, status="infeasible")
    probs = mr.probs
    if opts.prune:
        support = np.nonzero(probs > 1e-14)[0]
        sub_cols = [columns[i] for i in support]
        sub = master_lp_solve(problem, sub_cols)
        if sub.status == OPTIMAL and sub.value >= mr.value - 1e-9 * max(problem.c, abs(mr.value)):
            keep = np.nonzero(sub.probs > 0)[0]
            diag["pruned_from"] = int(support.size)
            return _support_report(problem, [atoms[support[i]] for i in keep],
                                   [sub_cols[i] for i in keep], sub.probs[keep], diag)
    keep = np.nonzero(probs > 0)[0]
    return _support_report(problem, [atoms[i] for i in keep], [columns[i] for i in keep], probs[keep], diag)


def c_values(constraints: ConstraintSet, c_grid) -> list:
    lF, uF = constraints.lF, constraints.uF
    if isinstance(c_grid, (int, np.integer)):
        if lF == uF or c_grid <= 1:
            vals = [uF] if c_grid <= 1 and lF != uF else [lF]
        else:
            vals = np.linspace(lF, uF, int(c_grid)).tolist()
    else:
        vals = [float(v) for v in c_grid]
    vals = sorted({v for v in vals if v > 0})
    if not vals:
        raise GeometryDomainError("the c grid has no positive value")
    return vals


def solve(constraints: ConstraintSet, boundary: RareEventBoundary, c_grid=3,
          opts: SolverOptions = SolverOptions(), box_bound: float | None = None) -> SolveReport:
    """Sweep ``c`` over the grid (count of equispaced points or explicit values) and keep the max."""
    best = None
    per_c = []
    for c in c_values(constraints, c_grid):
        rep = solve_fixed_c(build_problem(constraints, boundary, c, box_bound), opts)
        per_c.append({"c": c, "value": encode_float(rep.value), "status": rep.status,
                      "phase1_residual": rep.diagnostics.get("phase1_residual", 0.0)})
        if rep.feasible and (best is None or rep.value > best.value):
            best = rep
    if best is None:
        rep.diagnostics["per_c"] = per_c
        return rep
    best.diagnostics["per_c"] = per_c
    return best


# ---------------------------------------------------------------------------
# recovered density
# ---------------------------------------------------------------------------

class MixtureDensity:
    """``f(x, y) = c * sum_l p_l 1{(x, y) in R_l} / area(R_l)``."""

    def __init__(self, mixture: DiscreteMixture, c: float):
        self.mixture = mixture
        self.c = float(c)
        self.areas = np.array([float(np.dot(a.z, a.heights - a.y0)) for a in mixture.atoms])

    def __call__(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        out = np.zeros(np.broadcast(x, y).shape)
        for atom, p, area in zip(self.mixture.atoms, self.mixture.probs, self.areas):
            e = atom.edges
            h = atom.heights
            i = np.clip(np.searchsorted(e, x, side="left") - 1, 0, atom.k - 1)
            inside = (x >= e[0]) & (x <= e[-1]) & (y >= atom.y0) & (y <= h[i])
            out = out + np.where(inside, p / area, 0.0)
        return self.c * out

    def rect_integral(self, rect: AxisRectangle) -> float:
        from .geometry import rect_overlap_area
        return self.c * float(sum(p * rect_overlap_area(a, rect) / ar for a, p, ar
                                  in zip(self.mixture.atoms, self.mixture.probs, self.areas)))

    def total(self) -> float:
        return self.c * float(self.mixture.probs.sum())


def recover_density(report: SolveReport) -> MixtureDensity:
    if not report.feasible:
        raise GeometryDomainError("cannot recover a density from an infeasible report")
    return MixtureDensity(report.mixture, report.best_c)


# ---------------------------------------------------------------------------
# direct nonlinear formulation on a fixed support (cross-check only)
# ---------------------------------------------------------------------------

def nonlinear_crosscheck(problem: MomentProblem, mixture: DiscreteMixture, maxiter: int = 200) -> dict:
    """Optimize probabilities and staircase shapes jointly on the given support size.

    Uses SLSQP on the direct formulation starting from ``mixture``.  Returns the
    value it reaches and whether the start was already locally optimal up to
    ``1e-6`` relative.
    """
    from scipy.optimize import minimize

    atoms = mixture.atoms
    sizes = [a.k for a in atoms]
    L = problem.box_bound
    caps = _row_layout(problem)

    def unpack(v):
        m = len(atoms)
        p = v[:m]
        out, o = [], m
        for k in sizes:
            z = np.exp(v[o:o + k])
            w = np.concatenate(([math.exp(v[o + k])], np.maximum(v[o + k + 1:o + 2 * k], 0.0)))
            out.append((z, w))
            o += 2 * k
        return p, out

    def columns(v):
        p, zw = unpack(v)
        cols = []
        for z, w in zw:
            try:
                cols.append(evaluate_column(problem, StaircaseAtom.clamped(problem.constraints.x0,
                                                                          problem.constraints.y0, z, w)))
            except DegenerateAtomError:
                return p, None
        return p, cols

    def neg_obj(v):
        p, cols = columns(v)
        if cols is None:
            return 1.0
        return -sum(pi * c.objective_coeff for pi, c in zip(p, cols)) / problem.c

    def ineq(v):
        p, cols = columns(v)
        if cols is None:
            return -np.ones(len(caps) + 2 * problem.n)
        out = []
        for name, cap in caps:
            out.append(cap - sum(pi * (c.uX_coeff if name == "uX" else c.uY_coeff) for pi, c in zip(p, cols)))
        for i in range(problem.n):
            val = sum(pi * c.row_coeffs[i] for pi, c in zip(p, cols))
            out += [val - problem.lo[i], problem.hi[i] - val]
        return np.array(out)

    v0 = np.concatenate([mixture.probs] + [kernels.encode_params(a.z, a.w) for a in atoms])
    bounds = [(0.0, 1.0)] * len(atoms)
    for k in sizes:
        bounds += [(math.log(1e-9), math.log(L))] * (k + 1) + [(0.0, L)] * (k - 1)
    cons = [{"type": "eq", "fun": lambda v: np.sum(v[:len(atoms)]) - 1.0}]
    if caps or problem.n:
        cons.append({"type": "ineq", "fun": ineq})
    start = -neg_obj(v0) * problem.c
    res = minimize(neg_obj, v0, method="SLSQP", bounds=bounds, constraints=cons,
                   options={"maxiter": maxiter, "ftol": 1e-12})
    feasible = bool(np.all(ineq(res.x) >= -1e-7)) and abs(np.sum(res.x[:len(atoms)]) - 1) < 1e-7
    value = -res.fun * problem.c if feasible else start
    return {"start_value": start, "value": max(value, start), "feasible_move": feasible,
            "improvement": max(0.0, value - start)}
