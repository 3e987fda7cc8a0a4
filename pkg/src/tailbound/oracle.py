"""Independent checks on solver output.

``grid_lp_bound`` optimizes over cell-constant monotone densities with an
external LP solver (HiGHS via scipy), so it shares no code path with the
column generation it audits.  Every such density is feasible for the OU
problem, hence the grid value is a lower bound on the true optimum.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from . import kernels
from .constraints import ConstraintSet
from .geometry import AxisRectangle, RareEventBoundary
from .solver import (DiscreteMixture, MixtureDensity, SolveReport, build_problem, constraint_slacks,
                     evaluate_column)

INF = math.inf
MC_BATCH = 1 << 18


@dataclass(frozen=True)
class GridSpec:
    """Cell layout per axis.

    With ``fine_extent`` set, three quarters of the cells are uniform on
    ``[0, fine_extent]`` and the rest grow geometrically out to ``box_extent``.
    """

    box_extent: float
    cells_per_axis: int
    fine_extent: float | None = None

    def __post_init__(self):
        if self.cells_per_axis < 4:
            raise ValueError("cells_per_axis must be >= 4")
        if not self.box_extent > 0:
            raise ValueError("box_extent must be positive")
        if self.fine_extent is not None and not 0 < self.fine_extent < self.box_extent:
            raise ValueError("fine_extent must lie strictly inside (0, box_extent)")

    def offsets(self) -> np.ndarray:
        n, E = self.cells_per_axis, self.box_extent
        if self.fine_extent is None:
            return np.linspace(0.0, E, n + 1)
        nf = max(2, (3 * n) // 4)
        fine = np.linspace(0.0, self.fine_extent, nf + 1)
        h = fine[1] - fine[0]
        m = n - nf
        # widths h r, h r^2, ..., h r^m summing to E - fine_extent
        from scipy.optimize import brentq
        gap = E - self.fine_extent
        if gap <= m * h:
            tail = np.linspace(self.fine_extent, E, m + 1)[1:]
        else:
            r = brentq(lambda r: h * r * (r ** m - 1) / (r - 1) - gap, 1 + 1e-12, 1e6)
            tail = self.fine_extent + np.cumsum(h * r ** np.arange(1, m + 1))
            tail[-1] = E
        return np.concatenate([fine, tail])


@dataclass
class GridBound:
    value: float
    status: str
    edge_mass: float = 0.0     # probability in the outermost cell row/column; large means the box binds

    @property
    def feasible(self) -> bool:
        return self.status == "optimal"


def _cell_areas(lo, hi, rect_lo, rect_hi):
    return np.clip(np.minimum(hi, rect_hi) - np.maximum(lo, rect_lo), 0.0, None)


def grid_lp_bound(constraints: ConstraintSet, boundary: RareEventBoundary, c: float,
                  grid: GridSpec, method: str = "highs-ipm") -> GridBound:
    """Best cell-constant OU density on ``[x0, x0+E] x [y0, y0+E]``."""
    x0, y0 = constraints.x0, constraints.y0
    n = grid.cells_per_axis
    off = grid.offsets()
    xe = x0 + off
    ye = y0 + off
    dx = np.diff(xe)
    dy = np.diff(ye)
    N = n * n
    idx = np.arange(N).reshape(n, n)   # idx[i, j]: column i (x), row j (y)
    bnd = boundary.anchored(x0)
    bx, sl, ic = bnd.arrays()
    # cell probabilities u_ij (relative to c); objective uses area(S cap cell) / area(cell)
    ex_hi = kernels.excess_integral(xe[:-1, None], xe[1:, None], ye[None, 1:], y0, bx, sl, ic)
    ex_lo = kernels.excess_integral(xe[:-1, None], xe[1:, None], ye[None, :-1], y0, bx, sl, ic)
    cell = np.outer(dx, dy)
    frac = np.clip((ex_hi - ex_lo) / cell, 0.0, 1.0)
    obj = -frac.ravel()
    # monotone densities: u_a / cell_a <= u_b / cell_b for each forward neighbour a of b
    inv = (1.0 / cell).ravel()
    rows, cols, vals = [], [], []
    r = 0
    for a, b in ((idx[1:, :], idx[:-1, :]), (idx[:, 1:], idx[:, :-1])):
        a = a.ravel()
        b = b.ravel()
        k = a.size
        rr = r + np.arange(k)
        rows += [rr, rr]
        cols += [a, b]
        vals += [inv[a] / inv[b], -np.ones(k)]
        r += k
    A_ub = [sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(r, N))]
    b_ub = [np.zeros(r)]
    # marginal densities at the mode: sum_j f_0j dy_j = (c / dx_0) sum_j u_0j
    if math.isfinite(constraints.uX):
        A_ub.append(sparse.csr_matrix((np.ones(n), (np.zeros(n), idx[0, :])), shape=(1, N)))
        b_ub.append(np.array([constraints.uX * dx[0] / c]))
    if math.isfinite(constraints.uY):
        A_ub.append(sparse.csr_matrix((np.ones(n), (np.zeros(n), idx[:, 0])), shape=(1, N)))
        b_ub.append(np.array([constraints.uY * dy[0] / c]))
    lo_rows, hi_rows = [], []
    for row in constraints.rows:
        rc = row.rect
        fx = _cell_areas(xe[:-1], xe[1:], rc.x1, rc.x2) / dx
        fy = _cell_areas(ye[:-1], ye[1:], rc.y1, rc.y2) / dy
        coef = np.outer(fx, fy).ravel()
        scale = 1.0 if row.conditional else 1.0 / c
        A_ub.append(sparse.csr_matrix(coef[None, :]))
        b_ub.append(np.array([min(row.b * scale, 1.0)]))
        A_ub.append(sparse.csr_matrix(-coef[None, :]))
        b_ub.append(np.array([-min(row.a * scale, 1.0)]))
    A = sparse.vstack(A_ub).tocsr()
    b = np.concatenate(b_ub)
    res = linprog(obj, A_ub=A, b_ub=b, A_eq=np.ones((1, N)), b_eq=[1.0], bounds=(0, None), method=method)
    if res.status != 0:
        return GridBound(-INF, "infeasible" if res.status == 2 else f"status{res.status}")
    u = res.x.reshape(n, n)
    edge = float(u[-1, :].sum() + u[:, -1].sum() - u[-1, -1])
    return GridBound(c * float(-res.fun), "optimal", edge)


# ---------------------------------------------------------------------------
# OU predicate
# ---------------------------------------------------------------------------

def check_ou_density(density, grid: GridSpec, x0: float | None = None, y0: float | None = None,
                     tol: float = 1e-12) -> bool:
    """True iff ``density`` is non-increasing along both axes on the grid nodes."""
    if x0 is None or y0 is None:
        atoms = density.mixture.atoms
        x0, y0 = atoms[0].x0, atoms[0].y0
    t = np.linspace(0.0, grid.box_extent, grid.cells_per_axis + 1)
    X, Y = np.meshgrid(x0 + t, y0 + t, indexing="ij")
    f = np.asarray(density(X, Y), float)
    slack = tol * max(1.0, float(np.max(np.abs(f))))
    return bool(np.all(np.diff(f, axis=0) <= slack) and np.all(np.diff(f, axis=1) <= slack))


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------

def _flatten(mixture: DiscreteMixture):
    edges, heights, offsets, cum_area = [], [], [0], []
    for a in mixture.atoms:
        e = a.edges
        h = a.heights
        edges.append(e)
        heights.append(h)
        cum_area.append(np.cumsum(a.z * (h - a.y0)))
        offsets.append(offsets[-1] + a.k)
    cum_p = np.cumsum(mixture.probs) / max(mixture.probs.sum(), 1e-300)
    return (np.concatenate(edges), np.concatenate(heights), np.array(offsets, dtype=np.int64), cum_p,
            np.concatenate(cum_area))


def sample_mixture(mixture: DiscreteMixture, n: int, rng: np.random.Generator):
    """Uniform points on the atoms: atom by probability, step by area, then uniform in the step."""
    edges, heights, offsets, cum_p, cum_area = _flatten(mixture)
    u = rng.random((n, 4))
    return kernels.map_uniforms(u, edges, heights, offsets, cum_p, cum_area, mixture.atoms[0].y0)


def _hits(region, x, y, y0):
    if isinstance(region, AxisRectangle):
        return (x >= region.x1) & (x <= region.x2) & (y >= region.y1) & (y <= region.y2)
    if isinstance(region, RareEventBoundary):
        return region.contains(x, y, y0)
    return np.asarray(region(x, y), bool)


def mc_probability(mixture, region, draws: int, seed: int = 0) -> tuple[float, float]:
    """Hit rate of ``region`` under the normalized mixture and its binomial standard error.

    ``mixture`` is a staircase mixture or any object with ``sample(n, rng)``
    returning an ``(n, d)`` array; for the latter ``region`` must be callable
    on that array.
    """
    if draws < 10_000:
        raise ValueError("draws must be >= 1e4")
    hits = 0
    done = 0
    b = 0
    while done < draws:
        n = min(MC_BATCH, draws - done)
        rng = np.random.default_rng([seed, b])
        if hasattr(mixture, "sample"):
            pts = mixture.sample(n, rng)
            hits += int(np.count_nonzero(region(pts)))
        else:
            x, y = sample_mixture(mixture, n, rng)
            hits += int(np.count_nonzero(_hits(region, x, y, mixture.atoms[0].y0)))
        done += n
        b += 1
    p = hits / draws
    return p, math.sqrt(p * (1 - p) / draws)


# ---------------------------------------------------------------------------
# report audit
# ---------------------------------------------------------------------------

@dataclass
class VerificationResult:
    feasible: bool
    residuals: dict
    objective_recomputed: float
    objective_error: float
    ou_check: bool
    mc_estimate: float | None = None
    mc_stderr: float | None = None
    mc_z: float | None = None
    slack_mismatch: float = 0.0
    messages: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        mc_ok = self.mc_z is None or self.mc_z <= 4.0
        return self.feasible and self.ou_check and mc_ok and not self.messages

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def _mc_check(value_ratio, est, draws):
    se0 = math.sqrt(max(value_ratio * (1 - value_ratio), 0.0) / draws)
    if se0 == 0.0:
        return 0.0 if abs(est - value_ratio) <= 1.0 / draws else INF
    return abs(est - value_ratio) / se0


def verify_report(report: SolveReport, constraints, boundary=None, mc_draws: int = 1_000_000,
                  seed: int = 0, tol: float = 1e-7, ou_cells: int = 64) -> VerificationResult:
    """Recompute every constraint and the objective in closed form, check OU, and cross-check by MC."""
    from .pou import PouProblem, verify_pou_report

    if isinstance(constraints, PouProblem):
        return verify_pou_report(report, constraints, mc_draws=mc_draws, seed=seed, tol=tol)
    msgs = []
    if not report.feasible:
        return VerificationResult(False, {}, float("nan"), float("nan"), False, messages=["report is infeasible"])
    c = report.best_c
    L = report.diagnostics.get("box_bound")
    problem = build_problem(constraints, boundary, c, box_bound=L)
    atoms = report.mixture.atoms
    probs = report.mixture.probs
    cols = [evaluate_column(problem, a) for a in atoms]
    res = constraint_slacks(problem, cols, probs)
    feasible = abs(res["normalization"]) <= tol and np.all(probs >= -tol)
    if not feasible:
        msgs.append(f"normalization residual {res['normalization']:.3g}")
    for key, v in res.items():
        if key == "normalization":
            continue
        worst = min(v["lower"], v["upper"]) if isinstance(v, dict) else v
        if worst < -tol:
            feasible = False
            msgs.append(f"{key} violated by {-worst:.3g}")
    if any(a.k > problem.k for a in atoms):
        msgs.append("an atom exceeds the step bound k")
    if len(atoms) > problem.n + 3:
        msgs.append(f"support size {len(atoms)} exceeds n + 3 = {problem.n + 3}")
    obj = float(sum(p * col.objective_coeff for p, col in zip(probs, cols)))
    err = abs(obj - report.value)
    if err > 1e-9:
        msgs.append(f"objective mismatch {err:.3g}")
    mismatch = _slack_mismatch(report.slacks, res)
    if mismatch > tol:
        msgs.append(f"reported slacks differ from recomputed ones by {mismatch:.3g}")
    dens = MixtureDensity(report.mixture, c)
    ext = max(max(float(a.z.sum()), float(a.w.sum())) for a in atoms)
    near = max(np.abs(problem.rects[np.isfinite(problem.rects)] - constraints.x0).max(initial=1.0), 1.0)
    ou = (check_ou_density(dens, GridSpec(ext, ou_cells), constraints.x0, constraints.y0)
          and check_ou_density(dens, GridSpec(2 * near, ou_cells), constraints.x0, constraints.y0))
    out = VerificationResult(bool(feasible), res, obj, err, ou, slack_mismatch=mismatch, messages=msgs)
    if mc_draws:
        est, se = mc_probability(report.mixture, problem.boundary, mc_draws, seed)
        out.mc_estimate = c * est
        out.mc_stderr = c * se
        out.mc_z = _mc_check(min(max(report.value / c, 0.0), 1.0), est, mc_draws)
    return out


def _slack_mismatch(reported: dict, recomputed: dict) -> float:
    worst = 0.0
    for key, v in recomputed.items():
        if key not in reported:
            continue
        r = reported[key]
        if isinstance(v, dict):
            for f in ("value", "lower", "upper"):
                if f in r:
                    worst = max(worst, abs(float(r[f]) - v[f]))
        else:
            worst = max(worst, abs(float(r) - v))
    return worst
