"""Worst-case bounds when only the first coordinate is in its tail (1-POU).

Extreme distributions are segments ``(x10 + U (z1 - x10), z2, ..., zd)``
with ``U`` uniform, so the problem becomes a moment problem over points
``z`` with ``z1 > x10``.  For a fixed tail ``z'`` every coefficient is a
piecewise linear function of ``z1`` divided by ``z1 - x10``; on each piece
such a ratio is monotone, so pricing over ``z1`` only needs the kinks.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .constraints import decode_float, encode_float
from .errors import DegenerateAtomError, GeometryDomainError
from .pricing import Duals
from .simplex import OPTIMAL
from .solver import ColumnEvaluation, SolveReport, SolverOptions, constraint_slacks, master_lp_solve

INF = math.inf


# ---------------------------------------------------------------------------
# band functions g1 <= x1 <= g2 of the trailing coordinates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstantBand:
    value: float

    def __call__(self, tail: np.ndarray) -> np.ndarray:
        tail = np.asarray(tail, float)
        return np.full(tail.shape[:-1] if tail.ndim > 1 else tail.shape[:1], self.value, dtype=float)

    def kinks(self) -> list:
        return []

    def to_spec(self):
        return encode_float(self.value)


@dataclass(frozen=True)
class PiecewiseBand:
    """Piecewise affine in the second coordinate: ``(x_b, slope, intercept)`` pieces."""

    pieces: tuple

    def __call__(self, tail: np.ndarray) -> np.ndarray:
        t = np.asarray(tail, float)
        x = t[..., 0] if t.ndim > 1 else t
        bx = np.array([p[0] for p in self.pieces])
        p = np.clip(np.searchsorted(bx, x, side="right") - 1, 0, len(bx) - 1)
        sl = np.array([q[1] for q in self.pieces])[p]
        ic = np.array([q[2] for q in self.pieces])[p]
        with np.errstate(invalid="ignore"):
            return np.where(np.isinf(ic), ic, sl * x + ic)

    def kinks(self) -> list:
        return [p[0] for p in self.pieces]

    def to_spec(self):
        return [{"x_b": b, "slope": a, "intercept": encode_float(c)} for b, a, c in self.pieces]


def band_from_spec(spec, x10: float):
    if isinstance(spec, str):
        s = spec.strip().lower()
        if s == "x10":
            return ConstantBand(x10)
        return ConstantBand(decode_float(s))
    if isinstance(spec, (int, float)):
        return ConstantBand(float(spec))
    return PiecewiseBand(tuple((decode_float(p["x_b"]), decode_float(p["slope"]), decode_float(p["intercept"]))
                               for p in spec))


# ---------------------------------------------------------------------------
# problem
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PouRow:
    box: tuple      # ((lo, hi), ...) for every coordinate
    a: float
    b: float
    conditional: bool = True

    def __post_init__(self):
        if not 0.0 <= self.a <= self.b <= 1.0:
            raise ValueError("row bounds must satisfy 0 <= a <= b <= 1")
        object.__setattr__(self, "box", tuple((float(lo), float(hi)) for lo, hi in self.box))

    def relaxed(self, rel: float) -> "PouRow":
        return PouRow(self.box, max(0.0, self.a * (1 - rel)), min(1.0, self.b * (1 + rel)), self.conditional)


@dataclass
class PouProblem:
    x10: float
    lower_thresholds: tuple
    lF: float
    uF: float
    uX1: float
    rows: tuple
    g1: object
    g2: object
    box_bound: float = 100.0

    def __post_init__(self):
        if not math.isfinite(self.x10):
            raise GeometryDomainError("x10 must be finite")
        if not 0 < self.lF <= self.uF:
            raise GeometryDomainError("need 0 < lF <= uF")
        self.lower_thresholds = tuple(float(v) for v in self.lower_thresholds)
        self.rows = tuple(self.rows)
        for r in self.rows:
            if len(r.box) != self.d:
                raise GeometryDomainError("row boxes must have one interval per coordinate")
            if r.box[0][0] < self.x10:
                raise GeometryDomainError("row boxes must start at or above x10 in the first coordinate")
        probe = self._probe_points()
        if np.any(self.g1(probe) > self.g2(probe)) or np.any(self.g1(probe) < self.x10):
            raise GeometryDomainError("need x10 <= g1 <= g2 on the probe points")

    @property
    def d(self) -> int:
        return 1 + len(self.lower_thresholds)

    @property
    def n(self) -> int:
        return len(self.rows)

    @property
    def eps(self) -> float:
        return 1e-9 * max(1.0, self.box_bound)

    def _probe_points(self):
        cands = [tail_candidates(self, i, 5) for i in range(self.d - 1)]
        if not cands:
            return np.zeros((1, 0))
        return np.array(list(itertools.product(*cands))[:400], float).reshape(-1, self.d - 1)

    def moment_view(self, c: float) -> "_View":
        lo, hi = [], []
        for r in self.rows:
            a, b = (r.a, r.b) if r.conditional else (r.a / c, r.b / c)
            lo.append(min(a, 1.0))
            hi.append(min(b, 1.0))
        return _View(self, float(c), np.array(lo), np.array(hi))

    def to_dict(self) -> dict:
        return {
            "x10": self.x10,
            "lower_thresholds": [encode_float(v) for v in self.lower_thresholds],
            "lF": self.lF, "uF": self.uF,
            "uX1": encode_float(self.uX1),
            "rows": [{"box": [[encode_float(lo), encode_float(hi)] for lo, hi in r.box],
                      "a": r.a, "b": r.b, "conditional": r.conditional} for r in self.rows],
            "band": {"g1": self.g1.to_spec(), "g2": self.g2.to_spec()},
            "box_bound": self.box_bound,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PouProblem":
        x10 = float(d["x10"])
        if "c" in d:
            lF = uF = float(d["c"])
        else:
            lF, uF = float(d["lF"]), float(d["uF"])
        rows = tuple(PouRow(tuple((decode_float(lo), decode_float(hi)) for lo, hi in r["box"]),
                            float(r["a"]), float(r["b"]), bool(r.get("conditional", True)))
                     for r in d.get("rows", []))
        band = d.get("band", {})
        return cls(x10, tuple(decode_float(v) for v in d.get("lower_thresholds", [-INF])), lF, uF,
                   decode_float(d.get("uX1", "inf")), rows,
                   band_from_spec(band.get("g1", "x10"), x10), band_from_spec(band.get("g2", "inf"), x10),
                   float(d.get("box_bound", 100.0)))

    @classmethod
    def from_json(cls, text: str) -> "PouProblem":
        return cls.from_dict(json.loads(text))


@dataclass
class _View:
    """Just enough of a moment problem for the shared master LP."""

    pou: PouProblem
    c: float
    lo: np.ndarray
    hi: np.ndarray

    @property
    def n(self):
        return self.pou.n

    @property
    def constraints(self):
        return self

    @property
    def uX(self):
        return self.pou.uX1

    @property
    def uY(self):
        return INF

    @property
    def capX(self):
        return self.pou.uX1 / self.c

    @property
    def capY(self):
        return INF


# ---------------------------------------------------------------------------
# atoms and columns
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PouAtom:
    z: tuple

    def __post_init__(self):
        object.__setattr__(self, "z", tuple(float(v) for v in self.z))

    def key(self):
        return self.z


def _coeffs(problem: PouProblem, z1: np.ndarray, tail: np.ndarray):
    """Vectorized coefficients for points ``(z1[i], tail[i])``: objective ratio, density, rows."""
    span = z1 - problem.x10
    g1 = problem.g1(tail)
    g2 = problem.g2(tail)
    obj = (np.minimum(g2, z1) - np.minimum(g1, z1)) / span
    dens = 1.0 / span
    rows = np.empty((problem.n, z1.size))
    for k, r in enumerate(problem.rows):
        lo, hi = r.box[0]
        inside = np.ones(z1.size, bool)
        for i, (blo, bhi) in enumerate(r.box[1:]):
            inside &= (tail[:, i] >= blo) & (tail[:, i] <= bhi)
        rows[k] = np.where(inside, (np.minimum(z1, hi) - np.minimum(z1, lo)) / span, 0.0)
    return obj, dens, rows


def evaluate_pou_column(problem: PouProblem, atom: PouAtom, c: float) -> ColumnEvaluation:
    z1 = atom.z[0]
    if not z1 > problem.x10 + 0.5 * problem.eps:
        raise DegenerateAtomError(f"z1={z1} must exceed x10={problem.x10} by the epsilon floor")
    tail = np.array([atom.z[1:]], float).reshape(1, problem.d - 1)
    obj, dens, rows = _coeffs(problem, np.array([z1]), tail)
    return ColumnEvaluation(c * float(obj[0]), float(dens[0]), 0.0, rows[:, 0].copy(), float(z1 - problem.x10))


def tail_candidates(problem: PouProblem, i: int, n_geo: int = 8) -> list:
    """Values worth trying for coordinate ``i + 2``: box edges, band kinks, midpoints, a ladder."""
    lo = problem.lower_thresholds[i]
    pts = set()
    for r in problem.rows:
        for v in r.box[i + 1]:
            if math.isfinite(v):
                pts.add(v)
    for g in (problem.g1, problem.g2):
        if i == 0:
            pts.update(v for v in g.kinks() if math.isfinite(v))
    base = lo if math.isfinite(lo) else (min(pts) - 1.0 if pts else 0.0)
    pts.add(base)
    srt = sorted(p for p in pts if p >= base)
    mids = [0.5 * (a + b) for a, b in zip(srt, srt[1:])]
    ladder = (base + np.geomspace(1e-3, problem.box_bound, n_geo)).tolist()
    return sorted(set(srt) | set(mids) | set(ladder))


# ---------------------------------------------------------------------------
# pricing and column generation
# ---------------------------------------------------------------------------

def price_pou(problem: PouProblem, duals: Duals, max_tails: int = 4096):
    """Exact over ``z1`` for each candidate tail; returns ``(best_atom, reduced_cost, ranked)``."""
    per = [tail_candidates(problem, i) for i in range(problem.d - 1)]
    tails = list(itertools.product(*per))[:max_tails] if per else [()]
    x10, L, eps = problem.x10, problem.box_bound, problem.eps
    best = []
    for tail in tails:
        t = np.array(tail, float).reshape(1, -1)
        g = [float(problem.g1(t)[0]), float(problem.g2(t)[0])]
        kinks = {x10 + eps, x10 + L}
        kinks.update(v for v in g if x10 + eps < v < x10 + L)
        for r in problem.rows:
            kinks.update(v for v in r.box[0] if x10 + eps < v < x10 + L)
        z1 = np.array(sorted(kinks))
        tt = np.repeat(t, z1.size, axis=0)
        obj, dens, rows = _coeffs(problem, z1, tt)
        rc = duals.omega * obj - duals.capX * dens - duals.rows @ rows - duals.norm
        j = int(np.argmax(rc))
        best.append((float(rc[j]), (float(z1[j]),) + tuple(tail)))
    best.sort(key=lambda b: (-b[0], b[1]))
    return PouAtom(best[0][1]), best[0][0], [(rc, PouAtom(z)) for rc, z in best]


@dataclass
class PouMixture:
    atoms: list
    probs: np.ndarray

    def to_dict(self) -> dict:
        return {"atoms": [list(a.z) for a in self.atoms], "probs": np.asarray(self.probs).tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "PouMixture":
        return cls([PouAtom(tuple(z)) for z in d["atoms"]], np.array(d["probs"], float))


def _seed_atoms(problem: PouProblem) -> list:
    x10, L = problem.x10, problem.box_bound
    z1s = set((x10 + np.geomspace(1e-3, L, 12)).tolist())
    for r in problem.rows:
        z1s.update(v for v in r.box[0] if x10 < v <= x10 + L)
    per = [tail_candidates(problem, i, 3) for i in range(problem.d - 1)]
    tails = list(itertools.product(*per))[:64] if per else [()]
    return [PouAtom((z1,) + tuple(t)) for z1 in sorted(z1s) for t in tails]


def solve_1pou_fixed_c(problem: PouProblem, c: float, opts: SolverOptions = SolverOptions()) -> SolveReport:
    view = problem.moment_view(c)
    atoms, cols, keys = [], [], set()

    def add(atom):
        if atom.key() in keys:
            return False
        try:
            col = evaluate_pou_column(problem, atom, c)
        except DegenerateAtomError:
            return False
        keys.add(atom.key())
        atoms.append(atom)
        cols.append(col)
        return True

    for a in _seed_atoms(problem):
        add(a)
    seeded = len(atoms)
    it, rc = 0, INF
    status = OPTIMAL
    for it in range(opts.max_iters):
        mr = master_lp_solve(view, cols)
        phase1 = mr.status != OPTIMAL
        tol = 1e-10 if phase1 else opts.tol_rc
        _, rc, ranked = price_pou(problem, mr.duals)
        if rc <= tol:
            status = "infeasible" if phase1 else OPTIMAL
            break
        added = 0
        for r, atom in ranked:
            if r <= tol or added >= opts.columns_per_iter:
                continue
            added += add(atom)
        if added == 0:
            break
    mr = master_lp_solve(view, cols)
    diag = {"kind": "1pou", "iterations": it + 1, "columns_generated": len(atoms) - seeded,
            "final_reduced_cost": rc, "n": problem.n, "box_bound": problem.box_bound, "c": c}
    if mr.status != OPTIMAL:
        diag["phase1_residual"] = mr.infeasibility
        return SolveReport(-INF, c, PouMixture([], np.zeros(0)), {}, diag, status="infeasible")
    support = np.nonzero(mr.probs > 1e-14)[0]
    sub_cols = [cols[i] for i in support]
    sub = master_lp_solve(view, sub_cols)
    if sub.status == OPTIMAL and sub.value >= mr.value - 1e-9 * max(c, abs(mr.value)):
        keep = np.nonzero(sub.probs > 0)[0]
        fin_atoms = [atoms[support[i]] for i in keep]
        fin_cols = [sub_cols[i] for i in keep]
        probs = sub.probs[keep]
    else:
        fin_atoms = [atoms[i] for i in support]
        fin_cols = sub_cols
        probs = mr.probs[support]
    value = float(sum(p * col.objective_coeff for p, col in zip(probs, fin_cols)))
    # the tail coordinates sit on finitely many points, so no joint density exists
    diag["singular_tail"] = problem.d >= 2
    return SolveReport(value, c, PouMixture(fin_atoms, probs), constraint_slacks(view, fin_cols, probs), diag)


def solve_1pou(problem: PouProblem, c_grid=3, opts: SolverOptions = SolverOptions()) -> SolveReport:
    if isinstance(c_grid, (int, np.integer)):
        cs = [problem.lF] if problem.lF == problem.uF else np.linspace(problem.lF, problem.uF, int(c_grid)).tolist()
    else:
        cs = [float(v) for v in c_grid]
    best, per_c = None, []
    for c in sorted(set(cs)):
        if not problem.lF - 1e-12 <= c <= problem.uF + 1e-12:
            raise GeometryDomainError(f"c={c} outside [{problem.lF}, {problem.uF}]")
        rep = solve_1pou_fixed_c(problem, c, opts)
        per_c.append({"c": c, "value": encode_float(rep.value), "status": rep.status})
        if rep.feasible and (best is None or rep.value > best.value):
            best = rep
    out = best if best is not None else rep
    out.diagnostics["per_c"] = per_c
    return out


# ---------------------------------------------------------------------------
# recovery
# ---------------------------------------------------------------------------

class SamplerAndDensity:
    """Worst-case distribution: sampler plus first-coordinate marginal (normalized to 1)."""

    def __init__(self, mixture: PouMixture, x10: float, c: float = 1.0):
        self.x10 = float(x10)
        self.c = float(c)
        self.z = np.array([a.z for a in mixture.atoms], float)
        self.p = np.asarray(mixture.probs, float)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        cum = np.cumsum(self.p) / self.p.sum()
        idx = np.minimum(np.searchsorted(cum, rng.random(n), side="right"), len(cum) - 1)
        out = self.z[idx].copy()
        out[:, 0] = self.x10 + rng.random(n) * (self.z[idx, 0] - self.x10)
        return out

    def marginal_density(self, x):
        x = np.asarray(x, float)
        span = self.z[:, 0] - self.x10
        val = np.sum(self.p * ((self.z[:, 0] >= x[..., None]) & (x[..., None] >= self.x10)) / span, axis=-1)
        return val

    def marginal_cdf(self, x):
        x = np.asarray(x, float)
        span = self.z[:, 0] - self.x10
        frac = np.clip((x[..., None] - self.x10) / span, 0.0, 1.0)
        return np.sum(self.p * frac, axis=-1)


def recover_1pou(report: SolveReport, problem: PouProblem) -> SamplerAndDensity:
    if not report.feasible:
        raise GeometryDomainError("cannot recover a distribution from an infeasible report")
    return SamplerAndDensity(report.mixture, problem.x10, report.best_c)


def verify_pou_report(report: SolveReport, problem: PouProblem, mc_draws: int = 1_000_000, seed: int = 0,
                      tol: float = 1e-7):
    from .oracle import VerificationResult, _mc_check, _slack_mismatch, mc_probability

    if not report.feasible:
        return VerificationResult(False, {}, float("nan"), float("nan"), False, messages=["report is infeasible"])
    c = report.best_c
    view = problem.moment_view(c)
    cols = [evaluate_pou_column(problem, a, c) for a in report.mixture.atoms]
    probs = np.asarray(report.mixture.probs, float)
    res = constraint_slacks(view, cols, probs)
    msgs = []
    feasible = abs(res["normalization"]) <= tol and bool(np.all(probs >= -tol))
    if not feasible:
        msgs.append(f"normalization residual {res['normalization']:.3g}")
    for key, v in res.items():
        if key == "normalization":
            continue
        worst = min(v["lower"], v["upper"]) if isinstance(v, dict) else v
        if worst < -tol:
            feasible = False
            msgs.append(f"{key} violated by {-worst:.3g}")
    if len(cols) > problem.n + 2:
        msgs.append(f"support size {len(cols)} exceeds n + 2")
    obj = float(sum(p * col.objective_coeff for p, col in zip(probs, cols)))
    err = abs(obj - report.value)
    if err > 1e-9:
        msgs.append(f"objective mismatch {err:.3g}")
    mismatch = _slack_mismatch(report.slacks, res)
    if mismatch > tol:
        msgs.append(f"reported slacks differ from recomputed ones by {mismatch:.3g}")
    dist = recover_1pou(report, problem)
    xs = problem.x10 + np.linspace(0.0, problem.box_bound, 2049)
    dens = dist.marginal_density(xs)
    mono = bool(np.all(np.diff(dens) <= 1e-12 * max(1.0, dens.max())))
    out = VerificationResult(bool(feasible), res, obj, err, mono, slack_mismatch=mismatch, messages=msgs)
    if mc_draws:
        def region(pts):
            tail = pts[:, 1:]
            return (pts[:, 0] >= problem.g1(tail)) & (pts[:, 0] <= problem.g2(tail))
        est, se = mc_probability(dist, region, mc_draws, seed)
        out.mc_estimate = c * est
        out.mc_stderr = c * se
        out.mc_z = _mc_check(min(max(report.value / c, 0.0), 1.0), est, mc_draws)
    return out


def desk_instance(L: float = 100.0) -> PouProblem:
    """Two-atom example: ``P(0 <= X1 <= 1) = 0.5`` (+-0.5%), density cap 1, target ``X1 >= 2``."""
    row = PouRow(((0.0, 1.0), (-INF, INF)), 0.5, 0.5, True).relaxed(0.005)
    return PouProblem(0.0, (-INF,), 1.0, 1.0, 1.0, (row,), ConstantBand(2.0), ConstantBand(INF), L)
