"""Exact geometry of staircase OU sets above a mode ``(x0, y0)``.

Step functions are left-continuous: a point sitting on a breakpoint belongs
to the step on its left.  Infinite edges are plain ``math.inf`` and every
closed form handles them analytically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import minimize

from . import kernels
from .errors import DegenerateAtomError, GeometryDomainError, InfeasibleError

INF = math.inf
ATOM_EPS = 1e-9


# ---------------------------------------------------------------------------
# types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AxisRectangle:
    x1: float
    x2: float
    y1: float
    y2: float

    def __post_init__(self):
        if not (self.x1 <= self.x2 and self.y1 <= self.y2):
            raise GeometryDomainError(f"rectangle has inverted edges: {self}")
        if math.isinf(self.x1) or math.isinf(self.y1):
            raise GeometryDomainError("lower rectangle edges must be finite")

    def as_row(self) -> tuple[float, float, float, float]:
        return (self.x1, self.x2, self.y1, self.y2)

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)


def rects_array(rects: Iterable[AxisRectangle]) -> np.ndarray:
    rows = [r.as_row() for r in rects]
    return np.asarray(rows, dtype=float).reshape(len(rows), 4)


@dataclass(frozen=True, eq=False)
class RareEventBoundary:
    """Target set ``{(x, y): y >= g(x)}`` with ``g`` clamped piecewise affine.

    ``pieces`` is a sequence of ``(x_b, slope, intercept)``.  Piece ``p`` is
    active on ``[x_b[p], x_b[p+1])`` and the last one runs to infinity.  An
    infinite intercept means the piece carries no mass.  Left of the first
    breakpoint ``g`` is infinite too, so a boundary may start after the mode.
    """

    pieces: tuple
    bx: np.ndarray = field(init=False, repr=False)
    slope: np.ndarray = field(init=False, repr=False)
    icpt: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        pieces = tuple((float(a), float(b), float(c)) for a, b, c in self.pieces)
        if not pieces:
            raise GeometryDomainError("boundary needs at least one piece")
        bx = np.array([p[0] for p in pieces])
        if np.any(~np.isfinite(bx)) or np.any(np.diff(bx) <= 0):
            raise GeometryDomainError("boundary breakpoints must be finite and strictly increasing")
        slope = np.array([p[1] for p in pieces])
        icpt = np.array([p[2] for p in pieces])
        if np.any(~np.isfinite(slope)) or np.any(icpt == -INF) or np.any(np.isnan(icpt)):
            raise GeometryDomainError("boundary slopes must be finite and intercepts > -inf")
        object.__setattr__(self, "pieces", pieces)
        object.__setattr__(self, "bx", bx)
        object.__setattr__(self, "slope", slope)
        object.__setattr__(self, "icpt", icpt)

    @classmethod
    def affine(cls, slope: float, intercept: float, start: float) -> "RareEventBoundary":
        return cls(((start, slope, intercept),))

    @classmethod
    def constant(cls, value: float, start: float) -> "RareEventBoundary":
        return cls(((start, 0.0, value),))

    @classmethod
    def empty(cls, start: float) -> "RareEventBoundary":
        return cls(((start, 0.0, INF),))

    def anchored(self, x0: float) -> "RareEventBoundary":
        """Same set with the first breakpoint moved to ``x0``."""
        out = []
        if x0 < self.pieces[0][0]:
            out.append((x0, 0.0, INF))
        for p, (b, a, c) in enumerate(self.pieces):
            nxt = self.pieces[p + 1][0] if p + 1 < len(self.pieces) else INF
            if nxt <= x0:
                continue
            out.append((max(b, x0), a, c))
        return RareEventBoundary(tuple(out))

    def g(self, x, y0: float):
        """Effective boundary ``max(y0, slope * x + intercept)``; infinite left of the start."""
        x = np.asarray(x, float)
        p = np.searchsorted(self.bx, x, side="right") - 1
        pc = np.clip(p, 0, len(self.bx) - 1)
        with np.errstate(invalid="ignore"):
            raw = np.where(np.isinf(self.icpt[pc]), INF, self.slope[pc] * x + self.icpt[pc])
        out = np.where(p < 0, INF, np.maximum(y0, raw))
        return out if out.ndim else float(out)

    def contains(self, x, y, y0: float):
        return np.asarray(y) >= self.g(x, y0)

    def breakpoints(self) -> np.ndarray:
        return self.bx.copy()

    def arrays(self):
        return self.bx, self.slope, self.icpt


@dataclass(frozen=True, eq=False)
class StaircaseAtom:
    """Closed staircase ``R_{z,w}``: widths ``z`` left to right, height increments ``w``.

    Step ``i`` (0-based) has height ``y0 + sum(w[: k - i])``.
    """

    x0: float
    y0: float
    z: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float).ravel().copy()
        w = np.asarray(self.w, dtype=float).ravel().copy()
        if z.size == 0 or z.size != w.size:
            raise DegenerateAtomError("z and w must be non-empty and of equal length")
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(w))):
            raise DegenerateAtomError("atom parameters must be finite")
        if np.any(z <= 0) or w[0] <= 0 or np.any(w < 0):
            raise DegenerateAtomError("need z > 0, w[0] > 0 and w >= 0")
        z.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "x0", float(self.x0))
        object.__setattr__(self, "y0", float(self.y0))

    @classmethod
    def from_steps(cls, x0: float, y0: float, widths, heights) -> "StaircaseAtom":
        """Build from step widths and absolute non-increasing heights."""
        heights = np.asarray(heights, float)
        if np.any(np.diff(heights) > 0):
            raise DegenerateAtomError("step heights must be non-increasing")
        rev = heights[::-1] - y0
        w = np.concatenate(([rev[0]], np.diff(rev)))
        return cls(x0, y0, np.asarray(widths, float), w)

    @classmethod
    def clamped(cls, x0: float, y0: float, z, w, eps: float = ATOM_EPS) -> "StaircaseAtom":
        """Floor the parameters so that any raw search point becomes a valid atom."""
        z = np.maximum(np.asarray(z, float), eps)
        w = np.maximum(np.asarray(w, float), 0.0)
        w[0] = max(w[0], eps)
        return cls(x0, y0, z, w)

    @property
    def k(self) -> int:
        return int(self.z.size)

    @property
    def edges(self) -> np.ndarray:
        return self.x0 + np.concatenate(([0.0], np.cumsum(self.z)))

    @property
    def heights(self) -> np.ndarray:
        return self.y0 + np.cumsum(self.w)[::-1]

    def key(self) -> tuple:
        """Lexicographic identity used for deterministic tie-breaks."""
        return (self.x0, self.y0) + tuple(self.z.tolist()) + tuple(self.w.tolist())

    def simplified(self) -> "StaircaseAtom":
        """Merge adjacent steps of equal height."""
        h = self.heights
        keep = np.concatenate((h[1:] != h[:-1], [True]))
        groups = np.cumsum(np.concatenate(([0], keep[:-1].astype(int))))
        widths = np.bincount(groups, weights=self.z)
        return StaircaseAtom.from_steps(self.x0, self.y0, widths, h[keep])

    def to_dict(self) -> dict:
        return {"x0": self.x0, "y0": self.y0, "z": self.z.tolist(), "w": self.w.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "StaircaseAtom":
        return cls(d["x0"], d["y0"], d["z"], d["w"])


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Non-increasing left-continuous step function on ``[breakpoints[0], breakpoints[-1]]``."""

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.breakpoints, float).ravel()
        v = np.asarray(self.values, float).ravel()
        if b.size != v.size + 1 or v.size == 0:
            raise GeometryDomainError("need len(breakpoints) == len(values) + 1 >= 2")
        if np.any(np.diff(b) <= 0):
            raise GeometryDomainError("breakpoints must be strictly increasing")
        if np.any(np.diff(v) > 0):
            raise GeometryDomainError("values must be non-increasing")
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_atom(cls, atom: StaircaseAtom) -> "StepFunction":
        return cls(atom.edges, atom.heights)

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    def __call__(self, x):
        x = np.asarray(x, float)
        if np.any(x < self.breakpoints[0]) or np.any(x > self.breakpoints[-1]):
            raise GeometryDomainError("x outside the step function's support")
        i = np.clip(np.searchsorted(self.breakpoints, x, side="left") - 1, 0, self.values.size - 1)
        out = self.values[i]
        return out if out.ndim else float(out)

    def integral(self) -> float:
        return float(np.dot(self.widths, self.values))

    def inverse(self, y: float) -> float:
        """``sup{x : h(x) >= y}``, with the left end returned when the set is empty."""
        hit = np.nonzero(self.values >= y)[0]
        if hit.size == 0:
            return float(self.breakpoints[0])
        return float(self.breakpoints[hit[-1] + 1])

    def merged(self) -> "StepFunction":
        keep = np.concatenate((self.values[1:] != self.values[:-1], [True]))
        return StepFunction(np.concatenate((self.breakpoints[:1], self.breakpoints[1:][keep])),
                            self.values[keep])

    def to_atom(self, y0: float) -> StaircaseAtom:
        f = self.merged()
        return StaircaseAtom.from_steps(f.breakpoints[0], y0, f.widths, f.values)


# ---------------------------------------------------------------------------
# closed-form operations on a single atom
# ---------------------------------------------------------------------------

def staircase_height(atom: StaircaseAtom, x: float) -> float:
    e = atom.edges
    if not (e[0] <= x <= e[-1]):
        raise GeometryDomainError(f"x={x} outside [{e[0]}, {e[-1]}]")
    i = int(np.clip(np.searchsorted(e, x, side="left") - 1, 0, atom.k - 1))
    return float(atom.heights[i])


def staircase_area(atom: StaircaseAtom) -> float:
    return float(np.dot(atom.z, atom.heights - atom.y0))


def staircase_intercepts(atom: StaircaseAtom) -> tuple[float, float]:
    return float(atom.z.sum()), float(atom.w.sum())


def rect_overlap_area(atom: StaircaseAtom, rect: AxisRectangle) -> float:
    e = atom.edges
    h = atom.heights
    wx = np.clip(np.minimum(e[1:], rect.x2) - np.maximum(e[:-1], rect.x1), 0.0, None)
    wy = np.minimum(h, rect.y2) - np.minimum(h, rect.y1)
    return float(np.sum(np.where(wx > 0, wx * wy, 0.0)))


def rare_event_overlap_area(atom: StaircaseAtom, boundary: RareEventBoundary) -> float:
    e = atom.edges
    bx, sl, ic = boundary.arrays()
    return float(np.sum(kernels.excess_integral(e[:-1], e[1:], atom.heights, atom.y0, bx, sl, ic)))


def evaluate_atom(atom: StaircaseAtom, rects: np.ndarray, boundary: RareEventBoundary):
    """All closed forms at once: ``(area, RX, RY, rare_overlap, rect_overlaps)``."""
    bx, sl, ic = boundary.arrays()
    return kernels.staircase_eval(atom.z, atom.w, atom.x0, atom.y0, rects, bx, sl, ic)


# ---------------------------------------------------------------------------
# three-step subproblem
# ---------------------------------------------------------------------------

def _segment_value(boundary, y0, a, b, v):
    bx, sl, ic = boundary.arrays()
    return kernels.excess_integral(a, b, v, y0, bx, sl, ic)


def step_objective(f: StepFunction, boundary: RareEventBoundary, y0: float) -> float:
    """``int (f - g)_+`` over the support of ``f``."""
    bx, sl, ic = boundary.arrays()
    b = f.breakpoints
    return float(np.sum(kernels.excess_integral(b[:-1], b[1:], f.values, y0, bx, sl, ic)))


def merge_to_three(widths, values, boundary: RareEventBoundary, y0: float, x_lo: float):
    """Collapse a step function to at most three steps without lowering ``int (h - g)_+``.

    The last two interior steps move along the mass-preserving line until
    either they become equal or one of them meets its outer neighbour; the
    objective is convex along that line, so the better endpoint never loses.
    """
    z = [float(a) for a in widths]
    y = [float(a) for a in values]
    # collapse exact ties first
    zz, yy = [z[0]], [y[0]]
    for zi, yi in zip(z[1:], y[1:]):
        if yi == yy[-1]:
            zz[-1] += zi
        else:
            zz.append(zi)
            yy.append(yi)
    z, y = zz, yy
    left = [x_lo]
    for zi in z:
        left.append(left[-1] + zi)
    while len(y) > 3:
        m = len(y)
        a, b = m - 3, m - 2
        za, zb, ya, yb = z[a], z[b], y[a], y[b]
        xa, xm, xb = left[a], left[b], left[b + 1]
        avg = (za * ya + zb * yb) / (za + zb)
        d = min(y[a - 1] - ya, (yb - y[b + 1]) * zb / za)
        ya2 = ya + d
        yb2 = yb - d * za / zb
        hit_up = (y[a - 1] - ya) <= (yb - y[b + 1]) * zb / za
        if hit_up:
            ya2 = y[a - 1]
        else:
            yb2 = y[b + 1]
        f_avg = _segment_value(boundary, y0, xa, xb, avg)
        f_ext = _segment_value(boundary, y0, xa, xm, ya2) + _segment_value(boundary, y0, xm, xb, yb2)
        if f_avg >= f_ext:
            z[a:b + 1] = [za + zb]
            y[a:b + 1] = [avg]
            del left[b]
        elif hit_up:
            y[a] = ya2
            y[b] = yb2
            z[a - 1:a + 1] = [z[a - 1] + za]
            y[a - 1:a + 1] = [y[a - 1]]
            del left[a]
        else:
            y[a] = ya2
            y[b] = yb2
            z[b:b + 2] = [zb + z[b + 1]]
            y[b:b + 2] = [y[b + 1]]
            del left[b + 1]
    return np.array(z), np.array(y)


def _family_step(x_lo, x_hi, b_lo, b_hi, s, t, v) -> StepFunction:
    knots = [x_lo]
    vals = []
    for right, val in ((s, b_hi), (t, v), (x_hi, b_lo)):
        if right > knots[-1]:
            knots.append(right)
            vals.append(val)
    knots[-1] = x_hi
    return StepFunction(np.array(knots), np.array(vals)).merged()


def _repair_mass(f: StepFunction, mass: float, b_lo: float, b_hi: float) -> StepFunction:
    """Absorb round-off in the integral into the last step height."""
    err = mass - f.integral()
    if err == 0.0:
        return f
    v = f.values.copy()
    for i in range(v.size - 1, -1, -1):
        cap_hi = b_hi if i == 0 else v[i - 1]
        cap_lo = b_lo if i == v.size - 1 else v[i + 1]
        nv = min(cap_hi, max(cap_lo, v[i] + err / f.widths[i]))
        err -= (nv - v[i]) * f.widths[i]
        v[i] = nv
        if abs(err) <= 1e-15 * max(1.0, abs(mass)):
            break
    return StepFunction(f.breakpoints, v)


def three_step_subproblem(boundary: RareEventBoundary, x_lo: float, x_hi: float,
                          b_lo: float, b_hi: float, mass: float, y0: float | None = None,
                          start: StepFunction | None = None, cells: int = 512,
                          refine: bool = True) -> StepFunction:
    """Maximize ``int_{x_lo}^{x_hi} (h - g)_+`` over non-increasing ``h`` in ``[b_lo, b_hi]``
    with ``int h = mass``; the maximizer returned has at most three steps.

    ``y0`` is the clamp floor of ``g`` (defaults to ``b_lo``).  With a
    ``start`` function the result is never worse than it.
    """
    if not (x_hi > x_lo and b_lo <= b_hi):
        raise InfeasibleError("need x_hi > x_lo and b_lo <= b_hi")
    W = x_hi - x_lo
    tol = 1e-12 * max(1.0, abs(mass), abs(b_hi) * W)
    if not (b_lo * W - tol <= mass <= b_hi * W + tol):
        raise InfeasibleError(f"mass {mass} outside [{b_lo * W}, {b_hi * W}]")
    mass = min(max(mass, b_lo * W), b_hi * W)
    if y0 is None:
        y0 = b_lo
    bx, sl, ic = boundary.arrays()

    def family_value(s, t, v):
        return (kernels.excess_integral(x_lo, s, b_hi, y0, bx, sl, ic)
                + kernels.excess_integral(s, t, v, y0, bx, sl, ic)
                + kernels.excess_integral(t, x_hi, b_lo, y0, bx, sl, ic))

    cands = []
    if b_hi - b_lo <= 1e-15 * max(1.0, abs(b_hi)):
        v = min(max(mass / W, b_lo), b_hi)
        return StepFunction(np.array([x_lo, x_hi]), np.array([v]))
    # two-step member (no free block)
    s2 = x_lo + (mass - b_lo * W) / (b_hi - b_lo)
    s2 = min(max(s2, x_lo), x_hi)
    cands.append((family_value(s2, s2, b_lo), s2, s2, b_lo))
    # one-step member
    cands.append((family_value(x_lo, x_hi, mass / W), x_lo, x_hi, mass / W))
    if cells > 0:
        val, s, t, v = kernels.three_step_grid(x_lo, x_hi, b_lo, b_hi, mass, y0, bx, sl, ic, cells)
        if val > -INF:
            cands.append((val, s, t, v))
    best = max(cands, key=lambda c: c[0])
    if refine and best[2] > best[1]:
        best = _refine_family(family_value, best, x_lo, x_hi, b_lo, b_hi, mass)
    out = _repair_mass(_family_step(x_lo, x_hi, b_lo, b_hi, best[1], best[2], best[3]), mass, b_lo, b_hi)
    if start is not None:
        mz, my = merge_to_three(start.widths, start.values, boundary, y0, x_lo)
        merged = StepFunction(x_lo + np.concatenate(([0.0], np.cumsum(mz))), my)
        merged = StepFunction(np.concatenate((merged.breakpoints[:-1], [x_hi])), merged.values)
        if step_objective(merged, boundary, y0) >= step_objective(out, boundary, y0):
            out = merged
    # round-off must not push a height past the band the neighbours rely on
    return StepFunction(out.breakpoints, np.clip(out.values, b_lo, b_hi)).merged()


def _refine_family(family_value, best, x_lo, x_hi, b_lo, b_hi, mass):
    W = x_hi - x_lo

    def neg(p):
        s = min(max(p[0], x_lo), x_hi)
        t = min(max(p[1], s), x_hi)
        if t - s <= 1e-14 * W:
            return INF
        v = (mass - b_hi * (s - x_lo) - b_lo * (x_hi - t)) / (t - s)
        if v < b_lo or v > b_hi:
            return INF
        return -family_value(s, t, v)

    res = minimize(neg, np.array([best[1], best[2]]), method="Nelder-Mead",
                   options={"xatol": 1e-12 * W, "fatol": 1e-14, "maxfev": 400,
                            "initial_simplex": np.array([[best[1], best[2]],
                                                         [best[1] + W / 1024, best[2]],
                                                         [best[1], best[2] - W / 1024]])})
    if np.isfinite(res.fun) and -res.fun > best[0]:
        s = min(max(res.x[0], x_lo), x_hi)
        t = min(max(res.x[1], s), x_hi)
        v = (mass - b_hi * (s - x_lo) - b_lo * (x_hi - t)) / (t - s)
        return (-res.fun, s, t, min(max(v, b_lo), b_hi))
    return best


# ---------------------------------------------------------------------------
# dominating staircase
# ---------------------------------------------------------------------------

def critical_abscissae(h0: StepFunction, rects: Sequence[AxisRectangle]) -> np.ndarray:
    """Sorted distinct interior points where a rectangle edge can change an overlap."""
    lo, hi = h0.breakpoints[0], h0.breakpoints[-1]
    pts = set()
    for r in rects:
        for x in (r.x1, r.x2):
            if lo < x < hi:
                pts.add(float(x))
        for y in (r.y1, r.y2):
            if math.isfinite(y):
                x = h0.inverse(y)
                if lo < x < hi:
                    pts.add(x)
    return np.array(sorted(pts))


def dominating_staircase(h0: StepFunction | StaircaseAtom, rects: Sequence[AxisRectangle],
                         boundary: RareEventBoundary, y0: float | None = None,
                         cells: int = 512) -> StaircaseAtom:
    """Staircase with the same area and rectangle overlaps as ``h0``, no larger
    intercepts, at least the rare-event overlap, and at most three steps
    between consecutive critical abscissae."""
    if isinstance(h0, StaircaseAtom):
        y0 = h0.y0 if y0 is None else y0
        h0 = StepFunction.from_atom(h0)
    if y0 is None:
        raise GeometryDomainError("y0 is required when h0 is a StepFunction")
    if np.any(h0.values <= y0) or h0.integral() - y0 * h0.widths.sum() <= 0:
        raise GeometryDomainError("h0 must stay above y0 and enclose positive area")
    crit = critical_abscissae(h0, rects)
    knots = np.concatenate(([h0.breakpoints[0]], crit, [h0.breakpoints[-1]]))
    all_b, all_v = [float(knots[0])], []
    b = h0.breakpoints
    for lo, hi in zip(knots[:-1], knots[1:]):
        # pieces of h0 inside (lo, hi]
        inner = b[(b > lo) & (b < hi)]
        sub_b = np.concatenate(([lo], inner, [hi]))
        sub_v = h0(0.5 * (sub_b[:-1] + sub_b[1:]))
        piece = StepFunction(sub_b, sub_v)
        res = three_step_subproblem(boundary, lo, hi, float(sub_v[-1]), float(sub_v[0]),
                                    piece.integral(), y0=y0, start=piece, cells=cells)
        all_b.extend(res.breakpoints[1:].tolist())
        all_v.extend(res.values.tolist())
    out = StepFunction(np.array(all_b), np.array(all_v))
    return out.to_atom(y0)
