"""Named instances: the bivariate normal benchmark and the data-driven layouts."""
from __future__ import annotations

import math

import numpy as np

from .constraints import ConstraintSet, MomentRow
from .geometry import AxisRectangle, RareEventBoundary

INF = math.inf

# N(0, 16 I) benchmark on the tail [8, inf)^2
TRUE_TAIL_MASS = 5.176e-4
TRUE_DENSITY_CAP = 3.071e-4
TRUE_X_SLABS = 1e-4 * np.array([2.395, 3.763, 4.498, 4.869, 5.044])
TRUE_Y_SLABS = 1e-4 * np.array([1.586, 2.736, 3.551, 4.115, 4.498])

TRUTH = {"S1": 5.028e-5, "S2": 5.341e-6, "S3": 4.35e-4}

# top-percentile levels (percent) for x0, x1..x5 and likewise for y
PERCENTILE_PRESETS = {
    "80": (20.0, 16.5, 13.0, 9.5, 6.0, 2.5),
    "90": (10.0, 8.0, 6.0, 4.0, 2.0, 1.0),
    "95": (5.0, 4.0, 3.0, 2.0, 1.0, 0.5),
}


def target(name: str) -> RareEventBoundary:
    """The rare-event sets of the experiments, each with its own x-threshold."""
    specs = {"S1": (8.0, 1.5, -2.0), "S2": (8.0, 1.0, 5.0), "S3": (7.0, 1.0, 1.0)}
    try:
        start, slope, icpt = specs[name.upper()]
    except KeyError:
        raise KeyError(f"unknown target {name!r}; choose from {sorted(specs)}") from None
    return RareEventBoundary.affine(slope, icpt, start)


def true_normal_constraints(rel: float = 0.005) -> ConstraintSet:
    """Constraints computed from the true distribution, equality rows widened by ``rel``."""
    rows = []
    for i, v in enumerate(TRUE_X_SLABS, start=1):
        rows.append(MomentRow(AxisRectangle(8.0, 8.0 + i, 8.0, INF), v, v, conditional=False))
    for i, v in enumerate(TRUE_Y_SLABS, start=1):
        rows.append(MomentRow(AxisRectangle(8.0, INF, 8.0, 8.0 + 0.6 * i), v, v, conditional=False))
    cs = ConstraintSet(8.0, 8.0, TRUE_TAIL_MASS, TRUE_TAIL_MASS, TRUE_DENSITY_CAP, TRUE_DENSITY_CAP, rows)
    return cs.relaxed(rel) if rel else cs


def normal_tail_probability(boundary: RareEventBoundary, sigma: float = 4.0, y0: float = -INF,
                            upper: float = 80.0, panels: int = 20000) -> float:
    """``P((X, Y) in S)`` for independent ``N(0, sigma^2)`` coordinates, by Simpson's rule in x."""
    from scipy.special import ndtr

    lo = float(boundary.bx[0])
    x = np.linspace(lo, upper, 2 * panels + 1)
    g = np.asarray(boundary.g(x, y0), float)
    tail = np.where(np.isfinite(g), ndtr(-g / sigma), 0.0)
    fx = np.exp(-0.5 * (x / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))
    h = (upper - lo) / (2 * panels)
    y = fx * tail
    return float(h / 3 * (y[0] + y[-1] + 4 * y[1:-1:2].sum() + 2 * y[2:-1:2].sum()))


def random_small_instance(seed: int, n_rows: int | None = None, box: float = 10.0):
    """A feasible toy problem at the origin: rows are read off a random staircase mixture.

    Returns ``(constraints, boundary)``.  The rectangles stay inside ``[0, box/2]^2``
    and every atom of the generating mixture fits in ``[0, box]^2``.
    """
    from .geometry import StaircaseAtom, rect_overlap_area, staircase_area

    rng = np.random.default_rng([seed, 7])
    n = int(rng.integers(1, 4)) if n_rows is None else n_rows
    atoms, probs = [], rng.dirichlet(np.ones(3))
    for _ in range(3):
        k = int(rng.integers(1, 4))
        z = rng.uniform(0.2, box / (2 * k), k)
        w = rng.uniform(0.2, box / (2 * k), k)
        atoms.append(StaircaseAtom(0.0, 0.0, z, w))
    rows = []
    for _ in range(n):
        x1, x2 = np.sort(rng.uniform(0.0, box / 2, 2))
        y1, y2 = np.sort(rng.uniform(0.0, box / 2, 2))
        rect = AxisRectangle(x1, x2 + 0.1, y1, y2 + 0.1)
        v = float(sum(p * rect_overlap_area(a, rect) / staircase_area(a) for p, a in zip(probs, atoms)))
        rows.append(MomentRow(rect, max(0.0, 0.95 * v), min(1.0, 1.05 * v)))
    # marginal density at the mode of the generating mixture, with 20% headroom
    ux = float(sum(p * a.heights[0] / staircase_area(a) for p, a in zip(probs, atoms)))
    uy = float(sum(p * a.edges[-1] / staircase_area(a) for p, a in zip(probs, atoms)))
    cs = ConstraintSet(0.0, 0.0, 1.0, 1.0, 1.2 * ux, 1.2 * uy, rows)
    slope = float(rng.uniform(-1.0, 1.0))
    icpt = float(rng.uniform(0.5, box / 3))
    return cs, RareEventBoundary.affine(slope, icpt, 0.0)
