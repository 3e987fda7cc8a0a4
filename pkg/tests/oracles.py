"""Independent reference computations shared by the unit and acceptance tests."""
import math

import numpy as np

from tailbound import kernels
from tailbound.geometry import AxisRectangle, RareEventBoundary, StaircaseAtom

INF = math.inf


def brute_force_three_step(boundary, x_lo, x_hi, b_lo, b_hi, mass, y0, points=100):
    """Exhaustive search over 3-step functions with knots on a grid.

    For fixed knots the objective is convex in the step values, so its maximum
    over the mass-constrained polytope sits at a vertex: two of the four order
    constraints active.  Every vertex pattern is enumerated.
    """
    bx, sl, ic = boundary.arrays()
    xs = np.linspace(x_lo, x_hi, points)
    S, T = np.meshgrid(xs, xs, indexing="ij")
    keep = S <= T
    s, t = S[keep], T[keep]
    l1, l2, l3 = s - x_lo, t - s, x_hi - t
    best = -np.inf
    # patterns: values expressed as (v1, v2, v3) with one free unknown u
    patterns = [
        lambda u: (b_hi, u, b_lo), lambda u: (u, u, b_lo), lambda u: (b_hi, u, u),
        lambda u: (u, b_lo, b_lo), lambda u: (b_hi, b_hi, u), lambda u: (u, u, u),
    ]
    for pat in patterns:
        base = np.array(pat(0.0), float)
        slope = np.array(pat(1.0), float) - base
        lin = slope[0] * l1 + slope[1] * l2 + slope[2] * l3
        const = base[0] * l1 + base[1] * l2 + base[2] * l3
        with np.errstate(divide="ignore", invalid="ignore"):
            u = (mass - const) / lin
            v = [base[i] + slope[i] * u for i in range(3)]
        ok = (np.isfinite(u) & (v[0] <= b_hi + 1e-12) & (v[0] >= v[1] - 1e-12) & (v[1] >= v[2] - 1e-12)
              & (v[2] >= b_lo - 1e-12))
        if not ok.any():
            continue
        lo = np.full(ok.sum(), x_lo)
        hi = np.full(ok.sum(), x_hi)
        val = (kernels.excess_integral(lo, s[ok], v[0][ok], y0, bx, sl, ic)
               + kernels.excess_integral(s[ok], t[ok], v[1][ok], y0, bx, sl, ic)
               + kernels.excess_integral(t[ok], hi, v[2][ok], y0, bx, sl, ic))
        best = max(best, float(np.max(val)))
    return best


def random_case(rng, steps=50):
    z = rng.uniform(0.05, 1.0, steps)
    w = rng.uniform(0.0, 1.0, steps)
    w[0] += 0.1
    a = StaircaseAtom(0.0, 0.0, z, w)
    rx, ry = z.sum(), w.sum()
    x1, x2 = np.sort(rng.uniform(0, rx, 2))
    y1, y2 = np.sort(rng.uniform(0, ry, 2))
    rect = AxisRectangle(x1, x2, y1, y2)
    bnd = RareEventBoundary.affine(rng.uniform(-1, 1), rng.uniform(0, ry), 0.0)
    return a, [rect], bnd


def two_atom_pou_bound(problem, c=1.0, points=400):
    """Best mixture of two 1-POU atoms with ``z1`` on a log grid (single-row problems, constant band).

    For a fixed pair the mixture weight is one scalar and every constraint is
    linear in it, so the optimum sits at an end of the feasible weight interval.
    """
    from tailbound.pou import PouAtom, evaluate_pou_column

    x10, L = problem.x10, problem.box_bound
    z1 = x10 + np.geomspace(problem.eps, L, points)
    tail = tuple(0.0 for _ in range(problem.d - 1))
    cols = [evaluate_pou_column(problem, PouAtom((z,) + tail), c) for z in z1]
    obj = np.array([col.objective_coeff for col in cols])
    dens = np.array([col.uX_coeff for col in cols])
    row = np.array([col.row_coeffs[0] for col in cols])
    (lo, hi), = [(min(r.a, 1.0), min(r.b, 1.0)) for r in problem.rows]
    cap = problem.uX1 / c
    best = -np.inf
    O1, O2 = obj[:, None], obj[None, :]
    D1, D2 = dens[:, None], dens[None, :]
    R1, R2 = row[:, None], row[None, :]
    # weight p on atom 1: every constraint reads  k0 + k1 p  (<= or within bounds)
    p_lo = np.zeros((points, points))
    p_hi = np.ones((points, points))

    def restrict(k0, k1, upper):
        nonlocal p_lo, p_hi
        with np.errstate(divide="ignore", invalid="ignore"):
            root = (upper - k0) / k1
        pos = k1 > 0
        neg = k1 < 0
        p_hi = np.where(pos, np.minimum(p_hi, root), p_hi)
        p_lo = np.where(neg, np.maximum(p_lo, root), p_lo)
        flat = k1 == 0
        bad = flat & (k0 > upper + 1e-15)
        p_lo = np.where(bad, 2.0, p_lo)

    restrict(D2, D1 - D2, cap)
    restrict(R2, R1 - R2, hi)
    restrict(-R2, -(R1 - R2), -lo)
    ok = p_lo <= p_hi + 1e-15
    for p in (p_lo, p_hi):
        pc = np.clip(p, 0.0, 1.0)
        val = np.where(ok, pc * O1 + (1 - pc) * O2, -np.inf)
        best = max(best, float(val.max()))
    return best
