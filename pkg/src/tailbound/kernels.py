"""Hot numeric kernels.

Every public kernel exists twice: a loop version compiled by numba and a
vectorized numpy version.  ``USE_NUMBA`` picks one at import time.

Boundary arrays follow one layout everywhere: ``bx`` holds the piece
breakpoints (``bx[0]`` is the mode abscissa), ``slope``/``icpt`` the affine
coefficients, and ``icpt == inf`` marks a piece with no rare-event mass.
The effective boundary on piece ``p`` is ``max(y0, slope[p] * x + icpt[p])``.
"""
import math

import numpy as np

from ._jit import USE_NUMBA, njit

INF = math.inf


# ---------------------------------------------------------------------------
# excess integral  int_a^b (v - g(x))_+ dx
# ---------------------------------------------------------------------------

@njit
def _piece_excess_nb(a, b, v, y0, alpha, beta):
    if b <= a or v <= y0 or beta == INF:
        return 0.0
    H = v - y0
    if alpha == 0.0:
        if beta <= y0:
            return H * (b - a)
        if beta >= v:
            return 0.0
        return (v - beta) * (b - a)
    xy0 = (y0 - beta) / alpha
    xv = (v - beta) / alpha
    if alpha > 0.0:
        full = max(0.0, min(b, xy0) - a) * H
        s = max(a, xy0)
        e = min(b, xv)
    else:
        full = max(0.0, b - max(a, xy0)) * H
        s = max(a, xv)
        e = min(b, xy0)
    mid = 0.0
    if e > s:
        mid = (e - s) * (v - beta - alpha * 0.5 * (s + e))
    return full + mid


@njit
def _excess_nb(a, b, v, y0, bx, slope, icpt):
    total = 0.0
    P = bx.shape[0]
    for p in range(P):
        lo = max(a, bx[p])
        hi = b
        if p + 1 < P:
            hi = min(b, bx[p + 1])
        if hi > lo:
            total += _piece_excess_nb(lo, hi, v, y0, slope[p], icpt[p])
    return total


def _piece_excess_np(a, b, v, y0, alpha, beta):
    a, b, v = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float), np.asarray(v, float))
    out = np.zeros(a.shape)
    if beta == INF:
        return out
    H = np.maximum(v - y0, 0.0)
    L = np.maximum(b - a, 0.0)
    if alpha == 0.0:
        if beta <= y0:
            return H * L
        return np.where(beta >= v, 0.0, (v - beta)) * L
    xy0 = (y0 - beta) / alpha
    xv = (v - beta) / alpha
    if alpha > 0.0:
        full = np.maximum(0.0, np.minimum(b, xy0) - a) * H
        s = np.maximum(a, xy0)
        e = np.minimum(b, xv)
    else:
        full = np.maximum(0.0, b - np.maximum(a, xy0)) * H
        s = np.maximum(a, xv)
        e = np.minimum(b, xy0)
    mid = np.where(e > s, (e - s) * (v - beta - alpha * 0.5 * (s + e)), 0.0)
    out = np.where((b > a) & (v > y0), full + mid, 0.0)
    return out


def _excess_np(a, b, v, y0, bx, slope, icpt):
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    total = 0.0
    P = len(bx)
    for p in range(P):
        lo = np.maximum(a, bx[p])
        hi = np.minimum(b, bx[p + 1]) if p + 1 < P else b
        total = total + _piece_excess_np(lo, hi, v, y0, float(slope[p]), float(icpt[p]))
    return total


def excess_integral(a, b, v, y0, bx, slope, icpt):
    """Exact ``int_a^b (v - g(x))_+ dx`` for the clamped piecewise-affine ``g``."""
    if np.ndim(a) == 0 and np.ndim(b) == 0 and np.ndim(v) == 0:
        if USE_NUMBA:
            return float(_excess_nb(float(a), float(b), float(v), float(y0), bx, slope, icpt))
        return float(_excess_np(a, b, v, y0, bx, slope, icpt))
    return _excess_np(a, b, v, y0, bx, slope, icpt)


# ---------------------------------------------------------------------------
# single staircase: area, intercepts, rare overlap, rect overlaps
# ---------------------------------------------------------------------------

@njit
def _staircase_eval_nb(z, w, x0, y0, rects, bx, slope, icpt, out_rect):
    k = z.shape[0]
    area = 0.0
    s_ovl = 0.0
    RX = 0.0
    RY = 0.0
    for i in range(k):
        RX += z[i]
        RY += w[i]
    n = rects.shape[0]
    for r in range(n):
        out_rect[r] = 0.0
    left = x0
    hsum = RY
    for i in range(k):
        right = left + z[i]
        h = y0 + hsum
        area += z[i] * hsum
        s_ovl += _excess_nb(left, right, h, y0, bx, slope, icpt)
        for r in range(n):
            wx = min(right, rects[r, 1]) - max(left, rects[r, 0])
            if wx > 0.0:
                wy = min(h, rects[r, 3]) - min(h, rects[r, 2])
                if wy > 0.0:
                    out_rect[r] += wx * wy
        hsum -= w[k - 1 - i]
        left = right
    return area, RX, RY, s_ovl


def _staircase_eval_np(z, w, x0, y0, rects, bx, slope, icpt, out_rect):
    z = np.asarray(z, float)
    w = np.asarray(w, float)
    edges = x0 + np.concatenate(([0.0], np.cumsum(z)))
    h = y0 + np.cumsum(w)[::-1]
    area = float(np.sum(z * (h - y0)))
    s_ovl = float(np.sum(_excess_np(edges[:-1], edges[1:], h, y0, bx, slope, icpt)))
    if rects.shape[0]:
        wx = np.minimum(edges[1:, None], rects[None, :, 1]) - np.maximum(edges[:-1, None], rects[None, :, 0])
        wy = np.minimum(h[:, None], rects[None, :, 3]) - np.minimum(h[:, None], rects[None, :, 2])
        out_rect[:] = np.sum(np.where((wx > 0) & (wy > 0), wx * wy, 0.0), axis=0)
    return area, float(z.sum()), float(w.sum()), s_ovl


def staircase_eval(z, w, x0, y0, rects, bx, slope, icpt):
    """Return ``(area, RX, RY, rare_overlap, rect_overlaps)`` for one staircase."""
    out = np.zeros(rects.shape[0])
    fn = _staircase_eval_nb if USE_NUMBA else _staircase_eval_np
    area, RX, RY, s = fn(np.asarray(z, float), np.asarray(w, float), float(x0), float(y0),
                         rects, bx, slope, icpt, out)
    return float(area), float(RX), float(RY), float(s), out


# ---------------------------------------------------------------------------
# grid dynamic program for linear functionals over staircases
# ---------------------------------------------------------------------------

@njit
def _dp_fill_nb(Xg, Yg, y0, bx, slope, icpt, rects, mu, omega, theta, piY):
    nx = Xg.shape[0] - 1
    ny = Yg.shape[0] - 1
    n = rects.shape[0]
    F = np.empty((nx, ny))
    xo = np.empty(n)
    for i in range(nx):
        a = Xg[i]
        b = Xg[i + 1]
        wd = b - a
        for r in range(n):
            xo[r] = max(0.0, min(b, rects[r, 1]) - max(a, rects[r, 0]))
        for j in range(ny):
            v = Yg[j + 1]
            val = -theta * wd * (v - y0) - piY * wd
            if omega != 0.0:
                val += omega * _excess_nb(a, b, v, y0, bx, slope, icpt)
            for r in range(n):
                if xo[r] > 0.0 and mu[r] != 0.0:
                    val -= mu[r] * xo[r] * (min(v, rects[r, 3]) - min(v, rects[r, 2]))
            F[i, j] = val
    return F


def _dp_fill_np(Xg, Yg, y0, bx, slope, icpt, rects, mu, omega, theta, piY):
    a = Xg[:-1, None]
    b = Xg[1:, None]
    wd = b - a
    v = Yg[None, 1:]
    F = -theta * wd * (v - y0) - piY * wd
    if omega != 0.0:
        F = F + omega * _excess_np(a, b, v, y0, bx, slope, icpt)
    for r in range(rects.shape[0]):
        if mu[r] == 0.0:
            continue
        xo = np.maximum(0.0, np.minimum(b, rects[r, 1]) - np.maximum(a, rects[r, 0]))
        F = F - mu[r] * xo * (np.minimum(v, rects[r, 3]) - np.minimum(v, rects[r, 2]))
    return np.ascontiguousarray(F)


@njit
def _dp_solve_nb(F, Yg, y0, piX):
    nx, ny = F.shape
    PM = np.empty((nx, ny))
    PA = np.empty((nx, ny), dtype=np.int64)
    for ii in range(nx):
        i = nx - 1 - ii
        best = -INF
        arg = 0
        for j in range(ny):
            val = F[i, j]
            if i + 1 < nx:
                cont = PM[i + 1, j]
                if cont > 0.0:
                    val += cont
            if val > best:
                best = val
                arg = j
            PM[i, j] = best
            PA[i, j] = arg
    best0 = -INF
    j0 = 0
    for j in range(ny):
        # V[0, j] is recoverable from PM only through the prefix; recompute directly
        val = F[0, j]
        if nx > 1 and PM[1, j] > 0.0:
            val += PM[1, j]
        val -= piX * (Yg[j + 1] - y0)
        if val > best0:
            best0 = val
            j0 = j
    heights = np.full(nx, -1, dtype=np.int64)
    heights[0] = j0
    j = j0
    for i in range(1, nx):
        if PM[i, j] > 0.0:
            j = PA[i, j]
            heights[i] = j
        else:
            break
    return best0, heights


def _dp_solve_np(F, Yg, y0, piX):
    nx, ny = F.shape
    PM = np.empty((nx, ny))
    PA = np.empty((nx, ny), dtype=np.int64)
    idx = np.arange(ny)
    nxt = None
    for i in range(nx - 1, -1, -1):
        V = F[i].copy()
        if nxt is not None:
            V += np.maximum(nxt, 0.0)
        PM[i] = np.maximum.accumulate(V)
        # prefix argmax: first index reaching the running max
        is_new = np.concatenate(([True], V[1:] > PM[i, :-1]))
        PA[i] = np.maximum.accumulate(np.where(is_new, idx, 0))
        nxt = PM[i]
    V0 = F[0].copy()
    if nx > 1:
        V0 += np.maximum(PM[1], 0.0)
    V0 -= piX * (Yg[1:] - y0)
    j0 = int(np.argmax(V0))
    heights = np.full(nx, -1, dtype=np.int64)
    heights[0] = j0
    j = j0
    for i in range(1, nx):
        if PM[i, j] > 0.0:
            j = int(PA[i, j])
            heights[i] = j
        else:
            break
    return float(V0[j0]), heights


def dp_fill(Xg, Yg, y0, bx, slope, icpt, rects, mu, omega, theta, piY):
    """Column values ``F[i, j]`` of including column ``i`` up to height ``Yg[j+1]``."""
    fn = _dp_fill_nb if USE_NUMBA else _dp_fill_np
    return fn(Xg, Yg, float(y0), bx, slope, icpt, rects, mu, float(omega), float(theta), float(piY))


def dp_solve(F, Yg, y0, piX):
    """Best non-increasing column profile; returns ``(value, height_index_per_column)``.

    Height index ``-1`` marks columns beyond the staircase.
    """
    fn = _dp_solve_nb if USE_NUMBA else _dp_solve_np
    val, heights = fn(F, Yg, float(y0), float(piX))
    return float(val), heights


# ---------------------------------------------------------------------------
# Nelder-Mead polish of a staircase's reduced cost
# ---------------------------------------------------------------------------

@njit
def _decode_nb(t, k, zmin, Lx, Ly, z, w):
    sz = 0.0
    for i in range(k):
        z[i] = max(zmin, math.exp(min(t[i], 700.0)))
        sz += z[i]
    w[0] = max(zmin, math.exp(min(t[k], 700.0)))
    sw = w[0]
    for i in range(1, k):
        w[i] = max(0.0, t[k + i])
        sw += w[i]
    if sz > Lx:
        f = Lx / sz
        for i in range(k):
            z[i] *= f
    if sw > Ly:
        f = Ly / sw
        for i in range(k):
            w[i] *= f


@njit
def _ratio_nb(t, k, x0, y0, rects, mu, piX, piY, omega, bx, slope, icpt, zmin, Lx, Ly, z, w, buf):
    _decode_nb(t, k, zmin, Lx, Ly, z, w)
    area, RX, RY, s = _staircase_eval_nb(z, w, x0, y0, rects, bx, slope, icpt, buf)
    if not area > 0.0:
        return -INF
    num = omega * s - piX * RY - piY * RX
    for r in range(rects.shape[0]):
        num -= mu[r] * buf[r]
    return num / area


@njit
def _nelder_mead_nb(t0, step, k, x0, y0, rects, mu, piX, piY, omega, bx, slope, icpt,
                    zmin, Lx, Ly, maxfev, ftol):
    n = t0.shape[0]
    z = np.empty(k)
    w = np.empty(k)
    buf = np.empty(rects.shape[0])
    alpha = 1.0
    beta = 1.0 + 2.0 / n
    gamma = 0.75 - 0.5 / n
    delta = 1.0 - 1.0 / n
    sim = np.empty((n + 1, n))
    fv = np.empty(n + 1)
    for i in range(n + 1):
        for j in range(n):
            sim[i, j] = t0[j]
        if i > 0:
            sim[i, i - 1] += step[i - 1]
        fv[i] = -_ratio_nb(sim[i], k, x0, y0, rects, mu, piX, piY, omega, bx, slope, icpt, zmin, Lx, Ly, z, w, buf)
    nfev = n + 1
    xbar = np.empty(n)
    xr = np.empty(n)
    xe = np.empty(n)
    xc = np.empty(n)
    while nfev < maxfev:
        order = np.argsort(fv)
        sim = sim[order]
        fv = fv[order]
        if abs(fv[n] - fv[0]) <= ftol * (1.0 + abs(fv[0])):
            break
        for j in range(n):
            s = 0.0
            for i in range(n):
                s += sim[i, j]
            xbar[j] = s / n
        for j in range(n):
            xr[j] = xbar[j] + alpha * (xbar[j] - sim[n, j])
        fr = -_ratio_nb(xr, k, x0, y0, rects, mu, piX, piY, omega, bx, slope, icpt, zmin, Lx, Ly, z, w, buf)
        nfev += 1
        if fr < fv[0]:
            for j in range(n):
                xe[j] = xbar[j] + beta * (xr[j] - xbar[j])
            fe = -_ratio_nb(xe, k, x0, y0, rects, mu, piX, piY, omega, bx, slope, icpt, zmin, Lx, Ly, z, w, buf)
            nfev += 1
            if fe < fr:
                sim[n] = xe
                fv[n] = fe
            else:
                sim[n] = xr
                fv[n] = fr
        elif fr < fv[n - 1]:
            sim[n] = xr
            fv[n] = fr
        else:
            if fr < fv[n]:
                for j in range(n):
                    xc[j] = xbar[j] + gamma * (xr[j] - xbar[j])
            else:
                for j in range(n):
                    xc[j] = xbar[j] - gamma * (xbar[j] - sim[n, j])
            fc = -_ratio_nb(xc, k, x0, y0, rects, mu, piX, piY, omega, bx, slope, icpt, zmin, Lx, Ly, z, w, buf)
            nfev += 1
            if fc < min(fr, fv[n]):
                sim[n] = xc
                fv[n] = fc
            else:
                for i in range(1, n + 1):
                    for j in range(n):
                        sim[i, j] = sim[0, j] + delta * (sim[i, j] - sim[0, j])
                    fv[i] = -_ratio_nb(sim[i], k, x0, y0, rects, mu, piX, piY, omega, bx, slope, icpt, zmin, Lx, Ly, z, w, buf)
                nfev += n
    best = np.argmin(fv)
    return sim[best].copy(), -fv[best], nfev


def decode_params(t, k, zmin, Lx, Ly):
    """Map unconstrained search coordinates to ``(z, w)`` inside the pricing box."""
    t = np.asarray(t, float)
    z = np.maximum(zmin, np.exp(np.minimum(t[:k], 700.0)))
    w = np.empty(k)
    w[0] = max(zmin, math.exp(min(t[k], 700.0)))
    w[1:] = np.maximum(0.0, t[k + 1:])
    if z.sum() > Lx:
        z *= Lx / z.sum()
    if w.sum() > Ly:
        w *= Ly / w.sum()
    return z, w


def encode_params(z, w):
    z = np.asarray(z, float)
    w = np.asarray(w, float)
    return np.concatenate((np.log(z), [math.log(w[0])], w[1:]))


def polish_staircase(t0, step, k, x0, y0, rects, mu, piX, piY, omega, bx, slope, icpt,
                     zmin, Lx, Ly, maxfev, ftol=1e-12):
    """Maximize the reduced-cost ratio locally from ``t0``; returns ``(t, ratio, nfev)``."""
    t0 = np.asarray(t0, float)
    if maxfev <= 0:
        z, w = decode_params(t0, k, zmin, Lx, Ly)
        area, RX, RY, s, ro = staircase_eval(z, w, x0, y0, rects, bx, slope, icpt)
        return t0, (omega * s - piX * RY - piY * RX - float(mu @ ro)) / area, 0
    if USE_NUMBA:
        t, val, nfev = _nelder_mead_nb(t0, np.asarray(step, float), k, float(x0), float(y0), rects, mu,
                                       float(piX), float(piY), float(omega), bx, slope, icpt,
                                       float(zmin), float(Lx), float(Ly), int(maxfev), float(ftol))
        return t, float(val), int(nfev)
    from scipy.optimize import minimize

    def obj(t):
        z, w = decode_params(t, k, zmin, Lx, Ly)
        area, RX, RY, s, ro = staircase_eval(z, w, x0, y0, rects, bx, slope, icpt)
        if not area > 0:
            return INF
        return -(omega * s - piX * RY - piY * RX - float(mu @ ro)) / area

    init = np.vstack([t0] + [t0 + np.eye(len(t0))[i] * step[i] for i in range(len(t0))])
    res = minimize(obj, t0, method="Nelder-Mead",
                   options={"maxfev": int(maxfev), "fatol": ftol, "xatol": 0.0,
                            "adaptive": True, "initial_simplex": init})
    return res.x, float(-res.fun), int(res.nfev)


# ---------------------------------------------------------------------------
# uniform sampling on mixtures of staircases
# ---------------------------------------------------------------------------

@njit
def _map_uniforms_nb(u, edges, heights, offsets, cum_p, cum_area, y0):
    m = u.shape[0]
    xs = np.empty(m)
    ys = np.empty(m)
    for r in range(m):
        a = np.searchsorted(cum_p, u[r, 0], side="right")
        if a >= cum_p.shape[0]:
            a = cum_p.shape[0] - 1
        lo = offsets[a]
        hi = offsets[a + 1]
        tot = cum_area[hi - 1]
        s = lo + np.searchsorted(cum_area[lo:hi], u[r, 1] * tot, side="right")
        if s >= hi:
            s = hi - 1
        # step s spans edges[s + a] .. edges[s + a + 1] (edges carry one extra entry per atom)
        left = edges[s + a]
        right = edges[s + a + 1]
        xs[r] = left + u[r, 2] * (right - left)
        ys[r] = y0 + u[r, 3] * (heights[s] - y0)
    return xs, ys


def _map_uniforms_np(u, edges, heights, offsets, cum_p, cum_area, y0):
    a = np.minimum(np.searchsorted(cum_p, u[:, 0], side="right"), len(cum_p) - 1)
    lo = offsets[a]
    hi = offsets[a + 1]
    # per-atom cumulative areas restart at zero; atom j occupies (j, j + 1] on this ladder
    counts = np.diff(offsets)
    base = np.repeat(np.arange(len(counts), dtype=float), counts)
    ladder = base + cum_area / np.repeat(cum_area[offsets[1:] - 1], counts)
    s = np.searchsorted(ladder, a + u[:, 1], side="right")
    s = np.clip(s, lo, hi - 1)
    left = edges[s + a]
    right = edges[s + a + 1]
    xs = left + u[:, 2] * (right - left)
    ys = y0 + u[:, 3] * (heights[s] - y0)
    return xs, ys


def map_uniforms(u, edges, heights, offsets, cum_p, cum_area, y0):
    """Turn rows of 4 uniforms into points drawn uniformly from mixture atoms.

    The atom is picked by ``cum_p``; the step within the atom by area
    (``cum_area``), then the point is uniform in that step's rectangle.
    """
    fn = _map_uniforms_nb if USE_NUMBA else _map_uniforms_np
    return fn(np.ascontiguousarray(u), edges, heights, offsets, cum_p, cum_area, float(y0))


# ---------------------------------------------------------------------------
# three-step search: (b_hi on (x_lo, s], v on (s, t], b_lo on (t, x_hi])
# ---------------------------------------------------------------------------

@njit
def _three_step_grid_nb(x_lo, x_hi, b_lo, b_hi, mass, y0, bx, slope, icpt, cells):
    W = x_hi - x_lo
    n = cells + 1
    xs = np.empty(n)
    for i in range(n):
        xs[i] = x_lo + W * i / cells
    xs[n - 1] = x_hi
    ghi = np.empty(n)
    glo = np.empty(n)
    for i in range(n):
        ghi[i] = _excess_nb(x_lo, xs[i], b_hi, y0, bx, slope, icpt)
        glo[i] = _excess_nb(xs[i], x_hi, b_lo, y0, bx, slope, icpt)
    tol = 1e-12 * max(1.0, abs(b_hi))
    best = -INF
    bs = x_lo
    bt = x_hi
    bv = b_lo
    for i in range(n):
        for j in range(i + 1, n):
            s = xs[i]
            t = xs[j]
            v = (mass - b_hi * (s - x_lo) - b_lo * (x_hi - t)) / (t - s)
            if v < b_lo - tol or v > b_hi + tol:
                continue
            v = min(b_hi, max(b_lo, v))
            val = ghi[i] + _excess_nb(s, t, v, y0, bx, slope, icpt) + glo[j]
            if val > best:
                best = val
                bs = s
                bt = t
                bv = v
    return best, bs, bt, bv


def _three_step_grid_np(x_lo, x_hi, b_lo, b_hi, mass, y0, bx, slope, icpt, cells):
    xs = x_lo + (x_hi - x_lo) * np.arange(cells + 1) / cells
    xs[-1] = x_hi
    ghi = _excess_np(np.full_like(xs, x_lo), xs, b_hi, y0, bx, slope, icpt)
    glo = _excess_np(xs, np.full_like(xs, x_hi), b_lo, y0, bx, slope, icpt)
    i, j = np.triu_indices(cells + 1, k=1)
    s = xs[i]
    t = xs[j]
    v = (mass - b_hi * (s - x_lo) - b_lo * (x_hi - t)) / (t - s)
    tol = 1e-12 * max(1.0, abs(b_hi))
    ok = (v >= b_lo - tol) & (v <= b_hi + tol)
    if not ok.any():
        return -INF, x_lo, x_hi, b_lo
    i, j, s, t = i[ok], j[ok], s[ok], t[ok]
    v = np.clip(v[ok], b_lo, b_hi)
    val = ghi[i] + _excess_np(s, t, v, y0, bx, slope, icpt) + glo[j]
    m = int(np.argmax(val))
    return float(val[m]), float(s[m]), float(t[m]), float(v[m])


def three_step_grid(x_lo, x_hi, b_lo, b_hi, mass, y0, bx, slope, icpt, cells):
    """Best member of the one-free-block family over a uniform breakpoint grid.

    Returns ``(objective, s, t, v)``; objective is ``-inf`` when no grid pair is feasible.
    """
    fn = _three_step_grid_nb if USE_NUMBA else _three_step_grid_np
    out = fn(float(x_lo), float(x_hi), float(b_lo), float(b_hi), float(mass), float(y0),
             bx, slope, icpt, int(cells))
    return tuple(float(o) for o in out)
