"""Data-driven uncertainty sets with a joint 1 - alpha guarantee.

Seven quantities are calibrated (tail mass interval, two density caps, two
families of KS bands, and the two conditioning probabilities inside the caps
share their cap's slot), so each one gets level ``1 - alpha / 7``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constraints import ConstraintSet, MomentRow
from .errors import CalibrationError
from .geometry import AxisRectangle
from .presets import PERCENTILE_PRESETS

INF = math.inf
BOOTSTRAP_FLOOR = 200
MIN_CONDITIONED = 30
_LEVEL_CAP = 1.0 - 1e-10


# ---------------------------------------------------------------------------
# normal quantile
# ---------------------------------------------------------------------------

_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00, 3.754408661907416e00)


def norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def norm_ppf(p: float) -> float:
    """Inverse standard normal CDF: rational approximation plus one Newton step."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"probability must be in (0, 1), got {p}")
    if p > 0.5:
        # refine in the lower tail, where the residual keeps full relative precision
        return -norm_ppf(1.0 - p)
    lo = 0.02425
    if p < lo:
        q = math.sqrt(-2 * math.log(p))
        x = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1)
    elif p > 1 - lo:
        q = math.sqrt(-2 * math.log(1 - p))
        x = -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1)
    else:
        q = p - 0.5
        r = q * q
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
            (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1)
    pdf = math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)
    return x - (norm_cdf(x) - p) / pdf


# ---------------------------------------------------------------------------
# elementary bounds
# ---------------------------------------------------------------------------

def clt_interval(indicators, level: float) -> tuple[float, float]:
    """``mean -/+ z_level * sd / sqrt(m)`` (sample sd, ``ddof=1``), clipped to [0, 1]."""
    x = np.asarray(indicators, float).ravel()
    if x.size < 2:
        raise CalibrationError("clt_interval: need at least 2 observations")
    if not 0.0 < level < 1.0:
        raise CalibrationError(f"clt_interval: level must be in (0, 1), got {level}")
    mean = float(x.mean())
    half = norm_ppf(level) * float(x.std(ddof=1)) / math.sqrt(x.size)
    return max(0.0, mean - half), min(1.0, mean + half)


def kolmogorov_cdf(x: float, tol: float = 1e-12) -> float:
    """``P(sup |BB| <= x) = 1 - 2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 x^2)``."""
    if x <= 0:
        return 0.0
    if x < 0.2:
        # the alternating series converges slowly here; the value is below 1e-20 anyway
        return 0.0
    s = 0.0
    k = 1
    while True:
        term = math.exp(-2.0 * k * k * x * x)
        s += term if k % 2 else -term
        if term < tol:
            break
        k += 1
    return max(0.0, min(1.0, 1.0 - 2.0 * s))


def kolmogorov_quantile(level: float) -> float:
    """Quantile of the Kolmogorov distribution by bisection; ``level`` capped at ``1 - 1e-10``."""
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0, 1), got {level}")
    level = min(level, _LEVEL_CAP)
    lo, hi = 0.2, 1.0
    while kolmogorov_cdf(hi) < level:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if kolmogorov_cdf(mid) < level:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13:
            break
    return 0.5 * (lo + hi)


def ks_bounds(values, thresholds, level: float) -> list[tuple[float, float]]:
    """Simultaneous bands ``a <= F(t) <= b`` from the KS statistic at each threshold.

    ``a = F(t) - q / sqrt(m1)`` and ``b = F(t-) + q / sqrt(m1)``.  When ties at
    ``t`` would push ``b`` below ``a`` the upper end uses ``F(t)`` instead.
    """
    v = np.sort(np.asarray(values, float).ravel())
    if v.size == 0:
        raise CalibrationError("ks_bounds: empty tail sample")
    q = kolmogorov_quantile(level)
    eps = q / math.sqrt(v.size)
    out = []
    for t in np.asarray(thresholds, float).ravel():
        F = np.searchsorted(v, t, side="right") / v.size
        F_left = np.searchsorted(v, t, side="left") / v.size
        a = max(0.0, F - eps)
        b = min(1.0, F_left + eps)
        if b < a:
            b = min(1.0, F + eps)
        out.append((float(a), float(b)))
    return out


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CalibrationConfig:
    """Top-percent levels: ``threshold_percentiles=(10, 10)`` puts the mode at the 90% quantiles."""

    alpha: float = 0.05
    threshold_percentiles: tuple = (10.0, 10.0)
    moment_percentiles_x: tuple = (8.0, 6.0, 4.0, 2.0, 1.0)
    moment_percentiles_y: tuple = (8.0, 6.0, 4.0, 2.0, 1.0)
    bootstrap_reps: int = 1000
    bandwidth_rule: str = "silverman"
    reflect: bool = False
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise CalibrationError("config: alpha must be in (0, 1)")
        if self.bootstrap_reps < BOOTSTRAP_FLOOR:
            raise CalibrationError(f"config: bootstrap_reps must be >= {BOOTSTRAP_FLOOR}")
        if self.bandwidth_rule not in ("silverman", "scott"):
            raise CalibrationError(f"config: unknown bandwidth rule {self.bandwidth_rule!r}")
        for name, top, lst in (("x", self.threshold_percentiles[0], self.moment_percentiles_x),
                               ("y", self.threshold_percentiles[1], self.moment_percentiles_y)):
            if not 0.0 < top < 100.0:
                raise CalibrationError(f"config: threshold percentile for {name} must be in (0, 100)")
            seq = (top,) + tuple(lst)
            if any(b >= a for a, b in zip(seq, seq[1:])) or any(p <= 0 for p in lst):
                raise CalibrationError(
                    f"config: {name} moment percentiles must lie strictly inside the threshold, in order")

    @property
    def n_X(self) -> int:
        return len(self.moment_percentiles_x)

    @property
    def n_Y(self) -> int:
        return len(self.moment_percentiles_y)

    @property
    def level(self) -> float:
        return 1.0 - self.alpha / 7.0

    @classmethod
    def from_preset(cls, name: str, **kw) -> "CalibrationConfig":
        try:
            top = PERCENTILE_PRESETS[str(name)]
        except KeyError:
            raise CalibrationError(f"config: unknown preset {name!r}") from None
        return cls(threshold_percentiles=(top[0], top[0]), moment_percentiles_x=top[1:],
                   moment_percentiles_y=top[1:], **kw)


@dataclass(frozen=True)
class SampleSet:
    points: np.ndarray = field(repr=False)

    def __post_init__(self):
        pts = np.asarray(self.points, float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise CalibrationError("samples: expected an (m, 2) array")
        if pts.shape[0] < 2:
            raise CalibrationError("samples: need m >= 2")
        if not np.all(np.isfinite(pts)):
            raise CalibrationError("samples: coordinates must be finite")
        object.__setattr__(self, "points", pts)

    @property
    def m(self) -> int:
        return int(self.points.shape[0])

    @property
    def x(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.points[:, 1]


def top_percentile(values, top: float) -> float:
    """Order statistic at ``ceil(q m)`` with ``q = 1 - top / 100``."""
    v = np.sort(np.asarray(values, float))
    q = 1.0 - top / 100.0
    i = min(max(int(math.ceil(q * v.size)), 1), v.size)
    return float(v[i - 1])


# ---------------------------------------------------------------------------
# density cap
# ---------------------------------------------------------------------------

def bandwidth(x: np.ndarray, rule: str = "silverman") -> float:
    n = x.size
    sd = float(np.std(x, ddof=1)) if n > 1 else 0.0
    if rule == "scott":
        return 1.06 * sd * n ** -0.2
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    return 0.9 * spread * n ** -0.2


def _bootstrap_seed(seed: int, axis: str) -> list:
    return [seed, 0 if axis == "X" else 1]


def density_upper_bound(samples: SampleSet, axis: str, x0: float, y0: float, level: float,
                        cfg: CalibrationConfig) -> float:
    """Upper bound on the tail-truncated marginal density at the mode.

    For ``axis="X"``: bootstrap ``level``-quantile of the Gaussian KDE of X at
    ``x0`` among samples with ``Y >= y0``, times the CLT upper bound of
    ``P(Y >= y0)``.  The bandwidth is fixed from the conditioned sample.
    """
    if axis not in ("X", "Y"):
        raise CalibrationError(f"density_upper_bound: axis must be 'X' or 'Y', got {axis!r}")
    if cfg.bootstrap_reps < BOOTSTRAP_FLOOR:
        raise CalibrationError(f"density_upper_bound: bootstrap_reps must be >= {BOOTSTRAP_FLOOR}")
    own, other, at, cut = (samples.x, samples.y, x0, y0) if axis == "X" else (samples.y, samples.x, y0, x0)
    cond = other >= cut
    sub = own[cond]
    if sub.size < MIN_CONDITIONED:
        raise CalibrationError(
            f"density_upper_bound[{axis}]: only {sub.size} samples pass the conditioning event "
            f"(need {MIN_CONDITIONED}); raise the threshold percentile")
    h = bandwidth(sub, cfg.bandwidth_rule)
    if not h > 0:
        return INF
    u = (at - sub) / h
    kern = np.exp(-0.5 * u * u) / (h * math.sqrt(2 * math.pi))
    if cfg.reflect:
        # boundary-corrected estimate from the right of the mode
        kern = np.where(sub >= at, 2.0 * kern, 0.0)
    m0 = sub.size
    base = _bootstrap_seed(cfg.rng_seed, axis)
    est = np.empty(cfg.bootstrap_reps)
    for b in range(cfg.bootstrap_reps):
        rng = np.random.default_rng(base + [b])
        est[b] = kern[rng.integers(0, m0, m0)].mean()
    f_cond = float(np.quantile(est, level))
    p_hi = clt_interval(cond.astype(float), level)[1]
    return f_cond * p_hi


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

def calibrate(samples: SampleSet, cfg: CalibrationConfig = CalibrationConfig()) -> ConstraintSet:
    level = cfg.level
    x0 = top_percentile(samples.x, cfg.threshold_percentiles[0])
    y0 = top_percentile(samples.y, cfg.threshold_percentiles[1])
    tail = (samples.x >= x0) & (samples.y >= y0)
    # two-sided interval at level 1 - alpha/7
    lF, uF = clt_interval(tail.astype(float), 1.0 - cfg.alpha / 14.0)
    uX = density_upper_bound(samples, "X", x0, y0, level, cfg)
    uY = density_upper_bound(samples, "Y", x0, y0, level, cfg)
    if not tail.any():
        raise CalibrationError("ks_bounds: no sample falls in the joint tail; lower the threshold percentile")
    tx, ty = samples.x[tail], samples.y[tail]
    xs = [top_percentile(samples.x, p) for p in cfg.moment_percentiles_x]
    ys = [top_percentile(samples.y, p) for p in cfg.moment_percentiles_y]
    rows = []
    for xi, (a, b) in zip(xs, ks_bounds(tx, xs, level)):
        rows.append(MomentRow(AxisRectangle(x0, max(xi, x0), y0, INF), a, b, conditional=True))
    for yj, (a, b) in zip(ys, ks_bounds(ty, ys, level)):
        rows.append(MomentRow(AxisRectangle(x0, INF, y0, max(yj, y0)), a, b, conditional=True))
    return ConstraintSet(x0, y0, lF, uF, uX, uY, tuple(rows))


def sample_normal(m: int, seed: int, sigma: float = 4.0) -> np.ndarray:
    """``m`` draws of ``N(0, sigma^2 I)`` (numpy's ziggurat normal generator)."""
    if m < 1:
        raise ValueError("need m >= 1")
    return sigma * np.random.default_rng(seed).standard_normal((m, 2))
