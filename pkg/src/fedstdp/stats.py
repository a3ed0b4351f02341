"""Paired and two-sample statistics: Wilcoxon signed-rank, bootstrap CI,
Cohen's d, and Welch's t-test.

Nothing here depends on an external stats package.  The t-distribution
tail uses the regularized incomplete beta function evaluated by its
continued fraction (modified Lentz).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, ShapeError, UndefinedEffectError
from .rng import SeededRng

EXACT_MAX_M = 20
ALTERNATIVES = ("two-sided", "greater", "less")


@dataclass(frozen=True, eq=False)
class PairedSample:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if x.ndim != 1 or x.shape != y.shape:
            raise ShapeError(f"paired samples need equal 1-D shapes, got {x.shape} and {y.shape}")
        if x.shape[0] < 1:
            raise ArgumentError("paired sample is empty")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def diffs(self) -> np.ndarray:
        return self.x - self.y


# -- Wilcoxon signed-rank -----------------------------------------------------

@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float      # min(W+, W-)
    pvalue: float
    w_plus: float
    n_effective: int      # differences left after dropping zeros
    n_zero: int
    method: str           # "exact", "normal" or "degenerate"
    alternative: str = "two-sided"

    @property
    def degenerate(self) -> bool:
        return self.method == "degenerate"


def average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the mean of their positions."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.shape[0])
    sorted_v = values[order]
    i = 0
    while i < len(sorted_v):
        j = i
        while j + 1 < len(sorted_v) and sorted_v[j + 1] == sorted_v[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def signed_rank_null_counts(ranks: np.ndarray) -> np.ndarray:
    """Number of sign assignments giving each value of ``2 * W+``.

    Doubled ranks are integers even with averaged ties, so a subset-sum
    table enumerates all ``2**m`` assignments exactly.
    """
    doubled = np.rint(2 * np.asarray(ranks)).astype(np.int64)
    counts = np.zeros(int(doubled.sum()) + 1, dtype=object)
    counts[0] = 1
    for r in doubled:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:counts.shape[0] - r]
        counts = counts + shifted
    return counts


def _normal_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def wilcoxon_signed_rank(x, y=None, alternative: str = "two-sided") -> WilcoxonResult:
    """Signed-rank test of ``x - y`` (or of ``x`` alone when ``y`` is None).

    Zero differences are dropped.  ``alternative="greater"`` tests whether
    ``x`` tends to exceed ``y``.
    """
    if alternative not in ALTERNATIVES:
        raise ArgumentError(f"alternative must be one of {ALTERNATIVES}")
    d = PairedSample(x, np.zeros_like(np.asarray(x, dtype=float)) if y is None else y).diffs
    nz = d[d != 0]
    m, n_zero = nz.shape[0], d.shape[0] - nz.shape[0]
    if m == 0:
        return WilcoxonResult(0.0, 1.0, 0.0, 0, n_zero, "degenerate", alternative)
    ranks = average_ranks(np.abs(nz))
    w_plus = float(ranks[nz > 0].sum())
    total = m * (m + 1) / 2.0
    w_minus = total - w_plus
    stat = min(w_plus, w_minus)
    if m <= EXACT_MAX_M:
        counts = signed_rank_null_counts(ranks)
        denom = 2 ** m
        k = int(round(2 * w_plus))

        def at_most(v):
            return int(counts[:v + 1].sum()) / denom

        def at_least(v):
            return int(counts[v:].sum()) / denom

        if alternative == "greater":
            p = at_least(k)
        elif alternative == "less":
            p = at_most(k)
        else:
            p = min(1.0, 2.0 * at_most(int(round(2 * stat))))
        method = "exact"
    else:
        mu = total / 2.0
        _, tie_counts = np.unique(np.abs(nz), return_counts=True)
        var = m * (m + 1) * (2 * m + 1) / 24.0 - float(((tie_counts ** 3) - tie_counts).sum()) / 48.0
        sd = math.sqrt(var)
        if alternative == "greater":
            p = 1.0 - _normal_cdf((w_plus - mu - 0.5) / sd)
        elif alternative == "less":
            p = _normal_cdf((w_plus - mu + 0.5) / sd)
        else:
            z = max(abs(w_plus - mu) - 0.5, 0.0) / sd
            p = min(1.0, 2.0 * (1.0 - _normal_cdf(z)))
        method = "normal"
    return WilcoxonResult(stat, float(p), w_plus, m, n_zero, method, alternative)


# -- bootstrap ----------------------------------------------------------------

def bootstrap_means(diffs, B: int, rng: SeededRng) -> np.ndarray:
    """Means of ``B`` resamples; resample ``b`` draws from substream ``b``."""
    d = np.asarray(diffs, dtype=np.float64)
    n = d.shape[0]
    bank = rng.substreams(B, "bootstrap")
    idx = np.empty((B, n), dtype=np.int64)
    for j in range(n):
        idx[:, j] = bank.below(n).astype(np.int64)
    return d[idx].mean(axis=1)


def bootstrap_ci(diffs, level: float = 0.95, B: int = 10000, rng: SeededRng | None = None) -> tuple[float, float]:
    """Percentile interval of the resampled mean."""
    d = np.asarray(diffs, dtype=np.float64)
    if d.ndim != 1 or d.shape[0] < 2:
        raise ArgumentError("bootstrap needs at least two values")
    if not 0 < level < 1:
        raise ArgumentError("level must lie in (0, 1)")
    if B < 1:
        raise ArgumentError("B must be >= 1")
    if np.all(d == d[0]):
        return float(d[0]), float(d[0])
    means = bootstrap_means(d, B, rng or SeededRng(0))
    alpha = (1.0 - level) / 2.0
    lo, hi = np.percentile(means, [100 * alpha, 100 * (1 - alpha)])
    return float(lo), float(hi)


# -- effect size --------------------------------------------------------------

def cohens_d_paired(diffs) -> float:
    d = np.asarray(diffs, dtype=np.float64)
    if d.ndim != 1 or d.shape[0] < 2:
        raise ArgumentError("Cohen's d needs at least two differences")
    sd = d.std(ddof=1)
    if sd == 0:
        raise UndefinedEffectError("differences have zero variance; effect size is undefined")
    return float(d.mean() / sd)


# -- Welch's t ----------------------------------------------------------------

def _betacf(a: float, b: float, x: float, max_iter: int = 500, eps: float = 1e-15) -> float:
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    return h


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta ``I_x(a, b)``."""
    if not (a > 0 and b > 0):
        raise ArgumentError("betainc needs a, b > 0")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _betacf(b, a, 1.0 - x) / b


def t_two_sided_p(t: float, dof: float) -> float:
    if math.isinf(t):
        return 0.0
    return betainc_reg(dof / 2.0, 0.5, dof / (dof + t * t))


def welch_t(x, y) -> tuple[float, float, float]:
    """``(t, two-sided p, Welch-Satterthwaite dof)`` for ``mean(x) - mean(y)``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape[0] < 2 or y.shape[0] < 2:
        raise ArgumentError("Welch's t needs at least two values per sample")
    nx, ny = x.shape[0], y.shape[0]
    vx, vy = x.var(ddof=1) / nx, y.var(ddof=1) / ny
    diff = x.mean() - y.mean()
    se2 = vx + vy
    if se2 == 0:
        if diff == 0:
            return 0.0, 1.0, float(nx + ny - 2)
        return math.copysign(math.inf, diff), 0.0, float(nx + ny - 2)
    dof = se2 ** 2 / (vx ** 2 / (nx - 1) + vy ** 2 / (ny - 1))
    t = diff / math.sqrt(se2)
    return float(t), float(t_two_sided_p(t, dof)), float(dof)


# -- report helper --------------------------------------------------------------

def paired_comparison(x, y, rng: SeededRng | None = None, B: int = 10000, level: float = 0.95) -> dict:
    """Mean difference, bootstrap CI, Cohen's d and Wilcoxon p for ``x - y``."""
    ps = PairedSample(x, y)
    d = ps.diffs
    out = {"n": ps.n, "mean_x": float(ps.x.mean()), "mean_y": float(ps.y.mean()), "delta": float(d.mean())}
    if ps.n >= 2:
        out["ci_lo"], out["ci_hi"] = bootstrap_ci(d, level, B, rng)
        try:
            out["d"] = cohens_d_paired(d)
        except UndefinedEffectError:
            out["d"] = None
    else:
        out["ci_lo"] = out["ci_hi"] = out["d"] = None
    w = wilcoxon_signed_rank(ps.x, ps.y)
    out.update(p=w.pvalue, wilcoxon_w=w.statistic, n_effective=w.n_effective, wilcoxon_method=w.method)
    return out
