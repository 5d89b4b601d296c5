"""Descriptive and inferential statistics used by the analysis plan.

Everything is computed from first principles with numpy (normality via
the Royston AS R94 approximation; rank correlations with tie handling;
OLS with F-test and variance inflation factors). SciPy supplies only
distribution CDFs for p-values. Reference implementations (scipy,
statsmodels) serve as oracles in the test suite, never here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import f as f_dist
from scipy.stats import norm as norm_dist
from scipy.stats import t as t_dist

from .errors import DomainError, RankDeficient, SampleSizeError


@dataclass(frozen=True)
class Series:
    values: Tuple[float, ...]
    label: str = ""

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if any(not math.isfinite(v) for v in vals):
            raise DomainError(f"series {self.label!r} contains non-finite values")
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.values)

    def to_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    test_name: str
    n: int

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p-value {self.p_value} outside [0, 1]")


class Descriptives(NamedTuple):
    n: int
    mean: float
    std: float
    minimum: float
    maximum: float


def descriptive(s: Series) -> Descriptives:
    """Sample size, mean, sample (n-1) standard deviation, min, max."""
    if len(s) == 0:
        raise DomainError("cannot describe an empty series")
    x = s.to_array()
    std = float(x.std(ddof=1)) if len(x) > 1 else 0.0
    return Descriptives(len(x), float(x.mean()), std, float(x.min()), float(x.max()))


# -- Shapiro-Wilk (Royston AS R94) ----------------------------------------

_C1 = (0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056)
_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_C3 = (0.5440, -0.39978, 0.025054, -0.0006714)
_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_C6 = (-0.4803, -0.082676, 0.0030302)


def _poly(coeffs: Sequence[float], x: float) -> float:
    return sum(c * x ** i for i, c in enumerate(coeffs))


def shapiro_wilk(s: Series) -> TestResult:
    """Normality test for 3 <= n <= 5000 samples.

    W close to one is consistent with normality; the p-value follows
    Royston's normalizing transformation of W.
    """
    n = len(s)
    if n < 3 or n > 5000:
        raise SampleSizeError(f"Shapiro-Wilk requires 3 <= n <= 5000, got {n}")
    x = np.sort(s.to_array())
    if x[0] == x[-1]:
        raise DomainError("all values identical; W undefined")

    m = norm_dist.ppf((np.arange(1, n + 1) - 0.375) / (n + 0.25))
    mm = float(m @ m)
    c = m / math.sqrt(mm)
    u = 1.0 / math.sqrt(n)
    a = np.empty(n)
    if n == 3:
        a[0], a[2] = -math.sqrt(0.5), math.sqrt(0.5)
        a[1] = 0.0
    else:
        a_n = c[-1] + (_C1[1] * u + _C1[2] * u ** 2 + _C1[3] * u ** 3
                       + _C1[4] * u ** 4 + _C1[5] * u ** 5)
        if n > 5:
            a_n1 = c[-2] + (_C2[1] * u + _C2[2] * u ** 2 + _C2[3] * u ** 3
                            + _C2[4] * u ** 4 + _C2[5] * u ** 5)
            phi = (mm - 2.0 * m[-1] ** 2 - 2.0 * m[-2] ** 2) / (1.0 - 2.0 * a_n ** 2 - 2.0 * a_n1 ** 2)
            a[2:-2] = m[2:-2] / math.sqrt(phi)
            a[-2], a[1] = a_n1, -a_n1
        else:
            phi = (mm - 2.0 * m[-1] ** 2) / (1.0 - 2.0 * a_n ** 2)
            a[1:-1] = m[1:-1] / math.sqrt(phi)
        a[-1], a[0] = a_n, -a_n

    xbar = x.mean()
    ssq = float(((x - xbar) ** 2).sum())
    w_num = float(a @ x) ** 2
    w = w_num / ssq
    w = min(w, 1.0)

    if n == 3:
        p = (6.0 / math.pi) * (math.asin(math.sqrt(w)) - math.asin(math.sqrt(0.75)))
        p = min(max(p, 0.0), 1.0)
        return TestResult(statistic=w, p_value=p, test_name="shapiro_wilk", n=n)
    if n <= 11:
        gamma = -2.273 + 0.459 * n
        arg = gamma - math.log(1.0 - w)
        if arg <= 0:
            return TestResult(statistic=w, p_value=0.0, test_name="shapiro_wilk", n=n)
        y = -math.log(arg)
        mu = _poly(_C3, n)
        sigma = math.exp(_poly(_C4, n))
    else:
        ln_n = math.log(n)
        y = math.log(1.0 - w)
        mu = _poly(_C5, ln_n)
        sigma = math.exp(_poly(_C6, ln_n))
    z = (y - mu) / sigma
    p = float(norm_dist.sf(z))
    return TestResult(statistic=w, p_value=min(max(p, 0.0), 1.0), test_name="shapiro_wilk", n=n)


# -- correlations ----------------------------------------------------------

def _check_paired(x: Series, y: Series, min_n: int = 3) -> int:
    if len(x) != len(y):
        raise DomainError("series lengths differ")
    if len(x) < min_n:
        raise SampleSizeError(f"need at least {min_n} pairs, got {len(x)}")
    return len(x)


def _t_p_value(r: float, n: int) -> float:
    if abs(r) >= 1.0:
        return 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return float(2.0 * t_dist.sf(abs(t), n - 2))


def pearson(x: Series, y: Series) -> TestResult:
    n = _check_paired(x, y)
    a, b = x.to_array(), y.to_array()
    if a.std() == 0 or b.std() == 0:
        raise DomainError("zero variance; correlation undefined")
    r = float(((a - a.mean()) @ (b - b.mean()))
              / math.sqrt(((a - a.mean()) ** 2).sum() * ((b - b.mean()) ** 2).sum()))
    r = min(max(r, -1.0), 1.0)
    return TestResult(statistic=r, p_value=_t_p_value(r, n), test_name="pearson", n=n)


def average_ranks(values: Sequence[float]) -> np.ndarray:
    """Ranks 1..n with ties replaced by their average rank."""
    arr = np.asarray(values, dtype=float)
    order = np.argsort(arr, kind="mergesort")
    ranks = np.empty(len(arr))
    i = 0
    while i < len(arr):
        j = i
        while j + 1 < len(arr) and arr[order[j + 1]] == arr[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x: Series, y: Series) -> TestResult:
    """Pearson correlation of average ranks, with a t-based p-value."""
    n = _check_paired(x, y)
    rx = Series(tuple(average_ranks(x.values)), label="ranks_x")
    ry = Series(tuple(average_ranks(y.values)), label="ranks_y")
    inner = pearson(rx, ry)
    return TestResult(statistic=inner.statistic, p_value=inner.p_value,
                      test_name="spearman", n=n)


def _mahonian_tail_p(n: int, s_observed: int) -> float:
    """Exact two-sided p for Kendall's S under the null (no ties)."""
    # Number of permutations with k discordant pairs (Mahonian numbers).
    counts = [1]
    for i in range(2, n + 1):
        new = [0] * (len(counts) + i - 1)
        for k, c in enumerate(counts):
            for add in range(i):
                new[k + add] += c
        counts = new
    max_pairs = n * (n - 1) // 2
    total = math.factorial(n)
    # S = concordant - discordant = max_pairs - 2*discordant
    tail = sum(c for d, c in enumerate(counts) if abs(max_pairs - 2 * d) >= abs(s_observed))
    return min(1.0, tail / total)


def kendall_tau(x: Series, y: Series) -> TestResult:
    """Tau-b with tie correction; exact null p-value for small untied
    samples, normal approximation otherwise."""
    n = _check_paired(x, y)
    a, b = x.to_array(), y.to_array()
    concordant = discordant = 0
    for i in range(n):
        for j in range(i + 1, n):
            prod = (a[i] - a[j]) * (b[i] - b[j])
            if prod > 0:
                concordant += 1
            elif prod < 0:
                discordant += 1
    s_stat = concordant - discordant

    def tie_groups(vals):
        _, counts = np.unique(vals, return_counts=True)
        return counts[counts > 1]

    tx, ty = tie_groups(a), tie_groups(b)
    n0 = n * (n - 1) / 2.0
    n1 = float(sum(t * (t - 1) / 2.0 for t in tx))
    n2 = float(sum(t * (t - 1) / 2.0 for t in ty))
    denom = math.sqrt((n0 - n1) * (n0 - n2))
    if denom == 0:
        raise DomainError("all values tied; tau undefined")
    tau = s_stat / denom
    tau = min(max(tau, -1.0), 1.0)

    if n < 10 and len(tx) == 0 and len(ty) == 0:
        p = _mahonian_tail_p(n, s_stat)
    else:
        v0 = n * (n - 1) * (2 * n + 5)
        vt = sum(t * (t - 1) * (2 * t + 5) for t in tx)
        vu = sum(t * (t - 1) * (2 * t + 5) for t in ty)
        v1 = (sum(t * (t - 1) for t in tx) * sum(t * (t - 1) for t in ty)
              / (2.0 * n * (n - 1)))
        v2 = (sum(t * (t - 1) * (t - 2) for t in tx) * sum(t * (t - 1) * (t - 2) for t in ty)
              / (9.0 * n * (n - 1) * (n - 2)))
        var = (v0 - vt - vu) / 18.0 + v1 + v2
        if var <= 0:
            p = 1.0
        else:
            z = s_stat / math.sqrt(var)
            p = float(2.0 * norm_dist.sf(abs(z)))
    return TestResult(statistic=tau, p_value=min(p, 1.0), test_name="kendall_tau", n=n)


# -- agreement -------------------------------------------------------------

def cohens_kappa(r1: Sequence, r2: Sequence) -> float:
    """Chance-corrected agreement between two categorical raters."""
    if len(r1) != len(r2):
        raise DomainError("rating vectors must have equal length")
    if len(r1) == 0:
        raise DomainError("rating vectors must be non-empty")
    n = len(r1)
    p_o = sum(1 for a, b in zip(r1, r2) if a == b) / n
    categories = set(r1) | set(r2)
    p_e = sum((list(r1).count(c) / n) * (list(r2).count(c) / n) for c in categories)
    if p_e == 1.0:
        return 1.0  # both raters constant and identical
    return (p_o - p_e) / (1.0 - p_e)


def kappa_gate(kappa: float, threshold: float = 0.7) -> bool:
    """The consensus gate: agreement is sufficient at or above threshold."""
    return kappa >= threshold


# -- regression ------------------------------------------------------------

@dataclass(frozen=True)
class OlsResult:
    coefficients: Tuple[float, ...]  # intercept first
    residuals: Tuple[float, ...]
    r_squared: float
    f_statistic: float
    f_p_value: float
    n: int
    n_predictors: int
    rss: float

    @property
    def df_resid(self) -> int:
        return self.n - self.n_predictors - 1


def _design(X: Sequence[Sequence[float]]) -> np.ndarray:
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.size == 0:
        arr = arr.reshape(0, 0)
    return arr


def ols_regression(X: Sequence[Sequence[float]], y: Series) -> OlsResult:
    """Least squares of y on the predictor columns of X plus an intercept."""
    predictors = _design(X)
    n = len(y)
    if predictors.shape[0] not in (0, n):
        raise DomainError("X row count must match y length")
    k = predictors.shape[1] if predictors.shape[0] else 0
    if n < k + 2:
        raise SampleSizeError(f"need at least {k + 2} rows for {k} predictors")
    design = np.column_stack([np.ones(n)] + ([predictors] if k else []))
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise RankDeficient("design matrix has exactly collinear columns")
    target = y.to_array()
    coef, _, _, _ = np.linalg.lstsq(design, target, rcond=None)
    fitted = design @ coef
    residuals = target - fitted
    rss = float(residuals @ residuals)
    tss = float(((target - target.mean()) ** 2).sum())
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    if k == 0 or rss == 0 or r2 >= 1.0:
        f_stat, f_p = (math.inf if k and rss == 0 else 0.0), (0.0 if k and rss == 0 else 1.0)
    else:
        f_stat = (r2 / k) / ((1.0 - r2) / (n - k - 1))
        f_p = float(f_dist.sf(f_stat, k, n - k - 1))
    return OlsResult(coefficients=tuple(float(c) for c in coef),
                     residuals=tuple(float(r) for r in residuals),
                     r_squared=r2, f_statistic=f_stat, f_p_value=f_p,
                     n=n, n_predictors=k, rss=rss)


def nested_f_test(null_model: OlsResult, full_model: OlsResult) -> TestResult:
    """F-test of a restricted model against a fuller one on the same data."""
    if null_model.n != full_model.n:
        raise DomainError("models fit on different sample sizes")
    if null_model.n_predictors > full_model.n_predictors:
        raise DomainError("null model must be nested within the full model")
    df_diff = full_model.n_predictors - null_model.n_predictors
    if df_diff == 0:
        return TestResult(statistic=0.0, p_value=1.0, test_name="nested_f", n=full_model.n)
    df_full = full_model.df_resid
    if df_full <= 0:
        raise SampleSizeError("full model has no residual degrees of freedom")
    if full_model.rss == 0:
        f_stat = math.inf if null_model.rss > 0 else 0.0
    else:
        f_stat = ((null_model.rss - full_model.rss) / df_diff) / (full_model.rss / df_full)
    f_stat = max(f_stat, 0.0)
    p = 0.0 if math.isinf(f_stat) else float(f_dist.sf(f_stat, df_diff, df_full))
    return TestResult(statistic=f_stat, p_value=p, test_name="nested_f", n=full_model.n)


def vif(X: Sequence[Sequence[float]]) -> List[float]:
    """Variance inflation factor of each predictor column (>= 1)."""
    predictors = _design(X)
    n, k = predictors.shape
    if k < 1:
        raise DomainError("need at least one predictor")
    out = []
    for j in range(k):
        others = np.delete(predictors, j, axis=1)
        target = Series(tuple(predictors[:, j]), label=f"col{j}")
        if others.shape[1] == 0:
            out.append(1.0)
            continue
        result = ols_regression(others, target)
        if result.r_squared >= 1.0:
            raise RankDeficient(f"predictor {j} is an exact combination of the others")
        out.append(1.0 / (1.0 - result.r_squared))
    return out
