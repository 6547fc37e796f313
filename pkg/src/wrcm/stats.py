"""Replication-level statistics: count summaries, Poisson goodness of fit,
sub-box uniformity/independence checks and log-log slope regression.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

__all__ = [
    "CountSummary",
    "GofReport",
    "SlopeFit",
    "LowPowerWarning",
    "summarize_counts",
    "poisson_gof",
    "subbox_counts",
    "subbox_counts_test",
    "loglog_slope",
    "dispersion_band",
]

MIN_EXPECTED = 5.0


class LowPowerWarning(UserWarning):
    """Fewer replications than a test needs for reasonable power."""


@dataclass(frozen=True)
class CountSummary:
    counts: np.ndarray
    mean: float
    variance: float
    dispersion: float
    reference_mean: float = 1.0

    @property
    def dispersion_defined(self) -> bool:
        return self.mean > 0

    @property
    def stderr(self) -> float:
        return math.sqrt(self.variance / len(self.counts))

    def mean_z(self) -> float:
        """Standardised distance of the sample mean from the reference."""
        se = self.stderr
        if se == 0:
            return 0.0 if self.mean == self.reference_mean else math.inf
        return (self.mean - self.reference_mean) / se


@dataclass(frozen=True)
class GofReport:
    statistic: float
    dof: int
    p_value: float
    pooled_bins: str
    details: dict = field(default_factory=dict, compare=False)

    @property
    def passed(self) -> bool:
        return self.p_value > 0.01


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    stderr: float
    points: np.ndarray


def summarize_counts(counts, reference_mean: float = 1.0) -> CountSummary:
    """Mean, unbiased variance and dispersion index of per-replication counts.

    With mean zero the dispersion is undefined and reported as NaN.
    """
    counts = np.asarray(counts)
    if counts.ndim != 1 or len(counts) < 2:
        raise ValueError("need at least two replications")
    if np.any(counts < 0) or np.any(counts != np.round(counts)):
        raise ValueError("counts must be non-negative integers")
    mean = float(counts.mean())
    var = float(counts.var(ddof=1))
    disp = var / mean if mean > 0 else math.nan
    return CountSummary(counts.astype(np.int64), mean, var, disp, reference_mean)


def dispersion_band(n: int, width: float = 3.0) -> tuple[float, float]:
    """Acceptance band ``1 +- width * sqrt(2 / (n - 1))`` for the Poisson dispersion index."""
    half = width * math.sqrt(2.0 / (n - 1))
    return 1.0 - half, 1.0 + half


def _pool(expected: np.ndarray, observed: np.ndarray):
    # greedy left-to-right merge until each bin expects >= MIN_EXPECTED; the
    # remainder (including the open right tail) joins the last bin
    bins, exp_out, obs_out = [], [], []
    start, acc_e, acc_o = 0, 0.0, 0
    for j in range(len(expected)):
        acc_e += expected[j]
        acc_o += observed[j]
        if acc_e >= MIN_EXPECTED:
            bins.append((start, j))
            exp_out.append(acc_e)
            obs_out.append(acc_o)
            start, acc_e, acc_o = j + 1, 0.0, 0
    if acc_e > 0 or acc_o > 0:
        if bins:
            bins[-1] = (bins[-1][0], len(expected) - 1)
            exp_out[-1] += acc_e
            obs_out[-1] += acc_o
        else:
            bins.append((start, len(expected) - 1))
            exp_out.append(acc_e)
            obs_out.append(acc_o)
    return bins, np.array(exp_out), np.array(obs_out)


def _describe(bins) -> str:
    parts = []
    for i, (lo, hi) in enumerate(bins):
        if i == len(bins) - 1:
            parts.append(f">={lo}")
        elif lo == hi:
            parts.append(str(lo))
        else:
            parts.append(f"{lo}-{hi}")
    return "|".join(parts)


def poisson_gof(counts, lam: float) -> GofReport:
    """Chi-square goodness of fit of integer counts against Poisson(``lam``).

    Bins are merged until every expected count is at least 5; the last bin
    is the open right tail. Degrees of freedom are ``bins - 1``.
    """
    counts = np.asarray(counts, dtype=np.int64)
    n = len(counts)
    if not lam > 0:
        raise ValueError("Poisson mean must be positive")
    if n < 200:
        warnings.warn(f"only {n} replications; the chi-square test has little power", LowPowerWarning, stacklevel=2)
    top = int(max(counts.max(initial=0), sps.poisson.ppf(1.0 - 1e-12, lam))) + 1
    support = np.arange(top + 1)
    probs = sps.poisson.pmf(support, lam)
    probs[-1] = sps.poisson.sf(top - 1, lam)
    observed = np.bincount(np.minimum(counts, top), minlength=top + 1)
    bins, expected, obs = _pool(n * probs, observed)
    dof = len(bins) - 1
    if dof < 1:
        return GofReport(math.nan, 0, math.nan, _describe(bins), {"n": n})
    stat = float(((obs - expected) ** 2 / expected).sum())
    p = float(sps.chi2.sf(stat, dof))
    return GofReport(stat, dof, p, _describe(bins), {"n": n, "observed": obs.tolist(), "expected": expected.tolist()})


def subbox_counts(processes, m: int, d: int | None = None) -> np.ndarray:
    """``(replications, m^d)`` matrix of point counts per sub-box of the closed unit cube."""
    processes = list(processes)
    if d is None:
        d = next((p.locations.shape[1] for p in processes if p.locations.ndim == 2), 1)
    out = np.zeros((len(processes), m**d), dtype=np.int64)
    radix = m ** np.arange(d)
    for r, proc in enumerate(processes):
        loc = np.asarray(proc.locations, dtype=float).reshape(-1, d)
        cell = np.clip(np.floor(loc * m).astype(np.int64), 0, m - 1)
        out[r] = np.bincount(cell @ radix, minlength=m**d)
    return out


def subbox_counts_test(processes, m: int, d: int | None = None) -> GofReport:
    """Spatial Poissonity proxy for a unit-intensity process on ``[0, 1]^d``.

    (i) all sub-box counts pooled against Poisson(``m^-d``); (ii) for each
    pair of sub-boxes the sample covariance divided by its standard error,
    the squared z-scores summed into a chi-square with one degree of
    freedom per pair. A sub-box with zero variance fails (ii) outright.
    The combined p-value is the Bonferroni ``min(1, 2 min(p_i, p_ii))``.
    """
    processes = list(processes)
    n = len(processes)
    if n < 500:
        warnings.warn(f"only {n} replications for the sub-box test", LowPowerWarning, stacklevel=2)
    counts = subbox_counts(processes, m, d)
    boxes = counts.shape[1]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LowPowerWarning)
        marginal = poisson_gof(counts.ravel(), 1.0 / boxes)

    centred = counts - counts.mean(axis=0)
    z = []
    degenerate = bool(np.any(counts.var(axis=0) == 0))
    for i, j in itertools.combinations(range(boxes), 2):
        prod = centred[:, i] * centred[:, j]
        se = prod.std(ddof=1) / math.sqrt(n)
        z.append(prod.mean() / se if se > 0 else math.inf)
    z = np.array(z)
    if degenerate or not np.all(np.isfinite(z)):
        cov_stat, cov_p = math.inf, 0.0
    else:
        cov_stat = float((z**2).sum())
        cov_p = float(sps.chi2.sf(cov_stat, len(z))) if len(z) else 1.0
    p_marg = marginal.p_value if math.isfinite(marginal.p_value) else 0.0
    combined = min(1.0, 2.0 * min(p_marg, cov_p))
    details = {
        "marginal_statistic": marginal.statistic,
        "marginal_dof": marginal.dof,
        "marginal_p": marginal.p_value,
        "covariance_statistic": cov_stat,
        "covariance_dof": len(z),
        "covariance_p": cov_p,
        "max_abs_z": float(np.max(np.abs(z))) if len(z) else 0.0,
        "degenerate_box": degenerate,
        "counts": counts,
    }
    return GofReport(
        statistic=marginal.statistic + cov_stat,
        dof=marginal.dof + len(z),
        p_value=combined,
        pooled_bins=marginal.pooled_bins,
        details=details,
    )


def loglog_slope(pairs, min_points: int = 4) -> SlopeFit:
    """Least-squares fit of ``log stat = intercept + slope * log s``."""
    pts = np.asarray(pairs, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("pairs must be a sequence of (s, statistic)")
    if len(pts) < min_points:
        raise ValueError(f"need at least {min_points} points, got {len(pts)}")
    if np.any(pts <= 0):
        raise ValueError("intensities and statistics must be positive for a log-log fit")
    x, y = np.log(pts[:, 0]), np.log(pts[:, 1])
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx == 0:
        raise ValueError("intensities must not all coincide")
    slope = float(xc @ (y - y.mean()) / sxx)
    intercept = float(y.mean() - slope * x.mean())
    resid = y - intercept - slope * x
    if len(pts) > 2:
        stderr = math.sqrt(float(resid @ resid) / (len(pts) - 2) / sxx)
    else:
        stderr = math.nan
    return SlopeFit(slope, intercept, stderr, np.column_stack([x, y]))
