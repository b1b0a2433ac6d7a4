"""Trend and group-comparison statistics.

Per-station trends use the Mann-Kendall test with tie-corrected variance
and the Theil-Sen slope. Groups of stations combine through a regional
variant whose cross-station covariance comes from a rank-based estimator.
Multiplicity control is Benjamini-Yekutieli; group contrasts use a
two-proportion z-test with Newcombe score intervals, the Wilcoxon
rank-sum test, and Spearman rank correlation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
import scipy.special
import scipy.stats

from .series import AnnualSeries

ALPHA = 0.05


@dataclass
class TrendResult:
    s: int
    var_s: float
    z: float
    p: float
    slope: float
    p_adj: float | None = None
    untestable: bool = False


@dataclass(frozen=True)
class RegionalTrendResult:
    s: int
    var_s: float
    z: float
    p: float
    flags: tuple


@dataclass(frozen=True)
class GroupTrendSummary:
    group_id: str
    n: int
    n_sig: int
    proportion: float
    field_significant: bool


@dataclass(frozen=True)
class PropTestResult:
    diff: float
    p: float
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class SpearmanResult:
    rho: float
    p: float
    undefined: bool


def _two_sided_p(z):
    return min(1.0, 2.0 * float(scipy.special.ndtr(-abs(z))))


def _z_with_continuity(s, var_s):
    if s == 0 or var_s <= 0.0:
        return 0.0
    shift = -1.0 if s > 0 else 1.0
    return (s + shift) / math.sqrt(var_s)


def _kendall_s(values):
    i, j = np.triu_indices(values.size, k=1)
    return int(np.sign(values[j] - values[i]).sum())


def _mk_variance(values):
    n = values.size
    _, counts = np.unique(values, return_counts=True)
    ties = float(np.sum(counts * (counts - 1) * (2 * counts + 5)))
    return (n * (n - 1) * (2 * n + 5) - ties) / 18.0


def theil_sen(times, values):
    """Median of pairwise slopes (values[j]-values[i])/(times[j]-times[i])."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    i, j = np.triu_indices(values.size, k=1)
    return float(np.median((values[j] - values[i]) / (times[j] - times[i])))


def mann_kendall(series):
    """Mann-Kendall trend test on an annual series.

    Fewer than 4 values, or all values equal, yields an untestable result
    with s=0 and p=1. The slope denominator uses actual year spacing, so
    omitted years widen the gap.
    """
    if isinstance(series, AnnualSeries):
        years = series.years.astype(float)
        values = np.asarray(series.values, dtype=float)
    else:
        values = np.asarray(series, dtype=float)
        years = np.arange(values.size, dtype=float)
    keep = np.isfinite(values)
    values, years = values[keep], years[keep]
    n = values.size

    if n < 4 or np.unique(values).size < 2:
        slope = theil_sen(years, values) if n >= 2 else float("nan")
        return TrendResult(s=0, var_s=0.0, z=0.0, p=1.0, slope=slope, untestable=True)

    s = _kendall_s(values)
    var_s = _mk_variance(values)
    z = _z_with_continuity(s, var_s)
    return TrendResult(
        s=s, var_s=var_s, z=z, p=_two_sided_p(z), slope=theil_sen(years, values)
    )


def rank_covariance(x, y):
    """Covariance of two Kendall scores over a common period.

    Uses concordance counts plus midrank cross-products; for y identical
    to tie-free x this reproduces the Mann-Kendall variance exactly.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size:
        raise ValueError("series must share the same years")
    n = x.size
    if n < 2:
        return 0.0
    i, j = np.triu_indices(n, k=1)
    concordance = float(np.sum(np.sign(x[j] - x[i]) * np.sign(y[j] - y[i])))
    rx = scipy.stats.rankdata(x)
    ry = scipy.stats.rankdata(y)
    return (concordance + 4.0 * float(rx @ ry) - n * (n + 1) ** 2) / 3.0


def regional_mann_kendall(series_list):
    """Group-level Mann-Kendall over a set of station annual series.

    The group score is the sum of station scores; its variance adds
    pairwise covariances estimated over each pair's overlapping years.
    Pairs without overlap skip the covariance term; a raw variance below
    1% of the summed station variances is floored there. Both events are
    flagged. Stations individually untestable are excluded and flagged.
    """
    if not series_list:
        raise ValueError("empty station group")

    members = []
    flags = []
    for s in series_list:
        r = mann_kendall(s)
        if r.untestable:
            flags.append(f"{s.key}: untestable station excluded")
        else:
            members.append((s, r))

    if not members:
        return RegionalTrendResult(
            s=0, var_s=0.0, z=0.0, p=1.0, flags=tuple(flags + ["no testable stations"])
        )

    s_r = sum(r.s for _, r in members)
    var_sum = sum(r.var_s for _, r in members)
    cov_sum = 0.0
    for (sa, _), (sb, _) in combinations(members, 2):
        map_a = sa.as_dict()
        map_b = sb.as_dict()
        common = sorted(map_a.keys() & map_b.keys())
        if not common:
            flags.append(f"{sa.key}/{sb.key}: no overlapping years; covariance skipped")
            continue
        xa = np.array([map_a[y] for y in common])
        xb = np.array([map_b[y] for y in common])
        cov_sum += rank_covariance(xa, xb)

    var_raw = var_sum + 2.0 * cov_sum
    floor = 0.01 * var_sum
    if var_raw < floor:
        var_r = floor
        flags.append("variance floored at 1% of summed station variances")
    else:
        var_r = var_raw

    z = _z_with_continuity(s_r, var_r)
    return RegionalTrendResult(s=s_r, var_s=var_r, z=z, p=_two_sided_p(z), flags=tuple(flags))


def by_fdr_adjust(pvalues):
    """Benjamini-Yekutieli adjustment, safe under dependency.

    Sorted p-values scale by m*c(m)/rank with c(m) the harmonic sum, then
    a step-up minimum from the right enforces monotonicity; output keeps
    the input order.
    """
    p = np.asarray(pvalues, dtype=float)
    if p.size == 0:
        return np.empty(0)
    if np.any((p < 0.0) | (p > 1.0)) or not np.all(np.isfinite(p)):
        raise ValueError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    harmonic = float(np.sum(1.0 / np.arange(1, m + 1)))
    raw = p[order] * m * harmonic / np.arange(1, m + 1)
    adjusted = np.minimum(np.minimum.accumulate(raw[::-1])[::-1], 1.0)
    out = np.empty(m)
    out[order] = adjusted
    return out


def field_significance(group_id, results, alpha=ALPHA):
    """Count stations significant after adjustment; the group is field
    significant whenever at least one station is."""
    p_adjusted = [r.p_adj if isinstance(r, TrendResult) else float(r) for r in results]
    if not p_adjusted:
        raise ValueError("empty group")
    n = len(p_adjusted)
    n_sig = sum(1 for p in p_adjusted if p < alpha)
    return GroupTrendSummary(
        group_id=group_id,
        n=n,
        n_sig=n_sig,
        proportion=n_sig / n,
        field_significant=n_sig >= 1,
    )


def _wilson_bounds(k, n, z):
    p = k / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2.0 * n)) / denom
    half = z * math.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / denom
    return center - half, center + half


def equal_proportions_test(k1, n1, k2, n2, alpha=ALPHA):
    """Two-sample proportion comparison.

    The p-value is the pooled z-test with continuity correction; the
    confidence interval is Newcombe's hybrid of per-group Wilson score
    intervals.
    """
    if n1 < 1 or n2 < 1:
        raise ValueError("both sample sizes must be at least 1")
    if not (0 <= k1 <= n1 and 0 <= k2 <= n2):
        raise ValueError("counts must satisfy 0 <= k <= n")

    p1, p2 = k1 / n1, k2 / n2
    diff = p1 - p2
    pooled = (k1 + k2) / (n1 + n2)
    se = math.sqrt(pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2))
    if se == 0.0:
        p = 1.0
    else:
        correction = 0.5 * (1.0 / n1 + 1.0 / n2)
        z = max(0.0, abs(diff) - correction) / se
        p = _two_sided_p(z)

    zq = float(scipy.special.ndtri(1.0 - alpha / 2.0))
    l1, u1 = _wilson_bounds(k1, n1, zq)
    l2, u2 = _wilson_bounds(k2, n2, zq)
    ci_low = diff - math.sqrt((p1 - l1) ** 2 + (u2 - p2) ** 2)
    ci_high = diff + math.sqrt((u1 - p1) ** 2 + (p2 - l2) ** 2)
    return PropTestResult(diff=diff, p=p, ci_low=ci_low, ci_high=ci_high)


def wilcoxon_ranksum(a, b, method="auto"):
    """Rank-sum test for a location difference between two samples.

    Returns (W, p) with W the midrank sum of the first sample. "auto"
    enumerates exactly when the pooled size is at most 12 with no ties,
    otherwise uses the tie-corrected normal approximation with continuity
    correction. Exact mode enumerates midrank sums, so it tolerates ties.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n1, n2 = a.size, b.size
    if n1 == 0 or n2 == 0:
        raise ValueError("both samples must be nonempty")
    pooled = np.concatenate([a, b])
    n = n1 + n2
    ranks = scipy.stats.rankdata(pooled)
    w = float(ranks[:n1].sum())
    mu = n1 * (n + 1) / 2.0

    if method == "auto":
        tie_free = np.unique(pooled).size == n
        method = "exact" if (n <= 12 and tie_free) else "normal"

    if method == "exact":
        deviation = abs(w - mu)
        hits = 0
        total = 0
        for combo in combinations(range(n), n1):
            total += 1
            if abs(ranks[list(combo)].sum() - mu) >= deviation - 1e-9:
                hits += 1
        return w, hits / total
    if method != "normal":
        raise ValueError(f"unknown method {method!r}")

    _, counts = np.unique(pooled, return_counts=True)
    tie_term = float(np.sum(counts**3 - counts)) / (n * (n - 1))
    var_w = n1 * n2 / 12.0 * ((n + 1) - tie_term)
    if var_w <= 0.0:
        return w, 1.0
    z = max(0.0, abs(w - mu) - 0.5) / math.sqrt(var_w)
    return w, _two_sided_p(z)


def spearman(x, y):
    """Spearman rank correlation with the t-based two-sided p-value."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size:
        raise ValueError("inputs must have equal length")
    n = x.size
    if n < 3:
        raise ValueError("need at least 3 observations")
    if np.unique(x).size < 2 or np.unique(y).size < 2:
        return SpearmanResult(rho=float("nan"), p=float("nan"), undefined=True)

    rx = scipy.stats.rankdata(x)
    ry = scipy.stats.rankdata(y)
    cx = rx - rx.mean()
    cy = ry - ry.mean()
    rho = float(cx @ cy / math.sqrt((cx @ cx) * (cy @ cy)))
    rho = max(-1.0, min(1.0, rho))
    if abs(rho) == 1.0:
        return SpearmanResult(rho=rho, p=0.0, undefined=False)
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    p = 2.0 * float(scipy.stats.t.sf(abs(t), n - 2))
    return SpearmanResult(rho=rho, p=min(1.0, p), undefined=False)


def comparison_direction(median_diff, p, alpha=ALPHA):
    """Label which side is higher, or not-significant at the threshold."""
    if p < alpha and median_diff > 0:
        return "UC-higher"
    if p < alpha and median_diff < 0:
        return "nonUC-higher"
    return "not-significant"


TRENDS_CSV_HEADER = "pair,metric,season,group,S,var,z,p,p_adj,slope"


def trends_csv(entries):
    """Render (pair, metric, season, group, TrendResult) rows as CSV."""
    lines = [TRENDS_CSV_HEADER]
    for pair, metric, season, group, r in entries:
        p_adj = "" if r.p_adj is None else f"{r.p_adj:.17g}"
        lines.append(
            f"{pair},{metric},{season},{group},{r.s},{r.var_s:.17g},"
            f"{r.z:.17g},{r.p:.17g},{p_adj},{r.slope:.17g}"
        )
    return "\n".join(lines) + "\n"


COMPARISON_CSV_HEADER = (
    "pair,metric,season,median_diff,wilcoxon_p,prop_uc,prop_nonuc,prop_p,direction"
)


@dataclass(frozen=True)
class ComparisonRow:
    pair: str
    metric: str
    season: str
    median_uc: float
    median_nonuc: float
    wilcoxon_p: float
    prop_uc: float
    prop_nonuc: float
    prop_p: float
    direction: str

    @property
    def median_diff(self):
        return self.median_uc - self.median_nonuc


def comparison_csv(rows):
    lines = [COMPARISON_CSV_HEADER]
    for r in rows:
        lines.append(
            f"{r.pair},{r.metric},{r.season},{r.median_diff:.17g},{r.wilcoxon_p:.17g},"
            f"{r.prop_uc:.17g},{r.prop_nonuc:.17g},{r.prop_p:.17g},{r.direction}"
        )
    return "\n".join(lines) + "\n"
