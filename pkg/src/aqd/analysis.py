"""Recharge, Mann-Kendall trends, Sen's slope, and change summaries."""

import math
from collections import Counter
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from aqd.geodata import GeoPoint


@dataclass(frozen=True)
class PointSeries:
    """Yearly values at one location. Years must be strictly increasing."""

    years: tuple
    values: tuple
    location: GeoPoint | None = None

    def __post_init__(self):
        years = tuple(int(y) for y in self.years)
        values = tuple(float(v) for v in self.values)
        if len(years) != len(values):
            raise ValueError("years and values must have equal length")
        for a, b in zip(years, years[1:]):
            if a == b:
                raise ValueError(f"duplicate year {a}")
            if a > b:
                raise ValueError("years must be strictly increasing")
        object.__setattr__(self, "years", years)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.years)


@dataclass(frozen=True)
class TrendResult:
    s_stat: int
    variance: float
    z: float
    p_two_sided: float
    sen_slope: float | None = None
    category: str | None = None


def recharge(max_gwl, min_gwl, sy):
    """Annual recharge in cm from seasonal extremes of depth to water.

    Negative output means the inputs had min above max; it is propagated so
    violations stay visible downstream.
    """
    sy_arr = np.asarray(sy, dtype=float)
    if np.any(sy_arr < 0.0) or np.any(sy_arr > 1.0):
        raise ValueError("sy must lie in [0, 1]")
    out = (np.asarray(max_gwl, dtype=float) - np.asarray(min_gwl, dtype=float)) * sy_arr * 100.0
    return float(out) if out.ndim == 0 else out


def mann_kendall(series):
    """Two-sided Mann-Kendall test with tie-corrected variance."""
    values = series.values
    n = len(values)
    if n < 3:
        raise ValueError("trend test needs at least 3 values")
    s = 0
    for i in range(n - 1):
        for j in range(i + 1, n):
            diff = values[j] - values[i]
            s += (diff > 0) - (diff < 0)
    tie_term = sum(t * (t - 1) * (2 * t + 5) for t in Counter(values).values())
    variance = (n * (n - 1) * (2 * n + 5) - tie_term) / 18.0
    if s == 0:
        z = 0.0
    elif s > 0:
        z = (s - 1) / math.sqrt(variance)
    else:
        z = (s + 1) / math.sqrt(variance)
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return TrendResult(s_stat=s, variance=variance, z=z, p_two_sided=p)


def sens_slope(series):
    """Median of all pairwise slopes, in value units per year."""
    years = series.years
    values = series.values
    if len(values) < 2:
        raise ValueError("slope needs at least 2 values")
    slopes = [
        (values[j] - values[i]) / (years[j] - years[i])
        for i in range(len(values) - 1)
        for j in range(i + 1, len(values))
    ]
    return float(np.median(slopes))


RECHARGE_BINS = (
    (-1.0, -0.5, "significant_concern"),
    (-0.5, -0.3, "moderate_concern"),
    (-0.3, -0.05, "slight_decline"),
    (-0.05, 0.05, "negligible"),
    (0.05, 0.5, "slight_increase"),
    (0.5, 1.0, "high_increase"),
)


class Category(NamedTuple):
    label: str
    clamped: bool


def categorize_recharge_slope(slope):
    """Six-bin label for a recharge Sen's slope in cm/year.

    Bins are half-open (lo, hi], so a shared boundary lands in the
    more-negative bin. Values outside [-1, 1] clamp to the outermost bin
    with clamped=True.
    """
    slope = float(slope)
    if slope <= RECHARGE_BINS[0][0]:
        return Category(RECHARGE_BINS[0][2], True)
    if slope > RECHARGE_BINS[-1][1]:
        return Category(RECHARGE_BINS[-1][2], True)
    for lo, hi, label in RECHARGE_BINS:
        if lo < slope <= hi:
            return Category(label, False)
    raise AssertionError("unreachable: bins cover (-1, 1]")


def trend_summary(series, recharge_bins=False):
    """Mann-Kendall + Sen's slope in one result; optional recharge binning."""
    mk = mann_kendall(series)
    slope = sens_slope(series)
    category = categorize_recharge_slope(slope).label if recharge_bins else None
    return TrendResult(s_stat=mk.s_stat, variance=mk.variance, z=mk.z,
                       p_two_sided=mk.p_two_sided, sen_slope=slope,
                       category=category)


DEFAULT_CHANGE_EDGES = (-1.0, -0.5, 0.0, 0.5, 1.0)


@dataclass(frozen=True)
class ChangeSummary:
    mean: float
    std: float
    maximum: float
    minimum: float
    pct_area_by_bin: dict


def summarize_change(year_a, year_b, bin_edges=DEFAULT_CHANGE_EDGES):
    """Statistics of the per-point difference b - a over identical point sets.

    std is the population value. Percentages share points equally (fishnet
    points represent equal areas) and sum to 100.
    """
    if set(year_a) != set(year_b):
        raise ValueError("point sets differ between the two years")
    if not year_a:
        raise ValueError("empty point set")
    edges = tuple(float(e) for e in bin_edges)
    if any(a >= b for a, b in zip(edges, edges[1:])):
        raise ValueError("bin edges must be strictly increasing")
    deltas = np.array([year_b[p] - year_a[p] for p in year_a], dtype=float)
    labels = [f"<= {edges[0]}"]
    labels += [f"({a}, {b}]" for a, b in zip(edges, edges[1:])]
    labels += [f"> {edges[-1]}"]
    counts = np.zeros(len(labels), dtype=np.int64)
    for d in deltas:
        idx = int(np.searchsorted(edges, d, side="left"))
        counts[idx] += 1
    pct = {label: 100.0 * c / deltas.size for label, c in zip(labels, counts)}
    return ChangeSummary(mean=float(deltas.mean()), std=float(deltas.std()),
                         maximum=float(deltas.max()), minimum=float(deltas.min()),
                         pct_area_by_bin=pct)
