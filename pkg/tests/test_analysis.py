"""Trend statistics against brute-force enumeration oracles."""

import math
import random
import statistics
from collections import Counter

import numpy as np
import pytest

from aqd.analysis import (
    Category,
    PointSeries,
    categorize_recharge_slope,
    mann_kendall,
    recharge,
    sens_slope,
    summarize_change,
    trend_summary,
)
from aqd.geodata import GeoPoint


def mk_oracle(values):
    """Textbook S, variance, Z, and p computed from first principles."""
    n = len(values)
    s = 0
    for i in range(n - 1):
        for j in range(i + 1, n):
            if values[j] > values[i]:
                s += 1
            elif values[j] < values[i]:
                s -= 1
    ties = Counter(values)
    var = (n * (n - 1) * (2 * n + 5)
           - sum(t * (t - 1) * (2 * t + 5) for t in ties.values())) / 18.0
    if s > 0:
        z = (s - 1) / math.sqrt(var)
    elif s < 0:
        z = (s + 1) / math.sqrt(var)
    else:
        z = 0.0
    p = 2.0 * (1.0 - statistics.NormalDist().cdf(abs(z)))
    return s, var, z, p


def sen_oracle(years, values):
    slopes = sorted(
        (values[j] - values[i]) / (years[j] - years[i])
        for i in range(len(values) - 1)
        for j in range(i + 1, len(values))
    )
    k = len(slopes)
    if k % 2 == 1:
        return slopes[k // 2]
    return 0.5 * (slopes[k // 2 - 1] + slopes[k // 2])


def series(values, years=None):
    if years is None:
        years = range(2000, 2000 + len(values))
    return PointSeries(tuple(years), tuple(values))


class TestRecharge:
    def test_worked_example(self):
        assert recharge(10.0, 5.0, 0.1) == 50.0

    def test_equal_levels(self):
        assert recharge(4.2, 4.2, 0.3) == 0.0

    def test_zero_sy(self):
        assert recharge(12.0, 2.0, 0.0) == 0.0

    def test_negative_propagates(self):
        assert recharge(3.0, 5.0, 0.1) == pytest.approx(-20.0)

    def test_linear_in_sy_and_span(self):
        rng = random.Random(5)
        for _ in range(50):
            hi = rng.uniform(0, 20)
            lo = rng.uniform(0, 20)
            sy = rng.uniform(0, 1)
            base = recharge(hi, lo, sy)
            assert recharge(hi, lo, sy / 2) == pytest.approx(base / 2, rel=1e-12)
            scaled = recharge(lo + 3 * (hi - lo), lo, sy)
            assert scaled == pytest.approx(3 * base, rel=1e-9, abs=1e-9)

    def test_vectorized(self):
        out = recharge(np.array([10.0, 8.0]), np.array([5.0, 8.0]), 0.1)
        assert out.tolist() == [50.0, 0.0]

    def test_sy_domain(self):
        with pytest.raises(ValueError, match="sy"):
            recharge(10.0, 5.0, 1.5)
        with pytest.raises(ValueError, match="sy"):
            recharge(10.0, 5.0, -0.1)


class TestMannKendall:
    def test_increasing_five(self):
        r = mann_kendall(series([1.0, 2.0, 3.0, 4.0, 5.0]))
        assert r.s_stat == 10

    def test_constant_series(self):
        r = mann_kendall(series([2.0, 2.0, 2.0, 2.0]))
        assert r.s_stat == 0
        assert r.p_two_sided == 1.0
        assert r.z == 0.0

    def test_reversal_antisymmetry(self):
        rng = random.Random(11)
        for _ in range(30):
            vals = [rng.uniform(-5, 5) for _ in range(rng.randint(3, 12))]
            fwd = mann_kendall(series(vals))
            rev = mann_kendall(series(vals[::-1]))
            assert rev.s_stat == -fwd.s_stat

    def test_sign_of_z_matches_s(self):
        r_up = mann_kendall(series([1.0, 3.0, 2.0, 5.0, 6.0]))
        r_dn = mann_kendall(series([6.0, 5.0, 2.0, 3.0, 1.0]))
        assert r_up.s_stat > 0 and r_up.z > 0
        assert r_dn.s_stat < 0 and r_dn.z < 0

    def test_brute_force_oracle_1000_series(self):
        rng = random.Random(13)
        for _ in range(1000):
            n = rng.randint(3, 50)
            if rng.random() < 0.5:
                vals = [rng.uniform(-10, 10) for _ in range(n)]
            else:
                vals = [float(rng.randint(-3, 3)) for _ in range(n)]  # heavy ties
            r = mann_kendall(series(vals))
            s, var, z, p = mk_oracle(vals)
            assert r.s_stat == s
            assert r.variance == pytest.approx(var, rel=1e-12)
            assert r.z == pytest.approx(z, rel=1e-12, abs=1e-12)
            assert r.p_two_sided == pytest.approx(p, rel=1e-9, abs=1e-12)

    def test_null_calibration(self):
        # shuffled series should rarely look significant
        rng = random.Random(17)
        base = [rng.uniform(0, 1) for _ in range(20)]
        calm = 0
        trials = 200
        for _ in range(trials):
            rng.shuffle(base)
            if abs(mann_kendall(series(base)).z) < 1.96:
                calm += 1
        assert calm / trials >= 0.9

    def test_short_series_rejected(self):
        with pytest.raises(ValueError, match="at least 3"):
            mann_kendall(series([1.0, 2.0]))


class TestSensSlope:
    def test_exact_line(self):
        assert sens_slope(series([1.0, 2.0, 3.0], years=[0, 1, 2])) == 1.0

    def test_enumerated_median(self):
        assert sens_slope(series([0.0, 2.0, 1.0], years=[0, 1, 2])) == 0.5

    def test_translation_invariance(self):
        rng = random.Random(19)
        vals = [rng.uniform(-5, 5) for _ in range(9)]
        a = sens_slope(series(vals))
        b = sens_slope(series([v + 42.5 for v in vals]))
        assert b == pytest.approx(a, rel=1e-12, abs=1e-12)

    def test_non_consecutive_years(self):
        s = series([0.0, 10.0], years=[2000, 2005])
        assert sens_slope(s) == 2.0

    def test_oracle_1000_series(self):
        rng = random.Random(23)
        for _ in range(1000):
            n = rng.randint(2, 50)
            years = sorted(rng.sample(range(1980, 2080), n))
            vals = [rng.uniform(-10, 10) for _ in range(n)]
            got = sens_slope(series(vals, years=years))
            assert got == pytest.approx(sen_oracle(years, vals), rel=1e-12, abs=1e-12)

    def test_duplicate_years_rejected(self):
        with pytest.raises(ValueError, match="duplicate year"):
            series([1.0, 2.0, 3.0], years=[2000, 2000, 2001])

    def test_single_value_rejected(self):
        with pytest.raises(ValueError, match="at least 2"):
            sens_slope(series([1.0], years=[2000]))


class TestCategories:
    def test_documented_examples(self):
        assert categorize_recharge_slope(0.0).label == "negligible"
        assert categorize_recharge_slope(-0.4).label == "moderate_concern"
        assert categorize_recharge_slope(-0.7).label == "significant_concern"

    def test_boundaries_to_more_negative_bin(self):
        assert categorize_recharge_slope(-0.5).label == "significant_concern"
        assert categorize_recharge_slope(-0.3).label == "moderate_concern"
        assert categorize_recharge_slope(-0.05).label == "slight_decline"
        assert categorize_recharge_slope(0.05).label == "negligible"
        assert categorize_recharge_slope(0.5).label == "slight_increase"
        assert categorize_recharge_slope(1.0) == Category("high_increase", False)

    def test_clamping_flagged(self):
        assert categorize_recharge_slope(-2.0) == Category("significant_concern", True)
        assert categorize_recharge_slope(-1.0).clamped is True
        assert categorize_recharge_slope(1.5) == Category("high_increase", True)

    def test_total_and_monotone(self):
        order = ["significant_concern", "moderate_concern", "slight_decline",
                 "negligible", "slight_increase", "high_increase"]
        rng = random.Random(29)
        slopes = sorted(rng.uniform(-2, 2) for _ in range(200))
        ranks = [order.index(categorize_recharge_slope(s).label) for s in slopes]
        assert all(a <= b for a, b in zip(ranks, ranks[1:]))


class TestTrendSummary:
    def test_combines_test_and_slope(self):
        r = trend_summary(series([1.0, 2.0, 3.0, 4.0]), recharge_bins=True)
        assert r.s_stat == 6
        assert r.sen_slope == 1.0
        assert r.category == "high_increase"

    def test_category_off_by_default(self):
        r = trend_summary(series([1.0, 2.0, 3.0]))
        assert r.category is None


class TestSummarizeChange:
    def pts(self, n):
        return [GeoPoint(23.0 + 0.01 * i, 90.0) for i in range(n)]

    def test_identical_maps(self):
        pts = self.pts(5)
        a = {p: 3.0 for p in pts}
        s = summarize_change(a, dict(a))
        assert s.mean == 0.0 and s.std == 0.0
        assert s.maximum == 0.0 and s.minimum == 0.0

    def test_constant_shift(self):
        pts = self.pts(4)
        a = {p: float(i) for i, p in enumerate(pts)}
        b = {p: v + 1.0 for p, v in a.items()}
        s = summarize_change(a, b)
        assert s.mean == 1.0 and s.std == 0.0

    def test_two_pass_oracle(self):
        rng = random.Random(31)
        pts = self.pts(60)
        a = {p: rng.uniform(-3, 3) for p in pts}
        b = {p: rng.uniform(-3, 3) for p in pts}
        s = summarize_change(a, b)
        deltas = [b[p] - a[p] for p in pts]
        mean = sum(deltas) / len(deltas)
        var = sum((d - mean) ** 2 for d in deltas) / len(deltas)
        assert s.mean == pytest.approx(mean, rel=1e-12, abs=1e-15)
        assert s.std == pytest.approx(math.sqrt(var), rel=1e-12)
        assert s.maximum == max(deltas) and s.minimum == min(deltas)

    def test_percentages_sum_to_100(self):
        rng = random.Random(37)
        pts = self.pts(83)
        a = {p: rng.uniform(-3, 3) for p in pts}
        b = {p: rng.uniform(-3, 3) for p in pts}
        s = summarize_change(a, b)
        assert sum(s.pct_area_by_bin.values()) == pytest.approx(100.0)

    def test_boundary_to_lower_bin(self):
        pts = self.pts(2)
        a = {pts[0]: 0.0, pts[1]: 0.0}
        b = {pts[0]: -1.0, pts[1]: 0.5}
        s = summarize_change(a, b)
        assert s.pct_area_by_bin["<= -1.0"] == 50.0
        assert s.pct_area_by_bin["(0.0, 0.5]"] == 50.0

    def test_point_set_mismatch(self):
        pts = self.pts(3)
        a = {p: 1.0 for p in pts}
        b = {p: 1.0 for p in pts[:2]}
        with pytest.raises(ValueError, match="point sets"):
            summarize_change(a, b)
