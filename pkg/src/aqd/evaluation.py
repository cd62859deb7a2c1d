"""Metrics, per-year splits, LOYO cross-validation, and the IDW baseline."""

import random
import warnings
from dataclasses import dataclass

import numpy as np

from aqd.geodata import haversine_m

COINCIDENT_M = 1.0


@dataclass(frozen=True)
class Metrics:
    r2: float
    mse: float
    n: int


def _paired(y_true, y_pred):
    t = np.asarray(y_true, dtype=float)
    p = np.asarray(y_pred, dtype=float)
    if t.shape != p.shape or t.ndim != 1:
        raise ValueError("y_true and y_pred must be equal-length vectors")
    if t.size < 2:
        raise ValueError("need at least 2 values")
    return t, p

def r2_score(y_true, y_pred):
    t, p = _paired(y_true, y_pred)
    total = t - t.mean()
    ss_tot = float(total @ total)
    if ss_tot == 0.0:
        raise ValueError("R^2 undefined for zero-variance truth")
    resid = t - p
    return 1.0 - float(resid @ resid) / ss_tot


def mse(y_true, y_pred):
    t, p = _paired(y_true, y_pred)
    resid = t - p
    return float(resid @ resid) / t.size


def metrics(y_true, y_pred):
    return Metrics(r2=r2_score(y_true, y_pred), mse=mse(y_true, y_pred),
                   n=len(y_true))


@dataclass(frozen=True)
class SplitPlan:
    """Per-year train/test row indices into the original row list."""

    by_year: dict
    seed: int
    fraction: float

    @property
    def train_indices(self):
        out = []
        for year in sorted(self.by_year):
            out.extend(self.by_year[year][0])
        return tuple(out)

    @property
    def test_indices(self):
        out = []
        for year in sorted(self.by_year):
            out.extend(self.by_year[year][1])
        return tuple(out)


def per_year_split(rows, fraction=0.2, seed=0, *, key_of=None, year_of=None):
    """Stratified split: round(fraction * n) test rows from every year.

    Rows are keyed by a stable ID and sorted before the seeded shuffle, so
    the plan does not depend on input order. A year with fewer than 2 rows
    goes wholly to train with a warning.
    """
    if not 0.0 <= fraction < 1.0:
        raise ValueError("fraction must be in [0, 1)")
    year_of = year_of or (lambda r: r.year)
    key_of = key_of or (lambda r: r.station_id)
    groups = {}
    for idx, row in enumerate(rows):
        groups.setdefault(int(year_of(row)), []).append((key_of(row), idx))
    by_year = {}
    for year, members in groups.items():
        members.sort(key=lambda pair: pair[0])
        keys = [k for k, _ in members]
        if len(set(keys)) != len(keys):
            raise ValueError(f"duplicate row keys within year {year}")
        rng = random.Random(seed * 4_294_967_291 + year)
        rng.shuffle(members)
        n_test = round(fraction * len(members))
        if len(members) < 2:
            warnings.warn(f"year {year} has {len(members)} row(s); "
                          "keeping it wholly in train")
            n_test = 0
        test = sorted(idx for _, idx in members[:n_test])
        train = sorted(idx for _, idx in members[n_test:])
        by_year[year] = (tuple(train), tuple(test))
    return SplitPlan(by_year=by_year, seed=seed, fraction=fraction)


@dataclass(frozen=True)
class LoyoResult:
    folds: dict  # year -> Metrics
    mean_r2: float
    mean_mse: float


def loyo_cv(rows, train_fn, eval_fn, *, year_of=None):
    """Leave-one-year-out: train on every other year, test on the held one.

    train_fn(train_rows) -> model; eval_fn(model, test_rows) -> Metrics.
    """
    year_of = year_of or (lambda r: r.year)
    years = sorted({int(year_of(r)) for r in rows})
    if len(years) < 3:
        raise ValueError(f"LOYO needs at least 3 distinct years, got {len(years)}")
    folds = {}
    for year in years:
        train_rows = [r for r in rows if int(year_of(r)) != year]
        test_rows = [r for r in rows if int(year_of(r)) == year]
        model = train_fn(train_rows)
        folds[year] = eval_fn(model, test_rows)
    mean_r2 = sum(m.r2 for m in folds.values()) / len(folds)
    mean_mse = sum(m.mse for m in folds.values()) / len(folds)
    return LoyoResult(folds=folds, mean_r2=mean_r2, mean_mse=mean_mse)


def idw_interpolate(samples, query, power=2.0, k=None):
    """Inverse-distance-weighted value at query.

    A sample closer than 1 m is returned exactly, which also sidesteps the
    singular weight at zero distance.
    """
    if not samples:
        raise ValueError("samples must be nonempty")
    if power <= 0.0:
        raise ValueError("power must be positive")
    dists = [haversine_m(point, query) for point, _ in samples]
    nearest = min(range(len(samples)), key=lambda i: dists[i])
    if dists[nearest] < COINCIDENT_M:
        return float(samples[nearest][1])
    order = range(len(samples))
    if k is not None:
        if k < 1:
            raise ValueError("k must be >= 1 when given")
        order = sorted(order, key=lambda i: (dists[i], i))[:k]
    wsum = 0.0
    vsum = 0.0
    for i in order:
        w = dists[i] ** -power
        wsum += w
        vsum += w * float(samples[i][1])
    return vsum / wsum


@dataclass(frozen=True)
class BaselineComparison:
    model: Metrics
    idw: Metrics
    model_violation_rate: float
    idw_violation_rate: float


def compare_baseline(model_pairs, idw_pairs, truth_pairs):
    """Paired holdout report: model vs IDW on (max_gwl, min_gwl) pairs.

    All three maps must cover the same keys. Metrics pool both targets;
    the violation rate is the share of keys predicting min above max.
    """
    if not truth_pairs:
        raise ValueError("holdout must be nonempty")
    keys = sorted(truth_pairs)
    if sorted(model_pairs) != keys or sorted(idw_pairs) != keys:
        raise ValueError("model, idw, and truth must cover the same keys")

    def flatten(pairs):
        vals = []
        for key in keys:
            hi, lo = pairs[key]
            vals.extend((float(hi), float(lo)))
        return vals

    def violations(pairs):
        bad = sum(1 for key in keys if pairs[key][1] > pairs[key][0])
        return bad / len(keys)

    truth_flat = flatten(truth_pairs)
    return BaselineComparison(
        model=metrics(truth_flat, flatten(model_pairs)),
        idw=metrics(truth_flat, flatten(idw_pairs)),
        model_violation_rate=violations(model_pairs),
        idw_violation_rate=violations(idw_pairs),
    )
