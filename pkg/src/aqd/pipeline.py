"""Two-phase pseudo-ground-truth generation and coarse-to-fine upsampling.

Phase 1 predicts the seasonal maximum water level from terrain features and
year; phase 2 predicts the minimum conditioned on the maximum, which is what
keeps predicted minima at or below maxima. The dense model output is then
deduplicated against in-situ locations, joined to coarse storage cells by
serial id, and used to train the year-agnostic upsampling model.
"""

import json
import math
import operator
import re
import warnings
from collections import Counter
from dataclasses import dataclass, replace
from statistics import median, median_low
from typing import NamedTuple

import numpy as np

from aqd import forest as rf
from aqd.evaluation import metrics, per_year_split
from aqd.geodata import HGF_FIELDS, EARTH_RADIUS_M, HgfVector

DEDUP_RADIUS_M = 1850.0

NUMERIC_HGF_FIELDS = tuple(f for f in HGF_FIELDS if f != "lithology")

_numeric_getter = operator.attrgetter(*NUMERIC_HGF_FIELDS)
_LITH_NAME = re.compile(r"^lithology_(-?\d+)$")
_REP_LITH_NAME = re.compile(r"^rep_lithology_(-?\d+)$")


@dataclass(frozen=True)
class TrainingRow:
    station_id: str
    hgf: HgfVector
    year: int
    target: float
    max_gwl_cond: float | None = None


class PseudoPoint(NamedTuple):
    point: object  # GeoPoint
    year: int
    max_gwl: float
    min_gwl: float
    source: str  # "in-situ" | "predicted"


@dataclass(frozen=True)
class PseudoGroundTruth:
    points: tuple
    dropped_count: int
    violation_rate: float

    def rows_for_year(self, year):
        return [p for p in self.points if p.year == year]


@dataclass(frozen=True)
class UpsampleRow:
    point: object  # GeoPoint, kept for stable split keys and provenance
    point_hgf: HgfVector
    rep_hgf: HgfVector
    serial_id: int
    year: int
    max_gws: float
    min_gws: float
    max_gwl: float
    min_gwl: float


def lithology_codes(vectors):
    return tuple(sorted({int(v.lithology) for v in vectors}))


def _codes_from_names(names, pattern):
    return tuple(int(m.group(1)) for n in names if (m := pattern.match(n)))


def _hgf_block(vectors, lith_codes):
    n = len(vectors)
    base = np.array([_numeric_getter(v) for v in vectors], dtype=float)
    onehot = np.zeros((n, len(lith_codes)), dtype=float)
    col = {c: i for i, c in enumerate(lith_codes)}
    for i, v in enumerate(vectors):
        j = col.get(int(v.lithology))
        if j is not None:
            onehot[i, j] = 1.0
    return np.hstack([base, onehot])


def _hgf_names(lith_codes, prefix=""):
    return ([prefix + f for f in NUMERIC_HGF_FIELDS]
            + [f"{prefix}lithology_{c}" for c in lith_codes])


def training_design(rows, lith_codes, include_year=True, conditioned=False):
    """Feature matrix and names for the phase-1/phase-2 models."""
    X = _hgf_block([r.hgf for r in rows], lith_codes)
    names = _hgf_names(lith_codes)
    if include_year:
        X = np.hstack([X, np.array([[float(r.year)] for r in rows])])
        names.append("year")
    if conditioned:
        cond = []
        for r in rows:
            if r.max_gwl_cond is None:
                raise ValueError(
                    f"row ({r.station_id}, {r.year}) lacks the max water "
                    "level conditioning value")
            cond.append([float(r.max_gwl_cond)])
        X = np.hstack([X, np.array(cond)])
        names.append("max_gwl_cond")
    return X, names


def _predict_design(model, vectors, years, cond=None):
    """Rebuild the model's training design for new points."""
    names = list(model.feature_names)
    lith_codes = _codes_from_names(names, _LITH_NAME)
    X = _hgf_block(vectors, lith_codes)
    built = _hgf_names(lith_codes)
    if "year" in names:
        X = np.hstack([X, np.asarray(years, dtype=float)[:, None]])
        built.append("year")
    if cond is not None:
        X = np.hstack([X, np.asarray(cond, dtype=float)[:, None]])
        built.append("max_gwl_cond")
    if built != names:
        raise ValueError("feature layout does not match the trained model")
    return X


def assemble_training_rows(observations, station_hgfs, target="max"):
    """TrainingRows from well observations carrying the chosen target.

    target="min" keeps the in-situ max as the conditioning value when it
    exists; rows without it get None and must be filled before training.
    """
    if target not in ("max", "min"):
        raise ValueError("target must be 'max' or 'min'")
    rows = []
    for obs in observations:
        value = obs.max_gwl if target == "max" else obs.min_gwl
        if value is None:
            continue
        hgf = station_hgfs.get(obs.station_id)
        if hgf is None:
            raise ValueError(f"no sampled features for station {obs.station_id}")
        rows.append(TrainingRow(
            station_id=obs.station_id, hgf=hgf, year=obs.year,
            target=float(value),
            max_gwl_cond=obs.max_gwl if target == "min" else None))
    return rows


def _split_and_fit(rows, X, y, names, params, split_seed):
    plan = per_year_split(rows, fraction=0.2, seed=split_seed)
    train_idx = list(plan.train_indices)
    test_idx = list(plan.test_indices)
    model = rf.fit(X[train_idx], y[train_idx], params, feature_names=names)
    if test_idx:
        held_out = metrics(y[test_idx], model.predict(X[test_idx]))
    else:
        held_out = None
    return model, held_out


def train_max_model(rows, params, include_year=True, split_seed=None):
    """Phase 1. Returns (forest, held-out Metrics on the per-year 20% split)."""
    rows = sorted(rows, key=lambda r: (r.station_id, r.year))
    years = {r.year for r in rows}
    if len(years) < 2:
        raise ValueError(f"training data spans {len(years)} year(s); need >= 2")
    codes = lithology_codes(r.hgf for r in rows)
    X, names = training_design(rows, codes, include_year=include_year)
    y = np.array([r.target for r in rows])
    seed = params.seed if split_seed is None else split_seed
    return _split_and_fit(rows, X, y, names, params, seed)


def train_min_model(rows, params, conditioned=True, include_year=True,
                    split_seed=None):
    """Phase 2: same features plus the max-level conditioning column.

    conditioned=False is the ablation used to measure what conditioning
    buys; it trains on the identical rows without the extra column.
    """
    rows = sorted(rows, key=lambda r: (r.station_id, r.year))
    years = {r.year for r in rows}
    if len(years) < 2:
        raise ValueError(f"training data spans {len(years)} year(s); need >= 2")
    codes = lithology_codes(r.hgf for r in rows)
    X, names = training_design(rows, codes, include_year=include_year,
                               conditioned=conditioned)
    y = np.array([r.target for r in rows])
    seed = params.seed if split_seed is None else split_seed
    return _split_and_fit(rows, X, y, names, params, seed)


def predict_phase(model, hgfs, years, cond=None):
    """Apply a phase model at arbitrary points.

    cond is the max-level conditioning vector and is required iff the model
    was trained with it.
    """
    return model.predict(_predict_design(model, list(hgfs),
                                         np.asarray(years, dtype=float),
                                         cond=cond))


def _distances_m(lats, lons, point):
    lat1 = np.radians(lats)
    lon1 = np.radians(lons)
    lat2 = math.radians(point.lat)
    lon2 = math.radians(point.lon)
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = (np.sin(dlat / 2.0) ** 2
         + np.cos(lat1) * math.cos(lat2) * np.sin(dlon / 2.0) ** 2)
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def generate_pseudo_gt(max_model, min_model, fishnet, hgfs, years, insitu,
                       station_hgfs, clamp=False):
    """Dense (point, year) water levels: model fill + in-situ overrides.

    Predicted points closer than DEDUP_RADIUS_M to a same-year in-situ
    location are dropped. In-situ rows keep their observed values; a missing
    component is model-filled (min conditioned on the row's max). clamp
    forces model minima at or below the paired maxima; observed pairs are
    never altered.
    """
    if len(hgfs) != len(fishnet):
        raise ValueError("hgfs must align with fishnet points")
    years = sorted(int(y) for y in years)
    lats = np.array([p.lat for p in fishnet])
    lons = np.array([p.lon for p in fishnet])

    by_year = {}
    for obs in insitu:
        by_year.setdefault(obs.year, []).append(obs)

    near_cache = {}

    def near_mask(obs):
        key = (obs.location.lat, obs.location.lon)
        if key not in near_cache:
            near_cache[key] = _distances_m(lats, lons, obs.location) <= DEDUP_RADIUS_M
        return near_cache[key]

    out = []
    dropped = 0
    for year in years:
        year_col = np.full(len(fishnet), float(year))
        max_pred = max_model.predict(_predict_design(max_model, hgfs, year_col))
        min_pred = min_model.predict(
            _predict_design(min_model, hgfs, year_col, cond=max_pred))
        if clamp:
            min_pred = np.minimum(min_pred, max_pred)

        keep = np.ones(len(fishnet), dtype=bool)
        year_obs = sorted(by_year.get(year, []), key=lambda o: o.station_id)
        for obs in year_obs:
            keep &= ~near_mask(obs)
        dropped += int((~keep).sum())

        for i in np.flatnonzero(keep):
            out.append(PseudoPoint(fishnet[i], year, float(max_pred[i]),
                                   float(min_pred[i]), "predicted"))

        if year_obs:
            obs_vecs = []
            for obs in year_obs:
                hgf = station_hgfs.get(obs.station_id)
                if hgf is None:
                    raise ValueError(
                        f"no sampled features for station {obs.station_id}")
                obs_vecs.append(hgf)
            yc = np.full(len(year_obs), float(year))
            obs_max_pred = max_model.predict(
                _predict_design(max_model, obs_vecs, yc))
            max_vals = np.array([
                obs.max_gwl if obs.max_gwl is not None else obs_max_pred[k]
                for k, obs in enumerate(year_obs)])
            obs_min_pred = min_model.predict(
                _predict_design(min_model, obs_vecs, yc, cond=max_vals))
            if clamp:
                obs_min_pred = np.minimum(obs_min_pred, max_vals)
            for k, obs in enumerate(year_obs):
                min_val = obs.min_gwl if obs.min_gwl is not None else float(obs_min_pred[k])
                out.append(PseudoPoint(obs.location, year, float(max_vals[k]),
                                       float(min_val), "in-situ"))

    violations = sum(1 for p in out if p.min_gwl > p.max_gwl)
    return PseudoGroundTruth(points=tuple(out), dropped_count=dropped,
                             violation_rate=violations / len(out) if out else 0.0)


def representative_hgf(cell_points, stat="mode"):
    """One vector standing for a coarse cell.

    stat="mode" takes the per-feature majority of exact values with ties
    going to the smallest value; on all-distinct continuous features this
    degenerates to the minimum, which is the documented literal behavior.
    stat="median" is the alternative (median_low for the lithology code so
    it stays an observed class).
    """
    cell_points = list(cell_points)
    if not cell_points:
        raise ValueError("empty cell: no points to summarize")
    if stat not in ("mode", "median"):
        raise ValueError("stat must be 'mode' or 'median'")
    fields = {}
    for name in HGF_FIELDS:
        values = [getattr(v, name) for v in cell_points]
        if stat == "mode":
            counts = Counter(values)
            best = max(counts.values())
            rep = min(v for v, c in counts.items() if c == best)
        elif name == "lithology":
            rep = median_low(values)
        else:
            rep = median(values)
        fields[name] = rep
    return HgfVector(**fields)


def attach_representatives(cells, members_by_serial, stat="mode"):
    """Fill rep_hgf on every cell from its member point vectors."""
    reps = {}
    out = []
    for cell in cells:
        if cell.serial_id not in reps:
            members = members_by_serial.get(cell.serial_id)
            if not members:
                raise ValueError(f"no member points for serial {cell.serial_id}")
            reps[cell.serial_id] = representative_hgf(members, stat=stat)
        out.append(replace(cell, rep_hgf=reps[cell.serial_id]))
    return out


def build_upsample_rows(cells, pseudo_gt, hgf_of, mapping):
    """Join dense rows to coarse cells by (serial, year). Loss-less.

    hgf_of and mapping are keyed by point; every pseudo-GT point must be
    covered and every (serial, year) it references must exist in cells.
    """
    cell_index = {}
    for cell in cells:
        if cell.rep_hgf is None:
            raise ValueError(f"cell serial {cell.serial_id} lacks rep_hgf")
        cell_index[(cell.serial_id, cell.year)] = cell
    rows = []
    for p in getattr(pseudo_gt, "points", pseudo_gt):
        serial = mapping.get(p.point)
        if serial is None:
            raise ValueError(
                f"point ({p.point.lat}, {p.point.lon}) has no serial mapping")
        cell = cell_index.get((serial, p.year))
        if cell is None:
            raise ValueError(f"no cell for serial {serial} in year {p.year}")
        rows.append(UpsampleRow(
            point=p.point, point_hgf=hgf_of[p.point], rep_hgf=cell.rep_hgf,
            serial_id=serial, year=p.year, max_gws=cell.max_gws,
            min_gws=cell.min_gws, max_gwl=p.max_gwl, min_gwl=p.min_gwl))
    return rows


def upsample_design(rows, point_codes, rep_codes, include_year=False):
    X_point = _hgf_block([r.point_hgf for r in rows], point_codes)
    X_rep = _hgf_block([r.rep_hgf for r in rows], rep_codes)
    gws = np.array([[r.max_gws, r.min_gws] for r in rows], dtype=float)
    names = (_hgf_names(point_codes) + _hgf_names(rep_codes, prefix="rep_")
             + ["max_gws", "min_gws"])
    blocks = [X_point, X_rep, gws]
    if include_year:
        blocks.append(np.array([[float(r.year)] for r in rows]))
        names.append("year")
    return np.hstack(blocks), names


@dataclass(frozen=True)
class Upsampler:
    max_forest: object
    min_forest: object

    @property
    def feature_names(self):
        return self.max_forest.feature_names

    def predict_rows(self, rows):
        names = self.feature_names
        point_codes = _codes_from_names(names, _LITH_NAME)
        rep_codes = _codes_from_names(names, _REP_LITH_NAME)
        X, built = upsample_design(rows, point_codes, rep_codes,
                                   include_year="year" in names)
        if tuple(built) != tuple(names):
            raise ValueError("feature layout does not match the trained model")
        return self.max_forest.predict(X), self.min_forest.predict(X)

    def to_json(self):
        return json.dumps({
            "format_version": 1,
            "max_model": json.loads(self.max_forest.to_json()),
            "min_model": json.loads(self.min_forest.to_json()),
        }, separators=(",", ":"))


def upsampler_from_json(text):
    doc = json.loads(text)
    if doc.get("format_version") != 1:
        raise ValueError(
            f"unsupported upsampler format version: {doc.get('format_version')!r}")
    return Upsampler(
        max_forest=rf.from_json(json.dumps(doc["max_model"])),
        min_forest=rf.from_json(json.dumps(doc["min_model"])))


def train_upsampler(rows, params, include_year=False, split_seed=None,
                    holdout=True):
    """Fit the (max, min) forest pair. Returns (Upsampler, metrics dict).

    Rows are sorted canonically first, so the fitted model does not depend
    on input order. holdout=False trains on every row and skips the report,
    for callers that bring their own evaluation protocol.
    """
    rows = sorted(rows, key=lambda r: (r.year, r.point.lat, r.point.lon))
    years = sorted({r.year for r in rows})
    if len(years) < 3:
        raise ValueError(f"upsampler needs rows from >= 3 years, got {len(years)}")
    if len({r.serial_id for r in rows}) == 1:
        warnings.warn("all rows share one coarse cell; coverage is degenerate")
    point_codes = lithology_codes(r.point_hgf for r in rows)
    rep_codes = lithology_codes(r.rep_hgf for r in rows)
    X, names = upsample_design(rows, point_codes, rep_codes,
                               include_year=include_year)
    y_max = np.array([r.max_gwl for r in rows])
    y_min = np.array([r.min_gwl for r in rows])
    if holdout:
        seed = params.seed if split_seed is None else split_seed
        plan = per_year_split(rows, fraction=0.2, seed=seed,
                              key_of=lambda r: (r.point.lat, r.point.lon))
        tr = list(plan.train_indices)
        te = list(plan.test_indices)
    else:
        tr = list(range(len(rows)))
        te = []
    max_forest = rf.fit(X[tr], y_max[tr], params, feature_names=names)
    min_params = replace(params, seed=params.seed + 1)
    min_forest = rf.fit(X[tr], y_min[tr], min_params, feature_names=names)
    report = {}
    if te:
        report["max"] = metrics(y_max[te], max_forest.predict(X[te]))
        report["min"] = metrics(y_min[te], min_forest.predict(X[te]))
    return Upsampler(max_forest, min_forest), report


def downscale_year(upsampler, cells_year, fishnet, hgfs, mapping):
    """Predict (max_gwl, min_gwl) at every fishnet point for one year.

    Uses only coarse storage and static features for that year; no in-situ
    data is touched.
    """
    if len(hgfs) != len(fishnet):
        raise ValueError("hgfs must align with fishnet points")
    cell_by_serial = {}
    year = None
    for cell in cells_year:
        if cell.rep_hgf is None:
            raise ValueError(f"cell serial {cell.serial_id} lacks rep_hgf")
        cell_by_serial[cell.serial_id] = cell
        year = cell.year if year is None else year
        if cell.year != year:
            raise ValueError("cells_year mixes multiple years")
    rows = []
    for i, point in enumerate(fishnet):
        serial = mapping.get(point)
        if serial is None:
            raise ValueError(f"point ({point.lat}, {point.lon}) has no serial mapping")
        cell = cell_by_serial.get(serial)
        if cell is None:
            raise ValueError(f"no cell for serial {serial} in year {year}")
        rows.append(UpsampleRow(
            point=point, point_hgf=hgfs[i], rep_hgf=cell.rep_hgf,
            serial_id=serial, year=year, max_gws=cell.max_gws,
            min_gws=cell.min_gws, max_gwl=0.0, min_gwl=0.0))
    max_pred, min_pred = upsampler.predict_rows(rows)
    return [(point, float(max_pred[i]), float(min_pred[i]))
            for i, point in enumerate(fishnet)]


def serials_for_points(points, cells):
    """Nearest-centroid serial for each point; distance ties take the
    lowest serial."""
    seen = {}
    for cell in cells:
        if cell.serial_id not in seen:
            seen[cell.serial_id] = cell.centroid
    if not seen:
        raise ValueError("no cells given")
    serials = sorted(seen)
    out = {}
    for point in points:
        best = None
        for serial in serials:
            c = seen[serial]
            d = (c.lat - point.lat) ** 2 + (c.lon - point.lon) ** 2
            if best is None or (d, serial) < best:
                best = (d, serial)
        out[point] = best[1]
    return out
