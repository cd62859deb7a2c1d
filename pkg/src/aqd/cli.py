"""Command-line driver: one subcommand per pipeline stage, plus a JSON API.

Stages communicate through on-disk artifacts (ASCII grids, CSV tables, model
JSON) under the manifest's workdir, so each stage is rerunnable on its own.
All structured output is single-line JSON on stdout; diagnostics go to
stderr via logging, gated by AQD_LOG_LEVEL. Exit codes: 0 success, 2 input
or artifact problem, 3 internal error.
"""

import argparse
import csv
import json
import logging
import os
import sys
import traceback
from dataclasses import dataclass, replace
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from aqd import analysis, pipeline, synthdata
from aqd.evaluation import loyo_cv, metrics
from aqd.forest import ForestParams
from aqd.geodata import (
    HGF_FIELDS,
    M_PER_DEG,
    GeoPoint,
    HgfVector,
    read_ascii_grid,
    read_gldas_csv,
    read_wells_csv,
    write_ascii_grid,
    write_geojson,
)
from aqd.terrain import hgf_rasters, sample_hgf

log = logging.getLogger("aqd")


class InputError(Exception):
    """Bad manifest, missing file, or unusable input data. Exit code 2."""


def _emit(event, **fields):
    print(json.dumps({"event": event, **fields}, separators=(",", ":")))


def _fmt(x):
    return repr(float(x))


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

WORLD_FILES = {
    "dem": "dem.asc",
    "sy": "sy.asc",
    "clay": "clay.asc",
    "lithology": "lithology.asc",
    "nir": "nir.asc",
    "red": "red.asc",
    "swir": "swir.asc",
    "wells": "wells.csv",
    "gldas": "gldas.csv",
    "fishnet": "fishnet.csv",
}


@dataclass(frozen=True)
class Manifest:
    root: Path
    seed: int
    years: tuple
    world: Path
    workdir: Path
    forest: ForestParams
    stream_threshold: float
    rep_stat: str
    clamp: bool
    upsampler_year: bool
    idw_power: float
    synth: dict | None


def _check_keys(table, allowed, where):
    unknown = sorted(set(table) - set(allowed))
    if unknown:
        raise InputError(f"{where}: unknown key(s) {', '.join(unknown)}")


def load_manifest(path):
    path = Path(path)
    if not path.is_file():
        raise InputError(f"manifest not found: {path}")
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise InputError(f"{path}: invalid TOML: {exc}") from None

    _check_keys(doc, {"seed", "years", "paths", "forest", "flags", "synth"},
                str(path))
    if "seed" not in doc:
        raise InputError(f"{path}: seed is mandatory")
    seed = int(doc["seed"])
    years = tuple(int(y) for y in doc.get("years", ()))
    if not years:
        raise InputError(f"{path}: years must be a non-empty list")

    root = path.resolve().parent
    paths = doc.get("paths", {})
    _check_keys(paths, {"world", "workdir"}, f"{path} [paths]")
    world = root / paths.get("world", "world")
    workdir = root / paths.get("workdir", "artifacts")

    ftab = doc.get("forest", {})
    _check_keys(ftab, {"n_trees", "max_depth", "min_leaf", "mtry", "bootstrap"},
                f"{path} [forest]")
    try:
        forest = ForestParams(
            n_trees=int(ftab.get("n_trees", 200)),
            max_depth=int(ftab["max_depth"]) if ftab.get("max_depth") else None,
            min_leaf=int(ftab.get("min_leaf", 2)),
            mtry=int(ftab["mtry"]) if ftab.get("mtry") else None,
            bootstrap=bool(ftab.get("bootstrap", True)),
            seed=seed,
        )
    except ValueError as exc:
        raise InputError(f"{path} [forest]: {exc}") from None

    flags = doc.get("flags", {})
    _check_keys(flags, {"stream_threshold", "rep_stat", "clamp",
                        "upsampler_year", "idw_power"}, f"{path} [flags]")
    rep_stat = flags.get("rep_stat", "mode")
    if rep_stat not in ("mode", "median"):
        raise InputError(f"{path}: rep_stat must be 'mode' or 'median'")

    return Manifest(
        root=root, seed=seed, years=years, world=world, workdir=workdir,
        forest=forest,
        stream_threshold=float(flags.get("stream_threshold", 100.0)),
        rep_stat=rep_stat,
        clamp=bool(flags.get("clamp", False)),
        upsampler_year=bool(flags.get("upsampler_year", False)),
        idw_power=float(flags.get("idw_power", 2.0)),
        synth=doc.get("synth"),
    )


def _world_file(m, key, needed_by):
    p = m.world / WORLD_FILES[key]
    if not p.is_file():
        raise InputError(f"{needed_by}: missing input {p}")
    return p


def _artifact(m, name, needed_by=None):
    p = m.workdir / name
    if needed_by is not None and not p.is_file():
        raise InputError(f"{needed_by}: missing artifact {p}; "
                         "run the upstream stage first")
    return p


# ---------------------------------------------------------------------------
# Artifact tables
# ---------------------------------------------------------------------------

def _hgf_cells(vec):
    return [str(int(getattr(vec, f))) if f == "lithology"
            else _fmt(getattr(vec, f)) for f in HGF_FIELDS]


def _parse_hgf(row, offset):
    kwargs = {}
    for i, f in enumerate(HGF_FIELDS):
        raw = row[offset + i]
        kwargs[f] = int(raw) if f == "lithology" else float(raw)
    return HgfVector(**kwargs)


def _read_table(path, want_header, needed_by):
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != want_header:
            raise InputError(f"{needed_by}: {path} has unexpected header")
        return [row for row in reader if row]


POINTS_HEADER = ["point_index", "lat", "lon", "serial_id", *HGF_FIELDS]
STATIONS_HEADER = ["station_id", "lat", "lon", *HGF_FIELDS]
PSEUDO_HEADER = ["lat", "lon", "year", "max_gwl_m", "min_gwl_m", "source"]
DOWNSCALE_HEADER = ["point_index", "lat", "lon", "max_gwl_m", "min_gwl_m"]
RECHARGE_HEADER = ["point_index", "lat", "lon", "year", "recharge_cm"]
EVAL_HEADER = ["year", "n", "r2_max", "mse_max", "r2_min", "mse_min"]


def _write_points_table(path, points, serials, vecs):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(POINTS_HEADER)
        for i, (p, s, v) in enumerate(zip(points, serials, vecs)):
            w.writerow([i, _fmt(p.lat), _fmt(p.lon), s, *_hgf_cells(v)])


def _read_points_table(m, needed_by):
    path = _artifact(m, "hgf_points.csv", needed_by)
    points, serials, vecs = [], [], []
    for i, row in enumerate(_read_table(path, POINTS_HEADER, needed_by)):
        if int(row[0]) != i:
            raise InputError(f"{needed_by}: {path} rows out of order at {i}")
        points.append(GeoPoint(float(row[1]), float(row[2])))
        serials.append(int(row[3]))
        vecs.append(_parse_hgf(row, 4))
    if not points:
        raise InputError(f"{needed_by}: {path} is empty")
    return points, serials, vecs


def _write_stations_table(path, station_rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STATIONS_HEADER)
        for sid, point, vec in station_rows:
            w.writerow([sid, _fmt(point.lat), _fmt(point.lon), *_hgf_cells(vec)])


def _read_stations_table(m, needed_by):
    path = _artifact(m, "hgf_stations.csv", needed_by)
    out = {}
    for row in _read_table(path, STATIONS_HEADER, needed_by):
        out[row[0]] = (GeoPoint(float(row[1]), float(row[2])),
                       _parse_hgf(row, 3))
    return out


def _write_pseudo_table(path, pseudo):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PSEUDO_HEADER)
        for p in pseudo.points:
            w.writerow([_fmt(p.point.lat), _fmt(p.point.lon), p.year,
                        _fmt(p.max_gwl), _fmt(p.min_gwl), p.source])


def _read_pseudo_table(m, needed_by):
    path = _artifact(m, "pseudo_gt.csv", needed_by)
    points = []
    for row in _read_table(path, PSEUDO_HEADER, needed_by):
        points.append(pipeline.PseudoPoint(
            GeoPoint(float(row[0]), float(row[1])), int(row[2]),
            float(row[3]), float(row[4]), row[5]))
    if not points:
        raise InputError(f"{needed_by}: {path} is empty")
    return points


# ---------------------------------------------------------------------------
# Stage helpers
# ---------------------------------------------------------------------------

def _load_feature_rasters(m, needed_by):
    rasters = {}
    for name in HGF_FIELDS:
        p = m.workdir / "features" / f"{name}.asc"
        if not p.is_file():
            raise InputError(f"{needed_by}: missing artifact {p}; "
                             "run the features stage first")
        rasters[name] = read_ascii_grid(p)
    return rasters


def _station_locations(obs):
    out = {}
    for o in obs:
        prev = out.setdefault(o.station_id, o.location)
        if prev != o.location:
            raise InputError(f"station {o.station_id} reported from two "
                             "different locations")
    return out


def _attached_cells(m, cells, serials, vecs):
    members = {}
    for serial, vec in zip(serials, vecs):
        members.setdefault(serial, []).append(vec)
    try:
        return pipeline.attach_representatives(cells, members, stat=m.rep_stat)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _upsample_inputs(m, needed_by):
    """Everything the upsampler stages share: cells, rows, lookup tables."""
    gldas_path = _world_file(m, "gldas", needed_by)
    points, serials, vecs = _read_points_table(m, needed_by)
    stations = _read_stations_table(m, needed_by)
    pseudo_points = _read_pseudo_table(m, needed_by)

    cells = read_gldas_csv(gldas_path)
    cells = _attached_cells(m, cells, serials, vecs)

    hgf_of = dict(zip(points, vecs))
    mapping = dict(zip(points, serials))
    for sid, (pt, vec) in sorted(stations.items()):
        hgf_of.setdefault(pt, vec)
    off_grid = [p.point for p in pseudo_points if p.point not in mapping]
    if off_grid:
        extra = pipeline.serials_for_points(off_grid, cells)
        mapping.update(extra)

    rows = pipeline.build_upsample_rows(cells, pseudo_points, hgf_of, mapping)
    return cells, rows, points, serials, vecs, mapping


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_synth(m):
    if not m.synth:
        raise InputError("manifest has no [synth] table")
    t = dict(m.synth)
    _check_keys(t, {"width_m", "height_m", "lat_min", "lon_min", "n_stations",
                    "dem_cellsize", "fishnet_cell", "gldas_cell",
                    "station_min_fraction", "noise_sd", "trend",
                    "min_reporting", "shift_year", "shift_m"}, "[synth]")
    for key in ("width_m", "height_m", "n_stations"):
        if key not in t:
            raise InputError(f"[synth]: {key} is mandatory")
    extent = synthdata.extent_for(
        float(t["width_m"]), float(t["height_m"]),
        lat_min=float(t.get("lat_min", 23.0)),
        lon_min=float(t.get("lon_min", 90.0)))
    cfg = synthdata.WorldConfig(
        seed=m.seed, extent=extent, years=m.years,
        n_stations=int(t["n_stations"]),
        dem_cellsize=float(t.get("dem_cellsize", 1000.0)),
        fishnet_cell=float(t.get("fishnet_cell", 2000.0)),
        gldas_cell=float(t.get("gldas_cell", 24000.0)),
        station_min_fraction=float(t.get("station_min_fraction", 0.45)),
        noise_sd=float(t.get("noise_sd", 0.15)),
        trend=float(t.get("trend", 0.05)),
        min_reporting=t.get("min_reporting", "random"),
        shift_year=int(t["shift_year"]) if t.get("shift_year") else None,
        shift_m=float(t.get("shift_m", 0.0)))
    world = synthdata.generate_world(cfg)
    synthdata.write_world_bundle(world, m.world)
    _emit("synth", points=len(world.fishnet), stations=len(world.station_points),
          cells=sum(len(v) for v in world.cells.values()), years=list(m.years))
    return 0


def cmd_features(m):
    dem = read_ascii_grid(_world_file(m, "dem", "features"))
    ancillary = {k: read_ascii_grid(_world_file(m, k, "features"))
                 for k in ("sy", "clay", "lithology", "nir", "red", "swir")}
    rasters = hgf_rasters(
        dem, ancillary["sy"], ancillary["clay"], ancillary["lithology"],
        ancillary["nir"], ancillary["red"], ancillary["swir"],
        cellsize_m=dem.cellsize * M_PER_DEG,
        stream_threshold=m.stream_threshold)

    outdir = m.workdir / "features"
    outdir.mkdir(parents=True, exist_ok=True)
    for name, raster in rasters.items():
        write_ascii_grid(raster, outdir / f"{name}.asc")

    fishnet_path = _world_file(m, "fishnet", "features")
    points, serials = [], []
    for row in _read_table(fishnet_path, synthdata.FISHNET_HEADER, "features"):
        points.append(GeoPoint(float(row[1]), float(row[2])))
        serials.append(int(row[3]))
    if not points:
        raise InputError(f"features: {fishnet_path} is empty")
    vecs = sample_hgf(rasters, points)
    _write_points_table(m.workdir / "hgf_points.csv", points, serials, vecs)

    obs, _ = read_wells_csv(_world_file(m, "wells", "features"))
    locations = _station_locations(obs)
    station_rows = []
    for sid in sorted(locations):
        vec = sample_hgf(rasters, [locations[sid]])[0]
        station_rows.append((sid, locations[sid], vec))
    _write_stations_table(m.workdir / "hgf_stations.csv", station_rows)

    _emit("features", rasters=len(rasters), points=len(points),
          stations=len(station_rows), hgf_columns=len(HGF_FIELDS))
    return 0


def cmd_pseudo_gt(m):
    obs, ingest = read_wells_csv(_world_file(m, "wells", "pseudo_gt"))
    points, _, vecs = _read_points_table(m, "pseudo_gt")
    stations = _read_stations_table(m, "pseudo_gt")
    station_hgfs = {sid: vec for sid, (_, vec) in stations.items()}

    rows_max = pipeline.assemble_training_rows(obs, station_hgfs, "max")
    max_model, max_metrics = pipeline.train_max_model(rows_max, m.forest)

    rows_min = pipeline.assemble_training_rows(obs, station_hgfs, "min")
    missing = [i for i, r in enumerate(rows_min) if r.max_gwl_cond is None]
    if missing:
        fill = pipeline.predict_phase(
            max_model, [rows_min[i].hgf for i in missing],
            [rows_min[i].year for i in missing])
        for k, i in enumerate(missing):
            rows_min[i] = replace(rows_min[i], max_gwl_cond=float(fill[k]))
    min_model, min_metrics = pipeline.train_min_model(rows_min, m.forest)

    pseudo = pipeline.generate_pseudo_gt(
        max_model, min_model, points, vecs, m.years, obs, station_hgfs,
        clamp=m.clamp)

    m.workdir.mkdir(parents=True, exist_ok=True)
    (m.workdir / "max_model.json").write_text(max_model.to_json() + "\n")
    (m.workdir / "min_model.json").write_text(min_model.to_json() + "\n")
    _write_pseudo_table(m.workdir / "pseudo_gt.csv", pseudo)

    _emit("pseudo_gt", points=len(pseudo.points), dropped=pseudo.dropped_count,
          insitu=len(obs), violation_rate=pseudo.violation_rate,
          rejected_rows=ingest.rejected,
          max_r2=max_metrics.r2 if max_metrics else None,
          min_r2=min_metrics.r2 if min_metrics else None)
    return 0


def cmd_train_upsampler(m):
    _, rows, *_ = _upsample_inputs(m, "train_upsampler")
    up, report = pipeline.train_upsampler(rows, m.forest,
                                          include_year=m.upsampler_year)
    (m.workdir / "upsampler.json").write_text(up.to_json() + "\n")
    _emit("train_upsampler", rows=len(rows),
          max_r2=report["max"].r2 if "max" in report else None,
          min_r2=report["min"].r2 if "min" in report else None,
          features=len(up.feature_names))
    return 0


def _load_upsampler(m, needed_by):
    path = _artifact(m, "upsampler.json", needed_by)
    return pipeline.upsampler_from_json(path.read_text())


def cmd_downscale(m, year):
    if year is None:
        raise InputError("downscale needs --year")
    up = _load_upsampler(m, "downscale")
    points, serials, vecs = _read_points_table(m, "downscale")
    cells = read_gldas_csv(_world_file(m, "gldas", "downscale"))
    year_cells = [c for c in cells if c.year == year]
    if not year_cells:
        raise InputError(f"no GLDAS cells for year {year}")
    year_cells = _attached_cells(m, year_cells, serials, vecs)
    mapping = dict(zip(points, serials))
    out = pipeline.downscale_year(up, year_cells, points, vecs, mapping)

    path = m.workdir / f"downscale_{year}.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DOWNSCALE_HEADER)
        for i, (p, hi, lo) in enumerate(out):
            w.writerow([i, _fmt(p.lat), _fmt(p.lon), _fmt(hi), _fmt(lo)])

    violations = sum(1 for _, hi, lo in out if lo > hi)
    _emit("downscale", year=year, points=len(out),
          violation_rate=violations / len(out))
    return 0


def cmd_recharge(m):
    points, _, vecs = _read_points_table(m, "recharge")
    rows = []
    for year in m.years:
        path = _artifact(m, f"downscale_{year}.csv", "recharge")
        table = _read_table(path, DOWNSCALE_HEADER, "recharge")
        if len(table) != len(points):
            raise InputError(f"recharge: {path} has {len(table)} rows, "
                             f"expected {len(points)}")
        for row in table:
            i = int(row[0])
            rc = analysis.recharge(float(row[3]), float(row[4]), vecs[i].sy)
            rows.append((i, points[i], year, rc))

    path = m.workdir / "recharge.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECHARGE_HEADER)
        for i, p, year, rc in rows:
            w.writerow([i, _fmt(p.lat), _fmt(p.lon), year, _fmt(rc)])

    mean = sum(r[3] for r in rows) / len(rows)
    _emit("recharge", rows=len(rows), years=list(m.years), mean_cm=mean)
    return 0


def cmd_trends(m):
    path = _artifact(m, "recharge.csv", "trends")
    by_point = {}
    for row in _read_table(path, RECHARGE_HEADER, "trends"):
        i = int(row[0])
        entry = by_point.setdefault(
            i, (GeoPoint(float(row[1]), float(row[2])), [], []))
        entry[1].append(int(row[3]))
        entry[2].append(float(row[4]))

    features = []
    counts = {}
    for i in sorted(by_point):
        point, years, values = by_point[i]
        order = np.argsort(years, kind="stable")
        series = analysis.PointSeries(
            years=[years[j] for j in order],
            values=[values[j] for j in order], location=point)
        res = analysis.trend_summary(series, recharge_bins=True)
        cat = analysis.categorize_recharge_slope(res.sen_slope)
        counts[cat.label] = counts.get(cat.label, 0) + 1
        features.append((point, {
            "point_index": i,
            "sen_slope_cm_per_year": res.sen_slope,
            "mk_s": res.s_stat,
            "p_value": res.p_two_sided,
            "category": cat.label,
            "clamped": cat.clamped,
        }))

    out = m.workdir / "trends.geojson"
    write_geojson(features, out)
    _emit("trends", points=len(features),
          categories={k: counts[k] for k in sorted(counts)})
    return 0


def cmd_eval(m):
    _, rows, *_ = _upsample_inputs(m, "eval")
    all_years = {r.year for r in rows}
    models = {}

    def train_fn(train_rows):
        held = (all_years - {r.year for r in train_rows}).pop()
        if held not in models:
            models[held], _ = pipeline.train_upsampler(
                train_rows, m.forest, include_year=m.upsampler_year,
                holdout=False)
        return models[held]

    def eval_max(model, test_rows):
        hi, _ = model.predict_rows(test_rows)
        return metrics([r.max_gwl for r in test_rows], hi)

    def eval_min(model, test_rows):
        _, lo = model.predict_rows(test_rows)
        return metrics([r.min_gwl for r in test_rows], lo)

    res_max = loyo_cv(rows, train_fn, eval_max)
    res_min = loyo_cv(rows, train_fn, eval_min)

    path = m.workdir / "eval.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVAL_HEADER)
        for year in sorted(res_max.folds):
            fmax, fmin = res_max.folds[year], res_min.folds[year]
            w.writerow([year, fmax.n, _fmt(fmax.r2), _fmt(fmax.mse),
                        _fmt(fmin.r2), _fmt(fmin.mse)])
            _emit("loyo_fold", year=year, n=fmax.n, r2_max=fmax.r2,
                  mse_max=fmax.mse, r2_min=fmin.r2, mse_min=fmin.mse)

    _emit("loyo", years=len(res_max.folds), mean_r2_max=res_max.mean_r2,
          mean_r2_min=res_min.mean_r2, mean_mse_max=res_max.mean_mse,
          mean_mse_min=res_min.mean_mse)
    return 0


# ---------------------------------------------------------------------------
# Service
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ServeContext:
    upsampler: object
    rasters: dict
    reps: dict
    cells_by_year: dict
    fish_lat: np.ndarray
    fish_lon: np.ndarray
    fish_serial: np.ndarray


class RequestError(Exception):
    def __init__(self, status, reason):
        super().__init__(reason)
        self.status = status
        self.reason = reason


def build_serve_context(m):
    up = _load_upsampler(m, "serve")
    rasters = _load_feature_rasters(m, "serve")
    points, serials, vecs = _read_points_table(m, "serve")
    cells = read_gldas_csv(_world_file(m, "gldas", "serve"))
    cells = _attached_cells(m, cells, serials, vecs)
    reps = {}
    cells_by_year = {}
    for cell in cells:
        reps.setdefault(cell.serial_id, cell.rep_hgf)
        cells_by_year.setdefault(cell.year, {})[cell.serial_id] = cell
    return ServeContext(
        upsampler=up, rasters=rasters, reps=reps, cells_by_year=cells_by_year,
        fish_lat=np.array([p.lat for p in points]),
        fish_lon=np.array([p.lon for p in points]),
        fish_serial=np.array(serials, dtype=np.int64))


def _require_number(doc, key):
    value = doc.get(key)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise RequestError(422, f"field {key!r} must be a number")
    return value


def predict_point(ctx, doc):
    if not isinstance(doc, dict):
        raise RequestError(422, "request body must be a JSON object")
    lat = float(_require_number(doc, "lat"))
    lon = float(_require_number(doc, "lon"))
    year = _require_number(doc, "year")
    if isinstance(year, float) and not year.is_integer():
        raise RequestError(422, "field 'year' must be an integer")
    year = int(year)

    year_cells = ctx.cells_by_year.get(year)
    if year_cells is None:
        raise RequestError(422, f"unknown year {year}")
    point = GeoPoint(lat, lon)
    try:
        vec = sample_hgf(ctx.rasters, [point])[0]
    except ValueError as exc:
        raise RequestError(422, f"point outside coverage: {exc}") from None

    d2 = (ctx.fish_lat - lat) ** 2 + (ctx.fish_lon - lon) ** 2
    serial = int(ctx.fish_serial[int(np.argmin(d2))])
    cell = year_cells.get(serial)
    if cell is None:
        raise RequestError(422, f"no storage cell for serial {serial} "
                           f"in year {year}")

    row = pipeline.UpsampleRow(
        point=point, point_hgf=vec, rep_hgf=ctx.reps[serial], serial_id=serial,
        year=year, max_gws=cell.max_gws, min_gws=cell.min_gws,
        max_gwl=0.0, min_gwl=0.0)
    hi, lo = ctx.upsampler.predict_rows([row])
    rc = analysis.recharge(float(hi[0]), float(lo[0]), vec.sy)
    return {"max_gwl_m": float(hi[0]), "min_gwl_m": float(lo[0]),
            "recharge_cm": rc}


class _Handler(BaseHTTPRequestHandler):
    server_version = "aqd"

    def log_message(self, fmt, *args):
        log.debug("serve: %s", fmt % args)

    def _send(self, status, doc):
        body = json.dumps(doc, separators=(",", ":")).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path == "/health":
            self._send(200, {"status": "ok"})
        else:
            self._send(404, {"error": "not found"})

    def do_POST(self):
        if self.path != "/predict":
            self._send(404, {"error": "not found"})
            return
        length = int(self.headers.get("Content-Length") or 0)
        body = self.rfile.read(length)
        try:
            doc = json.loads(body)
        except json.JSONDecodeError:
            self._send(400, {"error": "malformed JSON"})
            return
        try:
            self._send(200, predict_point(self.server.ctx, doc))
        except RequestError as exc:
            self._send(exc.status, {"error": exc.reason})


def make_server(m, host, port):
    server = ThreadingHTTPServer((host, port), _Handler)
    server.ctx = build_serve_context(m)
    return server


def cmd_serve(m, bind):
    host, _, port_s = bind.rpartition(":")
    if not host or not port_s.isdigit():
        raise InputError(f"invalid --bind {bind!r}; expected host:port")
    server = make_server(m, host, int(port_s))
    _emit("serve", bind=f"{host}:{int(port_s)}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _build_parser():
    parser = argparse.ArgumentParser(
        prog="aqd",
        description="Groundwater-level downscaling pipeline stages.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("synth", "features", "pseudo_gt", "train_upsampler",
                 "downscale", "recharge", "trends", "eval", "serve"):
        sp = sub.add_parser(name)
        sp.add_argument("--manifest", required=True)
        if name == "downscale":
            sp.add_argument("--year", type=int, required=True)
        if name == "serve":
            sp.add_argument("--bind", default="127.0.0.1:8080")
    return parser


def main(argv=None):
    level = os.environ.get("AQD_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(stream=sys.stderr,
                        level=getattr(logging, level, logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")
    args = _build_parser().parse_args(argv)
    try:
        m = load_manifest(args.manifest)
        if args.command != "synth":
            m.workdir.mkdir(parents=True, exist_ok=True)
        if args.command == "synth":
            return cmd_synth(m)
        if args.command == "features":
            return cmd_features(m)
        if args.command == "pseudo_gt":
            return cmd_pseudo_gt(m)
        if args.command == "train_upsampler":
            return cmd_train_upsampler(m)
        if args.command == "downscale":
            return cmd_downscale(m, args.year)
        if args.command == "recharge":
            return cmd_recharge(m)
        if args.command == "trends":
            return cmd_trends(m)
        if args.command == "eval":
            return cmd_eval(m)
        if args.command == "serve":
            return cmd_serve(m, args.bind)
        raise AssertionError(f"unreachable command {args.command}")
    except (InputError, ValueError) as exc:
        print(json.dumps({"event": "error", "kind": "input",
                          "message": str(exc)}), file=sys.stderr)
        return 2
    except Exception as exc:
        traceback.print_exc()
        print(json.dumps({"event": "error", "kind": "internal",
                          "message": str(exc)}), file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
