"""Deterministic synthetic world with known generative groundwater truth.

The generator builds a DEM from layered value noise, derives the full set of
hydro-geological rasters with the terrain module, and then defines the true
water levels as an explicit smooth function of the derived features, with
elevation carrying most of the variance. Coarse storage cells are an affine
decreasing function of cell-mean level plus bounded distortion, so the
storage/level inverse relation holds by construction.

All randomness flows from one seeded generator consumed in a fixed order,
so a config maps to exactly one world.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from aqd.geodata import (
    M_PER_DEG,
    GeoPoint,
    GldasCell,
    Raster,
    WellObservation,
    write_ascii_grid,
    write_gldas_csv,
    write_wells_csv,
)
from aqd.terrain import BoundingBox, fishnet_grid, hgf_rasters, sample_hgf

GWS_BASE_MM = 600.0
GWS_SLOPE_MM_PER_M = 30.0
GWS_DISTORTION_MM = 5.0
STREAM_THRESHOLD_CELLS = 100.0


def extent_for(width_m, height_m, lat_min=23.0, lon_min=90.0):
    """Bounding box of the requested metric size anchored at (lat_min, lon_min)."""
    dlat = height_m / M_PER_DEG
    mid_lat = lat_min + 0.5 * dlat
    dlon = width_m / (M_PER_DEG * math.cos(math.radians(mid_lat)))
    return BoundingBox(lat_min, lat_min + dlat, lon_min, lon_min + dlon)


@dataclass(frozen=True)
class WorldConfig:
    seed: int
    extent: BoundingBox
    years: tuple
    n_stations: int
    dem_cellsize: float = 1000.0
    fishnet_cell: float = 2000.0
    gldas_cell: float = 24000.0
    station_min_fraction: float = 0.45
    noise_sd: float = 0.15
    trend: float = 0.05
    min_reporting: str = "random"  # or "deep_biased"
    shift_year: int | None = None
    shift_m: float = 0.0

    def __post_init__(self):
        years = tuple(int(y) for y in self.years)
        if len(years) < 3:
            raise ValueError("need at least 3 years")
        if any(a >= b for a, b in zip(years, years[1:])):
            raise ValueError("years must be strictly increasing")
        object.__setattr__(self, "years", years)
        if self.fishnet_cell <= 0 or self.gldas_cell <= 0 or self.dem_cellsize <= 0:
            raise ValueError("cell sizes must be positive")
        ratio = self.gldas_cell / self.fishnet_cell
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError(
                f"gldas_cell ({self.gldas_cell}) must be an integer multiple "
                f"of fishnet_cell ({self.fishnet_cell})")
        if not 0.0 <= self.station_min_fraction <= 1.0:
            raise ValueError("station_min_fraction must be in [0, 1]")
        if self.n_stations < 1:
            raise ValueError("n_stations must be >= 1")
        if self.min_reporting not in ("random", "deep_biased"):
            raise ValueError(f"unknown min_reporting mode {self.min_reporting!r}")
        if self.noise_sd < 0.0:
            raise ValueError("noise_sd must be >= 0")
        if self.shift_year is not None and self.shift_year not in years:
            raise ValueError("shift_year must be one of the configured years")


@dataclass(frozen=True)
class World:
    config: WorldConfig
    dem: Raster
    rasters: dict            # HGF name -> Raster, ready for sampling
    bands: dict              # nir/red/swir input rasters
    fishnet: tuple           # GeoPoint, row-major from the north-west
    nx: int
    ny: int
    serials: tuple           # coarse-cell serial per fishnet point
    stations: tuple          # WellObservation rows, station-major then year
    station_points: dict     # station_id -> GeoPoint
    cells: dict              # year -> tuple of GldasCell, serial order
    static_max: np.ndarray = field(repr=False)
    fluctuation: np.ndarray = field(repr=False)

    def true_values(self, year):
        """Exact generative (max, min) arrays aligned with the fishnet."""
        year = int(year)
        if year not in self.config.years:
            raise ValueError(f"year {year} not in configured years")
        offset = self.config.trend * (year - self.config.years[0])
        if year == self.config.shift_year:
            offset += self.config.shift_m
        hi = self.static_max + offset
        return hi, hi - self.fluctuation

    def true_field(self, year):
        hi, lo = self.true_values(year)
        return {p: (float(hi[i]), float(lo[i])) for i, p in enumerate(self.fishnet)}


def _smoothstep(t):
    return t * t * (3.0 - 2.0 * t)


def _value_noise(rng, nrows, ncols, octaves=4):
    """Layered lattice noise, normalized to zero mean and unit spread."""
    out = np.zeros((nrows, ncols))
    period = max(4, max(nrows, ncols) // 4)
    amp = 1.0
    for _ in range(octaves):
        gnr = nrows // period + 3
        gnc = ncols // period + 3
        lattice = rng.standard_normal((gnr, gnc))
        ys = np.arange(nrows) / period
        xs = np.arange(ncols) / period
        y0 = ys.astype(np.int64)
        x0 = xs.astype(np.int64)
        ty = _smoothstep(ys - y0)[:, None]
        tx = _smoothstep(xs - x0)[None, :]
        a = lattice[np.ix_(y0, x0)]
        b = lattice[np.ix_(y0, x0 + 1)]
        c = lattice[np.ix_(y0 + 1, x0)]
        d = lattice[np.ix_(y0 + 1, x0 + 1)]
        top = a + (b - a) * tx
        bot = c + (d - c) * tx
        out += amp * (top + (bot - top) * ty)
        amp *= 0.5
        period = max(2, period // 2)
    sd = out.std()
    if sd > 0:
        out = (out - out.mean()) / sd
    return out


def _unit(values):
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.full_like(values, 0.5)
    return (values - lo) / (hi - lo)


def generate_world(cfg):
    rng = np.random.default_rng(cfg.seed)
    ext = cfg.extent

    cs_deg = cfg.dem_cellsize / M_PER_DEG
    pad = 2
    ncols = math.ceil((ext.lon_max - ext.lon_min) / cs_deg) + 2 * pad
    nrows = math.ceil((ext.lat_max - ext.lat_min) / cs_deg) + 2 * pad
    xll = ext.lon_min - pad * cs_deg
    yll = ext.lat_min - pad * cs_deg

    relief = 60.0 * _value_noise(rng, nrows, ncols)
    theta = rng.uniform(0.0, 2.0 * math.pi)
    rows_idx = np.arange(nrows)[:, None]
    cols_idx = np.arange(ncols)[None, :]
    span = max(nrows, ncols)
    tilt = 40.0 * (np.cos(theta) * cols_idx + np.sin(theta) * rows_idx) / span
    jitter = 0.01 * rng.standard_normal((nrows, ncols))
    dem = Raster(ncols, nrows, xll, yll, cs_deg, -9999.0, relief + tilt + jitter)

    def ancillary(transform):
        return dem.with_values(transform(_value_noise(rng, nrows, ncols)))

    sy_raster = ancillary(lambda z: 0.05 + 0.25 * _unit(z))
    clay_raster = ancillary(lambda z: 5.0 + 40.0 * _unit(z))
    lith_noise = _value_noise(rng, nrows, ncols)
    cuts = np.quantile(lith_noise, [0.25, 0.5, 0.75])
    lith_raster = dem.with_values(
        1.0 + np.searchsorted(cuts, lith_noise.ravel()).reshape(lith_noise.shape))
    nir = ancillary(lambda z: 0.30 + 0.25 * _unit(z))
    red = ancillary(lambda z: 0.20 + 0.20 * _unit(z))
    swir = ancillary(lambda z: 0.25 + 0.20 * _unit(z))

    rasters = hgf_rasters(
        dem, sy_raster, clay_raster, lith_raster, nir, red, swir,
        cellsize_m=cfg.dem_cellsize, stream_threshold=STREAM_THRESHOLD_CELLS)

    points, nx, ny = fishnet_grid(ext, cfg.fishnet_cell)
    vecs = sample_hgf(rasters, points)
    n_points = len(points)

    def pull(name):
        return np.array([getattr(v, name) for v in vecs], dtype=float)

    def nrm(x):
        sd = x.std()
        return (x - x.mean()) / sd if sd > 0 else np.zeros_like(x)

    elev = pull("elevation")
    clay = pull("lithology_clay_thickness")
    twi_vals = pull("twi")
    sy_vals = pull("sy")
    static_max = (8.0 + 3.0 * nrm(elev) + 0.8 * nrm(clay)
                  - 0.6 * nrm(twi_vals) + 0.4 * nrm(sy_vals))
    fluctuation = 1.2 + 0.5 * (_unit(twi_vals) + _unit(sy_vals))

    ratio = int(round(cfg.gldas_cell / cfg.fishnet_cell))
    ncx = math.ceil(nx / ratio)
    serials = np.empty(n_points, dtype=np.int64)
    for i in range(n_points):
        row, col = divmod(i, nx)
        serials[i] = (row // ratio) * ncx + (col // ratio) + 1

    if cfg.n_stations > n_points:
        raise ValueError(
            f"n_stations ({cfg.n_stations}) exceeds fishnet points ({n_points})")
    chosen = np.sort(rng.choice(n_points, size=cfg.n_stations, replace=False))
    n_min = round(cfg.station_min_fraction * cfg.n_stations)
    if cfg.min_reporting == "random":
        reports_min = rng.random(cfg.n_stations) < cfg.station_min_fraction
    else:
        # deepest static max levels keep their min record; everyone else
        # loses it, concentrating min coverage in high-depth zones
        depth_order = np.argsort(-static_max[chosen], kind="stable")
        reports_min = np.zeros(cfg.n_stations, dtype=bool)
        reports_min[depth_order[:n_min]] = True

    years = cfg.years
    year0 = years[0]

    def true_at(idx, year):
        offset = cfg.trend * (year - year0)
        if year == cfg.shift_year:
            offset += cfg.shift_m
        hi = static_max[idx] + offset
        return hi, hi - fluctuation[idx]

    stations = []
    station_points = {}
    for k, idx in enumerate(chosen):
        sid = f"ST{k:04d}"
        station_points[sid] = points[idx]
        for year in years:
            hi, lo = true_at(idx, year)
            max_obs = hi + rng.normal(0.0, cfg.noise_sd)
            min_obs = None
            if reports_min[k]:
                min_obs = lo + rng.normal(0.0, cfg.noise_sd)
            stations.append(WellObservation(
                station_id=sid, location=points[idx], year=year,
                max_gwl=float(max_obs),
                min_gwl=None if min_obs is None else float(min_obs)))

    members = {}
    for i, serial in enumerate(serials):
        members.setdefault(int(serial), []).append(i)
    cells = {}
    for year in years:
        offset = cfg.trend * (year - year0)  # satellite misses any shift
        year_cells = []
        for serial in sorted(members):
            idxs = members[serial]
            cm_max = float(np.mean(static_max[idxs])) + offset
            cm_min = cm_max - float(np.mean(fluctuation[idxs]))
            lat = sum(points[i].lat for i in idxs) / len(idxs)
            lon = sum(points[i].lon for i in idxs) / len(idxs)
            d1, d2 = rng.uniform(-GWS_DISTORTION_MM, GWS_DISTORTION_MM, 2)
            max_gws = GWS_BASE_MM - GWS_SLOPE_MM_PER_M * cm_min + d1
            min_gws = GWS_BASE_MM - GWS_SLOPE_MM_PER_M * cm_max + d2
            year_cells.append(GldasCell(
                serial_id=serial, centroid=GeoPoint(lat, lon), year=year,
                max_gws=float(max_gws), min_gws=float(min_gws)))
        cells[year] = tuple(year_cells)

    return World(config=cfg, dem=dem, rasters=rasters,
                 bands={"nir": nir, "red": red, "swir": swir},
                 fishnet=tuple(points), nx=nx, ny=ny,
                 serials=tuple(int(s) for s in serials),
                 stations=tuple(stations), station_points=station_points,
                 cells=cells, static_max=static_max, fluctuation=fluctuation)


FISHNET_HEADER = ["point_index", "lat", "lon", "serial_id"]


def write_world_bundle(world, outdir):
    """Materialize the generated inputs in the interchange formats."""
    outdir.mkdir(parents=True, exist_ok=True)
    write_ascii_grid(world.dem, outdir / "dem.asc")
    write_ascii_grid(world.rasters["sy"], outdir / "sy.asc")
    write_ascii_grid(world.rasters["lithology_clay_thickness"], outdir / "clay.asc")
    write_ascii_grid(world.rasters["lithology"], outdir / "lithology.asc")
    for name, raster in world.bands.items():
        write_ascii_grid(raster, outdir / f"{name}.asc")
    write_wells_csv(world.stations, outdir / "wells.csv")
    all_cells = [c for year in sorted(world.cells) for c in world.cells[year]]
    write_gldas_csv(all_cells, outdir / "gldas.csv")
    with open(outdir / "fishnet.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(FISHNET_HEADER)
        for i, point in enumerate(world.fishnet):
            writer.writerow([i, repr(point.lat), repr(point.lon), world.serials[i]])
