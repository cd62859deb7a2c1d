"""Core spatial types and file I/O.

Rasters are exchanged as ESRI ASCII grids, wells and coarse storage cells as
CSV, exported point layers as GeoJSON. Coordinates are WGS84 latitude and
longitude everywhere. Raster values are stored row-major with row 0 at the
northern edge, following the ASCII grid convention.

All types are immutable after construction (the raster array is treated as
read-only by convention) and safe to share across workers.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

EARTH_RADIUS_M = 6_371_000.0

# meters spanned by one degree of latitude (and of longitude at the equator)
M_PER_DEG = EARTH_RADIUS_M * math.pi / 180.0


def _fmt(x: float) -> str:
    """Shortest decimal string that round-trips the float exactly."""
    return repr(float(x))


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0):
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not (-180.0 <= self.lon <= 180.0):
            raise ValueError(f"longitude {self.lon} outside [-180, 180]")


@dataclass
class Raster:
    """Rectangular grid with georeferencing header.

    values has shape (nrows, ncols); row 0 is the northern edge. xll/yll are
    the coordinates of the lower-left corner of the lower-left cell.
    """

    ncols: int
    nrows: int
    xll: float
    yll: float
    cellsize: float
    nodata: float
    values: np.ndarray

    def __post_init__(self):
        if self.ncols < 1 or self.nrows < 1:
            raise ValueError("raster must have at least one row and column")
        if self.cellsize <= 0:
            raise ValueError(f"cellsize must be positive, got {self.cellsize}")
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.size != self.ncols * self.nrows:
            raise ValueError(
                f"expected {self.ncols * self.nrows} values, got {arr.size}"
            )
        self.values = arr.reshape(self.nrows, self.ncols)

    def nodata_mask(self) -> np.ndarray:
        return self.values == self.nodata

    def with_values(self, values: np.ndarray, nodata: float | None = None) -> "Raster":
        """New raster sharing this one's georeferencing."""
        return Raster(
            self.ncols,
            self.nrows,
            self.xll,
            self.yll,
            self.cellsize,
            self.nodata if nodata is None else nodata,
            values,
        )

    def cell_of(self, point: GeoPoint) -> tuple[int, int]:
        """(row, col) of the cell containing the point; nearest-cell sampling."""
        col = int(math.floor((point.lon - self.xll) / self.cellsize))
        row_from_south = int(math.floor((point.lat - self.yll) / self.cellsize))
        row = self.nrows - 1 - row_from_south
        if not (0 <= col < self.ncols and 0 <= row < self.nrows):
            raise ValueError(
                f"point ({point.lat}, {point.lon}) outside raster extent"
            )
        return row, col

    def cell_center(self, row: int, col: int) -> GeoPoint:
        lon = self.xll + (col + 0.5) * self.cellsize
        lat = self.yll + (self.nrows - 1 - row + 0.5) * self.cellsize
        return GeoPoint(lat, lon)

    def value_at(self, point: GeoPoint) -> float:
        row, col = self.cell_of(point)
        return float(self.values[row, col])


@dataclass(frozen=True)
class WellObservation:
    """One station-year record of max/min groundwater level, meters BGL.

    Raw agency data may violate min <= max; records are stored as-is and the
    pipeline reports violation rates instead of silently repairing them.
    """

    station_id: str
    location: GeoPoint
    year: int
    max_gwl: float | None = None
    min_gwl: float | None = None

    def __post_init__(self):
        if self.max_gwl is None and self.min_gwl is None:
            raise ValueError(
                f"station {self.station_id} year {self.year}: "
                "at least one of max_gwl/min_gwl must be present"
            )


@dataclass(frozen=True)
class HgfVector:
    """The 17 hydro-geological factors for one point.

    lithology is a categorical integer code; it is one-hot expanded at model
    input, not here. ndvi/ndwi are the yearly means for the record's year.
    """

    slope: float
    drainage_density: float
    elevation: float
    dist_stream: float
    twi: float
    tri: float
    sti: float
    spi: float
    curvature: float
    plan_curvature: float
    profile_curvature: float
    aspect: float
    sy: float
    lithology_clay_thickness: float
    lithology: int
    ndvi: float
    ndwi: float

    def __post_init__(self):
        if not (0.0 <= self.sy <= 1.0):
            raise ValueError(f"sy {self.sy} outside [0, 1]")
        if not (-1.0 <= self.ndvi <= 1.0):
            raise ValueError(f"ndvi {self.ndvi} outside [-1, 1]")
        if not (-1.0 <= self.ndwi <= 1.0):
            raise ValueError(f"ndwi {self.ndwi} outside [-1, 1]")


#: field order used everywhere HGFs are serialized or vectorized
HGF_FIELDS = (
    "slope",
    "drainage_density",
    "elevation",
    "dist_stream",
    "twi",
    "tri",
    "sti",
    "spi",
    "curvature",
    "plan_curvature",
    "profile_curvature",
    "aspect",
    "sy",
    "lithology_clay_thickness",
    "lithology",
    "ndvi",
    "ndwi",
)


@dataclass(frozen=True)
class GldasCell:
    """One coarse storage grid cell for one year.

    max_gws/min_gws are water-equivalent millimeters. serial_id is the join
    key between the coarse grid and the fine fishnet.
    """

    serial_id: int
    centroid: GeoPoint
    year: int
    max_gws: float
    min_gws: float
    rep_hgf: HgfVector | None = None

    def __post_init__(self):
        if self.min_gws > self.max_gws:
            raise ValueError(
                f"cell {self.serial_id} year {self.year}: "
                f"min_gws {self.min_gws} > max_gws {self.max_gws}"
            )


# ---------------------------------------------------------------------------
# ESRI ASCII grid I/O
# ---------------------------------------------------------------------------

_HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")


def read_ascii_grid(path) -> Raster:
    """Parse an ESRI ASCII grid.

    The six header keys must appear in the canonical order. Values are
    whitespace-separated, row-major, row 0 = north.
    """
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if len(lines) < 6:
        raise ValueError(f"{path}: truncated header, expected 6 header lines")
    header: dict[str, float] = {}
    for i, key in enumerate(_HEADER_KEYS):
        parts = lines[i].split()
        if len(parts) != 2 or parts[0].lower() != key:
            raise ValueError(
                f"{path}: line {i + 1}: expected header '{key} <value>', got {lines[i]!r}"
            )
        try:
            header[key] = float(parts[1])
        except ValueError:
            raise ValueError(
                f"{path}: line {i + 1}: non-numeric header value {parts[1]!r}"
            ) from None
    ncols = int(header["ncols"])
    nrows = int(header["nrows"])
    if ncols != header["ncols"] or nrows != header["nrows"]:
        raise ValueError(f"{path}: ncols/nrows must be integers")
    tokens = " ".join(lines[6:]).split()
    if len(tokens) != ncols * nrows:
        raise ValueError(
            f"{path}: expected {ncols * nrows} values, found {len(tokens)}"
        )
    try:
        values = np.array(tokens, dtype=np.float64)
    except ValueError:
        raise ValueError(f"{path}: non-numeric cell value in grid body") from None
    return Raster(
        ncols,
        nrows,
        header["xllcorner"],
        header["yllcorner"],
        header["cellsize"],
        header["nodata_value"],
        values,
    )


def write_ascii_grid(raster: Raster, path) -> None:
    """Serialize a raster in canonical form: full-precision shortest floats."""
    out = [
        f"ncols {raster.ncols}",
        f"nrows {raster.nrows}",
        f"xllcorner {_fmt(raster.xll)}",
        f"yllcorner {_fmt(raster.yll)}",
        f"cellsize {_fmt(raster.cellsize)}",
        f"NODATA_value {_fmt(raster.nodata)}",
    ]
    for row in raster.values:
        out.append(" ".join(_fmt(v) for v in row))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(out))
        fh.write("\n")


# ---------------------------------------------------------------------------
# Wells CSV
# ---------------------------------------------------------------------------

WELLS_HEADER = ["station_id", "lat", "lon", "year", "max_gwl_m", "min_gwl_m"]


@dataclass(frozen=True)
class WellIngestSummary:
    both: int
    max_only: int
    min_only: int
    rejected: int

    @property
    def accepted(self) -> int:
        return self.both + self.max_only + self.min_only


def read_wells_csv(path) -> tuple[list[WellObservation], WellIngestSummary]:
    """Read well observations; empty GWL fields mean absent.

    Rows where both GWL values are absent are rejected (counted, not raised).
    Order is preserved and accepted + rejected equals the input row count.
    """
    wells: list[WellObservation] = []
    seen: set[tuple[str, int]] = set()
    both = max_only = min_only = rejected = 0
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != WELLS_HEADER:
            raise ValueError(
                f"{path}: expected header {','.join(WELLS_HEADER)}, got {header}"
            )
        for idx, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != 6:
                raise ValueError(f"{path}: row {idx}: expected 6 fields, got {len(row)}")
            sid, lat_s, lon_s, year_s, max_s, min_s = (f.strip() for f in row)
            if not sid:
                raise ValueError(f"{path}: row {idx}: empty station_id")
            try:
                location = GeoPoint(float(lat_s), float(lon_s))
            except ValueError as exc:
                raise ValueError(f"{path}: row {idx}: {exc}") from None
            try:
                year = int(year_s)
            except ValueError:
                raise ValueError(f"{path}: row {idx}: non-integer year {year_s!r}") from None
            max_gwl = float(max_s) if max_s else None
            min_gwl = float(min_s) if min_s else None
            if max_gwl is None and min_gwl is None:
                rejected += 1
                continue
            key = (sid, year)
            if key in seen:
                raise ValueError(f"{path}: row {idx}: duplicate (station_id, year) {key}")
            seen.add(key)
            wells.append(WellObservation(sid, location, year, max_gwl, min_gwl))
            if max_gwl is not None and min_gwl is not None:
                both += 1
            elif max_gwl is not None:
                max_only += 1
            else:
                min_only += 1
    return wells, WellIngestSummary(both, max_only, min_only, rejected)


def write_wells_csv(wells: list[WellObservation], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(WELLS_HEADER)
        for w in wells:
            writer.writerow(
                [
                    w.station_id,
                    _fmt(w.location.lat),
                    _fmt(w.location.lon),
                    w.year,
                    "" if w.max_gwl is None else _fmt(w.max_gwl),
                    "" if w.min_gwl is None else _fmt(w.min_gwl),
                ]
            )


# ---------------------------------------------------------------------------
# Coarse storage grid CSV
# ---------------------------------------------------------------------------

GLDAS_HEADER = ["serial_id", "lat", "lon", "year", "max_gws_mm", "min_gws_mm"]


def read_gldas_csv(path) -> list[GldasCell]:
    """Read per-year coarse storage cells keyed by serial_id."""
    cells: list[GldasCell] = []
    seen: set[tuple[int, int]] = set()
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != GLDAS_HEADER:
            raise ValueError(
                f"{path}: expected header {','.join(GLDAS_HEADER)}, got {header}"
            )
        for idx, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != 6:
                raise ValueError(f"{path}: row {idx}: expected 6 fields, got {len(row)}")
            try:
                serial = int(row[0])
                centroid = GeoPoint(float(row[1]), float(row[2]))
                year = int(row[3])
                max_gws = float(row[4])
                min_gws = float(row[5])
            except ValueError as exc:
                raise ValueError(f"{path}: row {idx}: {exc}") from None
            key = (serial, year)
            if key in seen:
                raise ValueError(f"{path}: row {idx}: duplicate (serial_id, year) {key}")
            seen.add(key)
            try:
                cells.append(GldasCell(serial, centroid, year, max_gws, min_gws))
            except ValueError as exc:
                raise ValueError(f"{path}: row {idx}: {exc}") from None
    return cells


def write_gldas_csv(cells: list[GldasCell], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(GLDAS_HEADER)
        for c in cells:
            writer.writerow(
                [
                    c.serial_id,
                    _fmt(c.centroid.lat),
                    _fmt(c.centroid.lon),
                    c.year,
                    _fmt(c.max_gws),
                    _fmt(c.min_gws),
                ]
            )


# ---------------------------------------------------------------------------
# GeoJSON output
# ---------------------------------------------------------------------------


def write_geojson(points: list[tuple[GeoPoint, dict]], path) -> None:
    """Emit a FeatureCollection of Point features, [lon, lat] order.

    json serializes floats at full (shortest round-trip) precision, which
    satisfies the >= 6 significant digit requirement.
    """
    features = []
    for pt, props in points:
        for key in props:
            if not str(key).isidentifier():
                raise ValueError(f"property key {key!r} is not a valid identifier")
        features.append(
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [pt.lon, pt.lat]},
                "properties": dict(props),
            }
        )
    doc = {"type": "FeatureCollection", "features": features}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, separators=(",", ":"))
        fh.write("\n")


# ---------------------------------------------------------------------------
# Distance
# ---------------------------------------------------------------------------


def haversine_m(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters, Earth radius fixed at 6,371,000 m."""
    lat1, lon1 = math.radians(a.lat), math.radians(a.lon)
    lat2, lon2 = math.radians(b.lat), math.radians(b.lon)
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = math.sin(dlat / 2.0) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))
