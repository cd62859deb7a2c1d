"""Terrain feature derivation: the hydro-geological factor rasters.

Implements D8 flow routing with deterministic tie-breaking, pit filling by
priority flood, slope/curvature kernels, the wetness/ruggedness/stream-power
indices, stream distance and drainage density, band ratios, point sampling,
and fishnet generation.

Conventions
-----------
* Rasters are row-major with row 0 at the northern edge.
* D8 neighbors are indexed 0..7 in the order N, NE, E, SE, S, SW, W, NW
  (clockwise from north). Direction code -1 means the cell drains off the
  grid (outlet), -2 means nodata/undefined.
* Steepest descent maximizes drop/distance with distance 1 for cardinal and
  sqrt(2) for diagonal steps; ties go to the lowest neighbor index.
* Flats left by pit filling are drained along a distance-to-exit gradient:
  cells closer to a flat exit (grid edge, nodata margin, or an equal-height
  neighbor that already drains) receive flow from cells deeper in the flat.
* Raster headers may be in geographic degrees; operations that need metric
  lengths accept an explicit ``cellsize_m`` and fall back to the raster's
  own cellsize when omitted (plain metric grids).
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .geodata import M_PER_DEG, GeoPoint, HgfVector, HGF_FIELDS, Raster

# D8 neighbor offsets, clockwise from north: (drow, dcol)
D8_OFFSETS = (
    (-1, 0),   # N
    (-1, 1),   # NE
    (0, 1),    # E
    (1, 1),    # SE
    (1, 0),    # S
    (1, -1),   # SW
    (0, -1),   # W
    (-1, -1),  # NW
)
D8_DIST = tuple(math.sqrt(dr * dr + dc * dc) for dr, dc in D8_OFFSETS)

OFF_GRID = -1
UNDEFINED = -2


@dataclass(frozen=True)
class BoundingBox:
    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float

    def __post_init__(self):
        if self.lat_min > self.lat_max or self.lon_min > self.lon_max:
            raise ValueError("bounding box min exceeds max")

    @property
    def mid_lat(self) -> float:
        return 0.5 * (self.lat_min + self.lat_max)


@dataclass
class FlowField:
    """D8 directions plus contributing-cell counts for one DEM."""

    directions: np.ndarray   # int8 codes, see module docstring
    accumulation: np.ndarray  # int64, each cell counts itself
    dem: Raster              # the (filled) DEM the field was derived from

    def specific_area(self, cellsize_m: float | None = None) -> np.ndarray:
        """Contributing area per unit contour width: accumulation * cellsize."""
        cs = self.dem.cellsize if cellsize_m is None else cellsize_m
        return self.accumulation.astype(np.float64) * cs

    def accumulation_raster(self) -> Raster:
        vals = self.accumulation.astype(np.float64)
        vals[self.directions == UNDEFINED] = self.dem.nodata
        return self.dem.with_values(vals)


@dataclass
class SlopeField:
    """Per-cell gradient components and slope magnitude.

    gx is the eastward elevation change per cell spacing, gy the northward
    change (both in elevation units); percent and radians derive from
    sqrt(gx^2 + gy^2) / cellsize.
    """

    percent: np.ndarray
    radians: np.ndarray
    gx: np.ndarray
    gy: np.ndarray
    dem: Raster
    cellsize_m: float

    def percent_raster(self) -> Raster:
        vals = self.percent.copy()
        vals[self.dem.nodata_mask()] = self.dem.nodata
        return self.dem.with_values(vals)


# ---------------------------------------------------------------------------
# Pit filling (priority flood)
# ---------------------------------------------------------------------------


def fill_pits(dem: Raster) -> Raster:
    """Raise depressions to their spill level.

    Priority-flood: grow inward from the raster edge (and nodata margins),
    always expanding the lowest frontier cell; every visited cell is raised
    to at least the level of the frontier cell that reached it. Output >=
    input everywhere and every cell gains a non-ascending D8 path to the
    edge.
    """
    z = dem.values
    nodata = dem.nodata_mask()
    if nodata.all():
        raise ValueError("fill_pits: raster has no data cells")
    nrows, ncols = z.shape
    filled = z.copy()
    visited = nodata.copy()  # nodata cells never enter the frontier

    heap: list[tuple[float, int]] = []
    for r in range(nrows):
        for c in range(ncols):
            if visited[r, c]:
                continue
            on_edge = r == 0 or c == 0 or r == nrows - 1 or c == ncols - 1
            if not on_edge:
                # interior cells seed the frontier only when they touch nodata
                on_edge = any(
                    nodata[r + dr, c + dc] for dr, dc in D8_OFFSETS
                )
            if on_edge:
                heapq.heappush(heap, (filled[r, c], r * ncols + c))
                visited[r, c] = True

    while heap:
        level, idx = heapq.heappop(heap)
        r, c = divmod(idx, ncols)
        for dr, dc in D8_OFFSETS:
            nr, nc = r + dr, c + dc
            if 0 <= nr < nrows and 0 <= nc < ncols and not visited[nr, nc]:
                visited[nr, nc] = True
                if filled[nr, nc] < level:
                    filled[nr, nc] = level
                heapq.heappush(heap, (filled[nr, nc], nr * ncols + nc))

    filled[nodata] = dem.nodata
    return dem.with_values(filled)


# ---------------------------------------------------------------------------
# D8 directions and flow accumulation
# ---------------------------------------------------------------------------


def flow_directions(dem: Raster) -> np.ndarray:
    """Assign a D8 direction code to every data cell.

    Strictly descending cells take the steepest-descent neighbor. Cells with
    no lower neighbor are resolved by the flat rule described in the module
    docstring; a flat with no reachable exit raises a topology error.
    """
    z = dem.values
    nodata = dem.nodata_mask()
    nrows, ncols = z.shape
    dirs = np.full((nrows, ncols), UNDEFINED, dtype=np.int8)

    def neighbors(r, c):
        for k, (dr, dc) in enumerate(D8_OFFSETS):
            nr, nc = r + dr, c + dc
            if 0 <= nr < nrows and 0 <= nc < ncols:
                yield k, nr, nc

    unresolved = []
    for r in range(nrows):
        for c in range(ncols):
            if nodata[r, c]:
                continue
            best_k = -1
            best_grad = 0.0
            for k, nr, nc in neighbors(r, c):
                if nodata[nr, nc]:
                    continue
                grad = (z[r, c] - z[nr, nc]) / D8_DIST[k]
                if grad > best_grad:
                    best_grad = grad
                    best_k = k
            if best_k >= 0:
                dirs[r, c] = best_k
            else:
                unresolved.append((r, c))

    if not unresolved:
        return dirs

    # Flat routing: BFS distance to the nearest exit within each flat.
    unresolved_set = set(unresolved)
    dist = {}
    queue = deque()
    for r, c in unresolved:
        on_margin = r == 0 or c == 0 or r == nrows - 1 or c == ncols - 1 or any(
            nodata[r + dr, c + dc] for dr, dc in D8_OFFSETS
        )
        if on_margin:
            dirs[r, c] = OFF_GRID
            dist[(r, c)] = 0
            queue.append((r, c))
    for r, c in unresolved:
        if (r, c) in dist:
            continue
        for k, nr, nc in neighbors(r, c):
            if nodata[nr, nc] or (nr, nc) in unresolved_set:
                continue
            if z[nr, nc] == z[r, c]:
                # equal-height neighbor that already drains downhill
                dirs[r, c] = k
                dist[(r, c)] = 1
                queue.append((r, c))
                break

    while queue:
        r, c = queue.popleft()
        d = dist[(r, c)]
        for k, nr, nc in neighbors(r, c):
            if (nr, nc) in unresolved_set and (nr, nc) not in dist:
                if z[nr, nc] == z[r, c]:
                    # flow from (nr, nc) back toward (r, c)
                    dirs[nr, nc] = (k + 4) % 8
                    dist[(nr, nc)] = d + 1
                    queue.append((nr, nc))

    stuck = [cell for cell in unresolved if cell not in dist]
    if stuck:
        raise ValueError(
            f"flow_directions: unresolved flat with no outlet at cell {stuck[0]} "
            "(is the DEM pit-filled?)"
        )
    return dirs


def flow_accumulation(dem: Raster) -> FlowField:
    """Count contributing cells along D8 paths; each cell counts itself.

    Mass conservation: the accumulations of all off-grid outlets sum to the
    number of data cells.
    """
    dirs = flow_directions(dem)
    nrows, ncols = dirs.shape
    acc = np.zeros((nrows, ncols), dtype=np.int64)
    indeg = np.zeros((nrows, ncols), dtype=np.int32)

    targets = np.full((nrows, ncols), -1, dtype=np.int64)
    for r in range(nrows):
        for c in range(ncols):
            k = dirs[r, c]
            if k >= 0:
                dr, dc = D8_OFFSETS[k]
                targets[r, c] = (r + dr) * ncols + (c + dc)
                indeg[r + dr, c + dc] += 1

    flat_targets = targets.ravel()
    flat_acc = acc.ravel()
    flat_indeg = indeg.ravel()
    flat_dirs = dirs.ravel()

    queue = deque(
        i for i in range(nrows * ncols) if flat_dirs[i] != UNDEFINED and flat_indeg[i] == 0
    )
    processed = 0
    while queue:
        i = queue.popleft()
        flat_acc[i] += 1
        processed += 1
        t = flat_targets[i]
        if t >= 0:
            flat_acc[t] += flat_acc[i]
            flat_indeg[t] -= 1
            if flat_indeg[t] == 0:
                queue.append(t)

    n_data = int((flat_dirs != UNDEFINED).sum())
    if processed != n_data:
        raise AssertionError("flow_accumulation: cycle in direction field")
    return FlowField(dirs, acc, dem)


# ---------------------------------------------------------------------------
# Gradient kernels
# ---------------------------------------------------------------------------


def _padded_neighbors(dem: Raster) -> list[np.ndarray]:
    """The 8 neighbor planes of every cell, in D8 order.

    The raster border is extended by linear extrapolation (2*edge - next),
    which makes 3x3 kernels behave like one-sided differences at the edges.
    Nodata neighbors are replaced by the center value so kernels degrade
    gracefully instead of leaking the sentinel.
    """
    z = dem.values
    nodata = dem.nodata_mask()
    nrows, ncols = z.shape

    pad = np.empty((nrows + 2, ncols + 2), dtype=np.float64)
    pad[1:-1, 1:-1] = z
    if nrows >= 2:
        pad[0, 1:-1] = 2.0 * z[0] - z[1]
        pad[-1, 1:-1] = 2.0 * z[-1] - z[-2]
    else:
        pad[0, 1:-1] = z[0]
        pad[-1, 1:-1] = z[0]
    if ncols >= 2:
        pad[:, 0] = 2.0 * pad[:, 1] - pad[:, 2]
        pad[:, -1] = 2.0 * pad[:, -2] - pad[:, -3]
    else:
        pad[:, 0] = pad[:, 1]
        pad[:, -1] = pad[:, 1]

    padmask = np.zeros((nrows + 2, ncols + 2), dtype=bool)
    padmask[1:-1, 1:-1] = nodata
    # extrapolated border cells are valid unless built from nodata
    if nrows >= 2:
        padmask[0, 1:-1] = nodata[0] | nodata[1]
        padmask[-1, 1:-1] = nodata[-1] | nodata[-2]
    else:
        padmask[0, 1:-1] = nodata[0]
        padmask[-1, 1:-1] = nodata[0]
    if ncols >= 2:
        padmask[:, 0] = padmask[:, 1] | padmask[:, 2]
        padmask[:, -1] = padmask[:, -2] | padmask[:, -3]
    else:
        padmask[:, 0] = padmask[:, 1]
        padmask[:, -1] = padmask[:, 1]

    planes = []
    for dr, dc in D8_OFFSETS:
        plane = pad[1 + dr : 1 + dr + nrows, 1 + dc : 1 + dc + ncols]
        invalid = padmask[1 + dr : 1 + dr + nrows, 1 + dc : 1 + dc + ncols]
        planes.append(np.where(invalid, z, plane))
    return planes


def slope_percent(dem: Raster, cellsize_m: float | None = None) -> SlopeField:
    """Horn 3x3 gradient; slope% = 100 * sqrt(gx^2 + gy^2) / cellsize.

    gx/gy are elevation changes per cell spacing, so a plane rising g meters
    per cell yields exactly 100*g/cellsize percent.
    """
    cs = dem.cellsize if cellsize_m is None else cellsize_m
    n, ne, e, se, s, sw, w, nw = _padded_neighbors(dem)
    gx = ((ne + 2.0 * e + se) - (nw + 2.0 * w + sw)) / 8.0
    gy = ((nw + 2.0 * n + ne) - (sw + 2.0 * s + se)) / 8.0
    mag = np.sqrt(gx * gx + gy * gy) / cs
    percent = 100.0 * mag
    radians = np.arctan(mag)
    bad = dem.nodata_mask()
    for arr in (gx, gy, percent, radians):
        arr[bad] = 0.0
    return SlopeField(percent, radians, gx, gy, dem, cs)


def aspect(slope: SlopeField) -> Raster:
    """Downslope compass direction, degrees clockwise from north in [0, 360).

    Flat cells (zero gradient) get the sentinel -1.
    """
    deg = np.degrees(np.arctan2(-slope.gx, -slope.gy)) % 360.0
    flat = (slope.gx == 0.0) & (slope.gy == 0.0)
    deg[flat] = -1.0
    deg[slope.dem.nodata_mask()] = slope.dem.nodata
    return slope.dem.with_values(deg)


@dataclass
class CurvatureResult:
    curvature: Raster
    plan: Raster
    profile: Raster
    # edge cells are fitted against linearly extrapolated (one-sided) values
    edge_policy: str = "one-sided quadratic fit at raster edges"


def curvature(dem: Raster, cellsize_m: float | None = None) -> CurvatureResult:
    """Zevenbergen-Thorne 3x3 quadratic fit.

    Returns general, plan, and profile curvature (1/m). Sign convention:
    convex-up surfaces have positive general and profile curvature. All
    three are invariant to adding a constant to the DEM.
    """
    cs = dem.cellsize if cellsize_m is None else cellsize_m
    n, ne, e, se, s, sw, w, nw = _padded_neighbors(dem)
    z = dem.values
    L2 = cs * cs
    D = ((w + e) / 2.0 - z) / L2
    E = ((n + s) / 2.0 - z) / L2
    F = (-nw + ne + sw - se) / (4.0 * L2)
    G = (-w + e) / (2.0 * cs)
    H = (n - s) / (2.0 * cs)

    general = -2.0 * (D + E)
    g2h2 = G * G + H * H
    with np.errstate(invalid="ignore", divide="ignore"):
        profile = np.where(g2h2 > 0.0, -2.0 * (D * G * G + E * H * H + F * G * H) / g2h2, 0.0)
        plan = np.where(g2h2 > 0.0, 2.0 * (D * H * H + E * G * G - F * G * H) / g2h2, 0.0)

    bad = dem.nodata_mask()
    for arr in (general, plan, profile):
        arr[bad] = dem.nodata
    return CurvatureResult(
        dem.with_values(general), dem.with_values(plan), dem.with_values(profile)
    )


# ---------------------------------------------------------------------------
# Indices
# ---------------------------------------------------------------------------


def twi(
    flow: FlowField,
    slope: SlopeField,
    beta_min_deg: float = 0.1,
    variant: str = "table",
    cellsize_m: float | None = None,
) -> Raster:
    """Topographic wetness index.

    The default follows the source formula literally: ln(A_s / beta) with
    beta the slope angle in degrees, floored at beta_min_deg. The
    conventional form ln(A_s / tan(beta)) is available as variant
    "standard" (the floor then applies to the angle before taking tan).
    """
    a_s = flow.specific_area(cellsize_m)
    beta_deg = np.degrees(slope.radians)
    beta_deg = np.maximum(beta_deg, beta_min_deg)
    if variant == "table":
        out = np.log(a_s / beta_deg)
    elif variant == "standard":
        out = np.log(a_s / np.tan(np.radians(beta_deg)))
    else:
        raise ValueError(f"unknown twi variant {variant!r}")
    dem = flow.dem
    out[dem.nodata_mask()] = dem.nodata
    return dem.with_values(out)


def tri(dem: Raster, variant: str = "table") -> Raster:
    """Terrain ruggedness over the 3x3 window.

    Default: sqrt(max^2 - min^2) of the window after shifting the DEM so its
    minimum is 0 (keeps the radicand nonnegative). Variant "riley" is the
    conventional sqrt(sum (z_i - z_center)^2) over the 8 neighbors.
    """
    z = dem.values
    nodata = dem.nodata_mask()
    if variant == "table":
        if nodata.all():
            raise ValueError("tri: raster has no data cells")
        shifted = z - z[~nodata].min()
        hi = np.where(nodata, -np.inf, shifted)
        lo = np.where(nodata, np.inf, shifted)
        wmax = ndimage.maximum_filter(hi, size=3, mode="nearest")
        wmin = ndimage.minimum_filter(lo, size=3, mode="nearest")
        out = np.sqrt(np.maximum(wmax * wmax - wmin * wmin, 0.0))
    elif variant == "riley":
        planes = _padded_neighbors(dem)
        out = np.sqrt(sum((p - z) ** 2 for p in planes))
    else:
        raise ValueError(f"unknown tri variant {variant!r}")
    out[nodata] = dem.nodata
    return dem.with_values(out)


def sti(flow: FlowField, slope: SlopeField, cellsize_m: float | None = None) -> Raster:
    """Sediment transport index: (A_s/22.13)^0.6 * (sin(beta)/0.0896)^1.3."""
    a_s = flow.specific_area(cellsize_m)
    out = (a_s / 22.13) ** 0.6 * (np.sin(slope.radians) / 0.0896) ** 1.3
    dem = flow.dem
    out[dem.nodata_mask()] = dem.nodata
    return dem.with_values(out)


def spi(flow: FlowField, slope: SlopeField, cellsize_m: float | None = None) -> Raster:
    """Stream power index: A_s * tan(beta). Zero on flats."""
    a_s = flow.specific_area(cellsize_m)
    out = a_s * np.tan(slope.radians)
    dem = flow.dem
    out[dem.nodata_mask()] = dem.nodata
    return dem.with_values(out)


def ndvi(nir: Raster, red: Raster) -> Raster:
    """(NIR - Red) / (NIR + Red); zero denominator becomes nodata."""
    return _normalized_difference(nir, red)


def ndwi(nir: Raster, swir: Raster) -> Raster:
    """(NIR - SWIR) / (NIR + SWIR); zero denominator becomes nodata."""
    return _normalized_difference(nir, swir)


def _normalized_difference(a: Raster, b: Raster) -> Raster:
    if (a.nrows, a.ncols) != (b.nrows, b.ncols):
        raise ValueError(
            f"band shape mismatch: {a.nrows}x{a.ncols} vs {b.nrows}x{b.ncols}"
        )
    denom = a.values + b.values
    bad = (denom == 0.0) | a.nodata_mask() | b.nodata_mask()
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(bad, a.nodata, (a.values - b.values) / denom)
    return a.with_values(out)


# ---------------------------------------------------------------------------
# Streams
# ---------------------------------------------------------------------------


def stream_mask(flow: FlowField, threshold: float = 100.0) -> Raster:
    """Cells whose accumulation reaches the threshold (1 = stream, 0 = not)."""
    mask = (flow.accumulation >= threshold) & (flow.directions != UNDEFINED)
    return flow.dem.with_values(mask.astype(np.float64), nodata=-9999.0)


def _segment_lengths(streams: Raster, flow: FlowField, cellsize_m: float) -> np.ndarray:
    """Per-cell stream length: cellsize per stream cell, *sqrt(2) if its
    outgoing step is diagonal (off-grid outlets count as cardinal)."""
    is_stream = streams.values != 0.0
    lengths = np.zeros_like(streams.values)
    diag = np.isin(flow.directions, (1, 3, 5, 7))
    lengths[is_stream] = cellsize_m
    lengths[is_stream & diag] = cellsize_m * math.sqrt(2.0)
    return lengths


def drainage_density(
    streams: Raster,
    flow: FlowField,
    zone: np.ndarray | set,
    cellsize_m: float | None = None,
) -> float:
    """Total stream length in the zone divided by zone area (1/m).

    zone is a boolean mask or a set of (row, col) indices. Zero when the
    zone holds no stream cells.
    """
    cs = streams.cellsize if cellsize_m is None else cellsize_m
    if isinstance(zone, set):
        mask = np.zeros((streams.nrows, streams.ncols), dtype=bool)
        for r, c in zone:
            mask[r, c] = True
    else:
        mask = np.asarray(zone, dtype=bool)
    n_cells = int(mask.sum())
    if n_cells == 0:
        raise ValueError("drainage_density: empty zone")
    lengths = _segment_lengths(streams, flow, cs)
    return float(lengths[mask].sum() / (n_cells * cs * cs))


def drainage_density_raster(
    streams: Raster,
    flow: FlowField,
    window_cells: int = 5,
    cellsize_m: float | None = None,
) -> Raster:
    """Moving-window drainage density, same metric as drainage_density."""
    if window_cells < 1 or window_cells % 2 == 0:
        raise ValueError("window_cells must be a positive odd count")
    cs = streams.cellsize if cellsize_m is None else cellsize_m
    lengths = _segment_lengths(streams, flow, cs)
    mean_len = ndimage.uniform_filter(lengths, size=window_cells, mode="nearest")
    return streams.with_values(mean_len / (cs * cs), nodata=-9999.0)


def distance_from_stream(streams: Raster, cellsize_m: float | None = None) -> Raster:
    """Exact Euclidean distance (cell-center metric) to the nearest stream cell."""
    cs = streams.cellsize if cellsize_m is None else cellsize_m
    is_stream = streams.values != 0.0
    if not is_stream.any():
        raise ValueError("distance_from_stream: no stream cells in mask")
    dist = ndimage.distance_transform_edt(~is_stream, sampling=cs)
    return streams.with_values(dist, nodata=-9999.0)


# ---------------------------------------------------------------------------
# Sampling and fishnet
# ---------------------------------------------------------------------------


def sample_hgf(rasters: dict[str, Raster], points: list[GeoPoint]) -> list[HgfVector]:
    """Nearest-cell sample of the 17 factor rasters at each point.

    rasters must be keyed exactly by the HgfVector field names. A point
    outside any raster extent, or landing on a nodata cell, is an error
    naming the point index.
    """
    missing = [k for k in HGF_FIELDS if k not in rasters]
    if missing:
        raise ValueError(f"sample_hgf: missing rasters {missing}")
    out = []
    for i, pt in enumerate(points):
        vals = {}
        for name in HGF_FIELDS:
            rast = rasters[name]
            try:
                v = rast.value_at(pt)
            except ValueError:
                raise ValueError(
                    f"sample_hgf: point {i} ({pt.lat}, {pt.lon}) outside "
                    f"extent of raster {name!r}"
                ) from None
            if v == rast.nodata:
                raise ValueError(
                    f"sample_hgf: point {i} hits nodata in raster {name!r}"
                )
            vals[name] = v
        vals["lithology"] = int(round(vals["lithology"]))
        out.append(HgfVector(**vals))
    return out


def fishnet_grid(extent: BoundingBox, cell_m: float) -> tuple[list[GeoPoint], int, int]:
    """Cell-center grid covering the extent; returns (points, nx, ny).

    Spacing is cell_m meters converted to degrees at the extent's middle
    latitude. Points are ordered row-major from the north-west corner.
    Count = ceil(width/cell) * ceil(height/cell); a zero-area extent yields
    a single point at its location.
    """
    if cell_m <= 0:
        raise ValueError(f"fishnet cell size must be positive, got {cell_m}")
    width_m = (extent.lon_max - extent.lon_min) * M_PER_DEG * math.cos(
        math.radians(extent.mid_lat)
    )
    height_m = (extent.lat_max - extent.lat_min) * M_PER_DEG
    nx = max(1, math.ceil(width_m / cell_m))
    ny = max(1, math.ceil(height_m / cell_m))
    dlon = (extent.lon_max - extent.lon_min) / nx if nx > 0 else 0.0
    dlat = (extent.lat_max - extent.lat_min) / ny if ny > 0 else 0.0
    points = []
    for j in range(ny):  # north to south
        lat = extent.lat_max - (j + 0.5) * dlat
        for i in range(nx):
            lon = extent.lon_min + (i + 0.5) * dlon
            points.append(GeoPoint(lat, lon))
    return points, nx, ny


def make_fishnet(extent: BoundingBox, cell_m: float) -> list[GeoPoint]:
    points, _, _ = fishnet_grid(extent, cell_m)
    return points


def hgf_rasters(
    dem: Raster,
    sy: Raster,
    clay: Raster,
    lithology: Raster,
    nir: Raster,
    red: Raster,
    swir: Raster,
    cellsize_m: float | None = None,
    stream_threshold: float = 100.0,
) -> dict[str, Raster]:
    """Derive every sampleable factor raster from the DEM and ancillaries.

    One function so the synthetic generator and the feature command run the
    identical chain: pit fill, D8 accumulation, slope, curvature, streams at
    the given accumulation threshold, then the index rasters.
    """
    filled = fill_pits(dem)
    flow = flow_accumulation(filled)
    slope = slope_percent(filled, cellsize_m=cellsize_m)
    curv = curvature(filled, cellsize_m=cellsize_m)
    streams = stream_mask(flow, threshold=stream_threshold)
    return {
        "slope": slope.percent_raster(),
        "drainage_density": drainage_density_raster(
            streams, flow, cellsize_m=cellsize_m),
        "elevation": filled,
        "dist_stream": distance_from_stream(streams, cellsize_m=cellsize_m),
        "twi": twi(flow, slope, cellsize_m=cellsize_m),
        "tri": tri(filled),
        "sti": sti(flow, slope, cellsize_m=cellsize_m),
        "spi": spi(flow, slope, cellsize_m=cellsize_m),
        "curvature": curv.curvature,
        "plan_curvature": curv.plan,
        "profile_curvature": curv.profile,
        "aspect": aspect(slope),
        "sy": sy,
        "lithology_clay_thickness": clay,
        "lithology": lithology,
        "ndvi": ndvi(nir, red),
        "ndwi": ndwi(nir, swir),
    }
