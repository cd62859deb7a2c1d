"""Spatial types and file I/O."""

import json
import math

import numpy as np
import pytest

from aqd.geodata import (
    GeoPoint,
    GldasCell,
    Raster,
    WellObservation,
    haversine_m,
    read_ascii_grid,
    read_gldas_csv,
    read_wells_csv,
    write_ascii_grid,
    write_geojson,
    write_gldas_csv,
    write_wells_csv,
)


def make_raster(values, ncols, nrows, cellsize=30.0, nodata=-9999.0):
    return Raster(ncols, nrows, 0.0, 0.0, cellsize, nodata, np.asarray(values))


class TestAsciiGrid:
    def test_parse_2x2(self, tmp_path):
        p = tmp_path / "g.asc"
        p.write_text(
            "ncols 2\nnrows 2\nxllcorner 0.0\nyllcorner 0.0\n"
            "cellsize 30.0\nNODATA_value -9999\n1 2\n3 4\n"
        )
        r = read_ascii_grid(p)
        assert (r.ncols, r.nrows) == (2, 2)
        assert r.values.tolist() == [[1.0, 2.0], [3.0, 4.0]]

    def test_nodata_cell_flagged(self, tmp_path):
        p = tmp_path / "g.asc"
        p.write_text(
            "ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\n"
            "cellsize 1\nNODATA_value -9999\n-9999 5\n"
        )
        r = read_ascii_grid(p)
        assert r.nodata_mask().tolist() == [[True, False]]

    def test_header_order_enforced(self, tmp_path):
        p = tmp_path / "g.asc"
        p.write_text(
            "nrows 1\nncols 1\nxllcorner 0\nyllcorner 0\n"
            "cellsize 1\nNODATA_value -9999\n1\n"
        )
        with pytest.raises(ValueError, match="line 1"):
            read_ascii_grid(p)

    def test_value_count_mismatch(self, tmp_path):
        p = tmp_path / "g.asc"
        p.write_text(
            "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\n"
            "cellsize 1\nNODATA_value -9999\n1 2 3\n"
        )
        with pytest.raises(ValueError, match="expected 4 values"):
            read_ascii_grid(p)

    def test_roundtrip_random_grids(self, tmp_path):
        # write(read(f)) must byte-compare equal to the canonical
        # re-serialization of f, for arbitrary float payloads
        rng = np.random.default_rng(7)
        for i in range(20):
            ncols = int(rng.integers(1, 9))
            nrows = int(rng.integers(1, 9))
            vals = rng.normal(size=(nrows, ncols)) * 10.0 ** rng.integers(-6, 7)
            r = Raster(ncols, nrows, float(rng.normal()), float(rng.normal()),
                       float(rng.uniform(0.1, 100)), -9999.0, vals)
            p1 = tmp_path / f"a{i}.asc"
            p2 = tmp_path / f"b{i}.asc"
            write_ascii_grid(r, p1)
            r2 = read_ascii_grid(p1)
            write_ascii_grid(r2, p2)
            assert p1.read_bytes() == p2.read_bytes()
            assert np.array_equal(r.values, r2.values)

    def test_cell_of_center_and_bounds(self):
        r = make_raster(np.arange(6.0), 3, 2, cellsize=1.0)
        # northern row is row 0: lat in [1, 2) maps to row 0
        assert r.cell_of(GeoPoint(1.5, 0.5)) == (0, 0)
        assert r.cell_of(GeoPoint(0.5, 2.5)) == (1, 2)
        center = r.cell_center(0, 2)
        assert r.cell_of(center) == (0, 2)
        with pytest.raises(ValueError, match="outside"):
            r.cell_of(GeoPoint(2.5, 0.5))


class TestWellsCsv:
    HEADER = "station_id,lat,lon,year,max_gwl_m,min_gwl_m\n"

    def test_both_values(self, tmp_path):
        p = tmp_path / "w.csv"
        p.write_text(self.HEADER + "S1,24.0,90.0,2008,7.5,3.2\n")
        wells, summary = read_wells_csv(p)
        assert wells[0] == WellObservation("S1", GeoPoint(24.0, 90.0), 2008, 7.5, 3.2)
        assert summary.both == 1

    def test_max_only(self, tmp_path):
        p = tmp_path / "w.csv"
        p.write_text(self.HEADER + "S2,24.0,90.0,2008,7.5,\n")
        wells, summary = read_wells_csv(p)
        assert wells[0].min_gwl is None
        assert summary.max_only == 1

    def test_counts_on_fixture(self, tmp_path):
        rows = [f"S{i},24.0,90.0,2008,5.0,2.0" for i in range(7)]
        rows += [f"T{i},24.0,90.0,2008,5.0," for i in range(3)]
        p = tmp_path / "w.csv"
        p.write_text(self.HEADER + "\n".join(rows) + "\n")
        wells, summary = read_wells_csv(p)
        assert (summary.both, summary.max_only, summary.min_only) == (7, 3, 0)
        assert len(wells) == 10

    def test_both_absent_rejected_and_counted(self, tmp_path):
        p = tmp_path / "w.csv"
        p.write_text(self.HEADER + "S1,24.0,90.0,2008,,\nS2,24.0,90.0,2008,1.0,\n")
        wells, summary = read_wells_csv(p)
        assert summary.rejected == 1
        assert summary.accepted + summary.rejected == 2
        assert [w.station_id for w in wells] == ["S2"]

    def test_non_numeric_coordinate_names_row(self, tmp_path):
        p = tmp_path / "w.csv"
        p.write_text(self.HEADER + "S1,24.0,90.0,2008,1.0,\nS2,abc,90.0,2008,1.0,\n")
        with pytest.raises(ValueError, match="row 2"):
            read_wells_csv(p)

    def test_duplicate_station_year(self, tmp_path):
        p = tmp_path / "w.csv"
        p.write_text(self.HEADER + "S1,24.0,90.0,2008,1.0,\nS1,24.1,90.1,2008,2.0,\n")
        with pytest.raises(ValueError, match="duplicate"):
            read_wells_csv(p)

    def test_write_read_roundtrip(self, tmp_path):
        wells = [
            WellObservation("A", GeoPoint(23.5, 90.25), 2010, 4.25, 1.5),
            WellObservation("B", GeoPoint(24.5, 89.75), 2011, None, 2.0),
        ]
        p = tmp_path / "w.csv"
        write_wells_csv(wells, p)
        back, _ = read_wells_csv(p)
        assert back == wells


class TestGldasCsv:
    HEADER = "serial_id,lat,lon,year,max_gws_mm,min_gws_mm\n"

    def test_roundtrip(self, tmp_path):
        cells = [
            GldasCell(1, GeoPoint(23.0, 90.0), 2010, 450.5, 300.25),
            GldasCell(2, GeoPoint(23.2, 90.2), 2010, 500.0, 500.0),
        ]
        p = tmp_path / "g.csv"
        write_gldas_csv(cells, p)
        assert read_gldas_csv(p) == cells

    def test_duplicate_serial_year(self, tmp_path):
        p = tmp_path / "g.csv"
        p.write_text(self.HEADER + "1,23,90,2010,5,1\n1,23,90,2010,6,2\n")
        with pytest.raises(ValueError, match="duplicate"):
            read_gldas_csv(p)

    def test_min_above_max_rejected(self, tmp_path):
        p = tmp_path / "g.csv"
        p.write_text(self.HEADER + "1,23,90,2010,5,9\n")
        with pytest.raises(ValueError, match="min_gws"):
            read_gldas_csv(p)


class TestGeoJson:
    def test_empty(self, tmp_path):
        p = tmp_path / "e.geojson"
        write_geojson([], p)
        doc = json.loads(p.read_text())
        assert doc == {"type": "FeatureCollection", "features": []}

    def test_lon_lat_order(self, tmp_path):
        p = tmp_path / "p.geojson"
        write_geojson([(GeoPoint(23.8, 90.4), {"max_gwl": 7.5})], p)
        feat = json.loads(p.read_text())["features"][0]
        assert feat["geometry"]["coordinates"] == [90.4, 23.8]
        assert feat["properties"]["max_gwl"] == 7.5

    def test_roundtrip_precision(self, tmp_path):
        rng = np.random.default_rng(3)
        pts = [
            (GeoPoint(float(rng.uniform(-90, 90)), float(rng.uniform(-180, 180))),
             {"v": float(rng.normal())})
            for _ in range(25)
        ]
        p = tmp_path / "r.geojson"
        write_geojson(pts, p)
        feats = json.loads(p.read_text())["features"]
        for (pt, props), feat in zip(pts, feats):
            lon, lat = feat["geometry"]["coordinates"]
            assert abs(lon - pt.lon) < 1e-6 and abs(lat - pt.lat) < 1e-6
            assert abs(feat["properties"]["v"] - props["v"]) < 1e-6

    def test_bad_property_key(self, tmp_path):
        with pytest.raises(ValueError, match="identifier"):
            write_geojson([(GeoPoint(0, 0), {"bad key": 1})], tmp_path / "x.geojson")


class TestHaversine:
    def test_identity(self):
        a = GeoPoint(23.8, 90.4)
        assert haversine_m(a, a) == 0.0

    def test_one_degree_of_arc(self):
        d = haversine_m(GeoPoint(0, 0), GeoPoint(0, 1))
        assert abs(d - 111_195.0) <= 1.0

    def test_symmetry(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            a = GeoPoint(float(rng.uniform(-89, 89)), float(rng.uniform(-179, 179)))
            b = GeoPoint(float(rng.uniform(-89, 89)), float(rng.uniform(-179, 179)))
            assert haversine_m(a, b) == haversine_m(b, a)
            assert haversine_m(a, b) >= 0.0

    def test_triangle_inequality(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            pts = [
                GeoPoint(float(rng.uniform(-89, 89)), float(rng.uniform(-179, 179)))
                for _ in range(3)
            ]
            ab = haversine_m(pts[0], pts[1])
            bc = haversine_m(pts[1], pts[2])
            ac = haversine_m(pts[0], pts[2])
            assert ac <= (ab + bc) * (1 + 1e-6)


class TestTypeInvariants:
    def test_geopoint_bounds(self):
        with pytest.raises(ValueError):
            GeoPoint(91.0, 0.0)
        with pytest.raises(ValueError):
            GeoPoint(0.0, 181.0)

    def test_well_requires_one_value(self):
        with pytest.raises(ValueError, match="at least one"):
            WellObservation("S", GeoPoint(0, 0), 2000, None, None)

    def test_raster_shape_checked(self):
        with pytest.raises(ValueError, match="expected 4 values"):
            Raster(2, 2, 0, 0, 1.0, -9999.0, np.arange(3.0))

    def test_cell_gws_order(self):
        with pytest.raises(ValueError, match="min_gws"):
            GldasCell(1, GeoPoint(0, 0), 2000, 1.0, 2.0)
