"""End-to-end tests for the staged command-line driver and JSON service."""

import csv
import hashlib
import json
import threading
import urllib.error
import urllib.request

import pytest

from aqd import cli

MANIFEST = """\
seed = 5
years = [2010, 2011, 2012, 2013]

[paths]
world = "world"
workdir = "artifacts"

[forest]
n_trees = 30

[synth]
width_m = 16000.0
height_m = 8000.0
n_stations = 14
dem_cellsize = 500.0
fishnet_cell = 2000.0
gldas_cell = 4000.0
"""


def run(*argv):
    return cli.main(list(argv))


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    """A tiny world pushed through every stage once."""
    root = tmp_path_factory.mktemp("cliworld")
    manifest = root / "manifest.toml"
    manifest.write_text(MANIFEST)
    for command in ("synth", "features", "pseudo_gt", "train_upsampler"):
        assert run(command, "--manifest", str(manifest)) == 0, command
    for year in (2010, 2011, 2012, 2013):
        assert run("downscale", "--manifest", str(manifest),
                   "--year", str(year)) == 0
    assert run("recharge", "--manifest", str(manifest)) == 0
    assert run("trends", "--manifest", str(manifest)) == 0
    return root, manifest


@pytest.fixture(scope="module")
def manifest_obj(pipeline_dir):
    _, manifest = pipeline_dir
    return cli.load_manifest(manifest)


class TestManifest:
    def test_missing_manifest_is_input_error(self, tmp_path):
        assert run("features", "--manifest", str(tmp_path / "nope.toml")) == 2

    def test_seed_is_mandatory(self, tmp_path):
        p = tmp_path / "m.toml"
        p.write_text('years = [2010, 2011]\n')
        assert run("features", "--manifest", str(p)) == 2

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "m.toml"
        p.write_text('seed = 1\nyears = [2010]\ntypo_key = 3\n')
        assert run("features", "--manifest", str(p)) == 2

    def test_bad_rep_stat_rejected(self, tmp_path):
        p = tmp_path / "m.toml"
        p.write_text('seed = 1\nyears = [2010]\n[flags]\nrep_stat = "mean"\n')
        assert run("features", "--manifest", str(p)) == 2

    def test_synth_without_table_is_input_error(self, tmp_path):
        p = tmp_path / "m.toml"
        p.write_text('seed = 1\nyears = [2010, 2011]\n')
        assert run("synth", "--manifest", str(p)) == 2


class TestStageArtifacts:
    def test_world_bundle_written(self, pipeline_dir):
        root, _ = pipeline_dir
        for name in cli.WORLD_FILES.values():
            assert (root / "world" / name).is_file(), name

    def test_feature_csv_has_all_hgf_columns(self, pipeline_dir):
        root, _ = pipeline_dir
        with open(root / "artifacts" / "hgf_points.csv") as fh:
            header = next(csv.reader(fh))
        assert header == cli.POINTS_HEADER
        assert len(header) == 4 + 17

    def test_feature_rasters_written(self, pipeline_dir, manifest_obj):
        root, _ = pipeline_dir
        names = {p.name for p in (root / "artifacts" / "features").iterdir()}
        assert names == {f"{f}.asc" for f in cli.HGF_FIELDS}

    def test_pseudo_gt_accounting(self, pipeline_dir):
        root, _ = pipeline_dir
        with open(root / "artifacts" / "pseudo_gt.csv") as fh:
            rows = list(csv.reader(fh))[1:]
        sources = {r[5] for r in rows}
        assert sources == {"predicted", "in-situ"}
        insitu = sum(1 for r in rows if r[5] == "in-situ")
        assert insitu == 14 * 4, "one override row per station-year"

    def test_downscale_rows_align_with_fishnet(self, pipeline_dir):
        root, _ = pipeline_dir
        with open(root / "artifacts" / "downscale_2012.csv") as fh:
            rows = list(csv.reader(fh))[1:]
        assert len(rows) == 32
        assert [int(r[0]) for r in rows] == list(range(32))

    def test_trend_geojson_structure(self, pipeline_dir):
        root, _ = pipeline_dir
        doc = json.loads((root / "artifacts" / "trends.geojson").read_text())
        assert doc["type"] == "FeatureCollection"
        assert len(doc["features"]) == 32
        props = doc["features"][0]["properties"]
        for key in ("sen_slope_cm_per_year", "p_value", "category", "clamped"):
            assert key in props

    def test_missing_dem_is_input_error(self, tmp_path, capsys):
        p = tmp_path / "m.toml"
        p.write_text('seed = 1\nyears = [2010, 2011]\n')
        (tmp_path / "world").mkdir()
        assert run("features", "--manifest", str(p)) == 2
        assert "dem.asc" in capsys.readouterr().err

    def test_downscale_unknown_year_is_input_error(self, pipeline_dir, capsys):
        _, manifest = pipeline_dir
        assert run("downscale", "--manifest", str(manifest),
                   "--year", "1999") == 2
        assert "1999" in capsys.readouterr().err

    def test_recharge_names_missing_artifact(self, pipeline_dir, capsys):
        root, _ = pipeline_dir
        extra = root / "extra.toml"
        extra.write_text(MANIFEST.replace(
            "years = [2010, 2011, 2012, 2013]",
            "years = [2010, 2011, 2012, 2013, 2014]"))
        assert run("recharge", "--manifest", str(extra)) == 2
        assert "downscale_2014.csv" in capsys.readouterr().err

    def test_rerun_is_byte_identical(self, pipeline_dir):
        root, manifest = pipeline_dir

        def digest(name):
            return hashlib.sha256(
                (root / "artifacts" / name).read_bytes()).hexdigest()

        before = {n: digest(n) for n in
                  ("hgf_points.csv", "pseudo_gt.csv", "max_model.json",
                   "upsampler.json", "downscale_2011.csv")}
        for command in ("features", "pseudo_gt", "train_upsampler"):
            assert run(command, "--manifest", str(manifest)) == 0
        assert run("downscale", "--manifest", str(manifest),
                   "--year", "2011") == 0
        after = {n: digest(n) for n in before}
        assert after == before


class TestEval:
    def test_loyo_table_one_row_per_year(self, pipeline_dir, capsys):
        root, manifest = pipeline_dir
        assert run("eval", "--manifest", str(manifest)) == 0
        lines = [json.loads(l) for l in capsys.readouterr().out.splitlines()]
        folds = [l for l in lines if l["event"] == "loyo_fold"]
        assert [f["year"] for f in folds] == [2010, 2011, 2012, 2013]
        with open(root / "artifacts" / "eval.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == cli.EVAL_HEADER
        assert [int(r[0]) for r in rows[1:]] == [2010, 2011, 2012, 2013]


@pytest.fixture(scope="module")
def server(manifest_obj):
    srv = cli.make_server(manifest_obj, "127.0.0.1", 0)
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    yield srv
    srv.shutdown()
    srv.server_close()


def http(server, path, body=None):
    url = f"http://127.0.0.1:{server.server_address[1]}{path}"
    if body is None:
        req = urllib.request.Request(url)
    else:
        req = urllib.request.Request(url, data=body.encode())
    try:
        with urllib.request.urlopen(req) as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as exc:
        return exc.code, json.loads(exc.read())


class TestServe:
    def test_health(self, server):
        assert http(server, "/health") == (200, {"status": "ok"})

    def test_predict_matches_downscale_exactly(self, server, pipeline_dir):
        root, _ = pipeline_dir
        with open(root / "artifacts" / "downscale_2012.csv") as fh:
            rows = list(csv.reader(fh))[1:]
        for row in (rows[0], rows[17], rows[-1]):
            body = json.dumps({"lat": float(row[1]), "lon": float(row[2]),
                               "year": 2012})
            status, doc = http(server, "/predict", body)
            assert status == 200
            assert doc["max_gwl_m"] == float(row[3])
            assert doc["min_gwl_m"] == float(row[4])

    def test_recharge_field_consistent(self, server, pipeline_dir):
        root, _ = pipeline_dir
        with open(root / "artifacts" / "downscale_2010.csv") as fh:
            row = list(csv.reader(fh))[3]
        _, doc = http(server, "/predict", json.dumps(
            {"lat": float(row[1]), "lon": float(row[2]), "year": 2010}))
        with open(root / "artifacts" / "recharge.csv") as fh:
            want = [r for r in csv.reader(fh)
                    if r[0] == row[0] and r[3] == "2010"]
        assert doc["recharge_cm"] == float(want[0][4])

    def test_malformed_json_is_400(self, server):
        status, doc = http(server, "/predict", "{not json")
        assert status == 400
        assert "malformed" in doc["error"]

    def test_unknown_year_is_422(self, server):
        status, doc = http(server, "/predict",
                           json.dumps({"lat": 23.0, "lon": 90.0, "year": 1877}))
        assert status == 422
        assert "1877" in doc["error"]

    def test_out_of_extent_is_422(self, server):
        status, doc = http(server, "/predict",
                           json.dumps({"lat": -60.0, "lon": 10.0, "year": 2010}))
        assert status == 422
        assert "coverage" in doc["error"]

    def test_missing_field_is_422(self, server):
        status, _ = http(server, "/predict", json.dumps({"lat": 23.0,
                                                         "year": 2010}))
        assert status == 422

    def test_concurrent_identical_requests(self, server, pipeline_dir):
        root, _ = pipeline_dir
        with open(root / "artifacts" / "downscale_2013.csv") as fh:
            row = list(csv.reader(fh))[5]
        body = json.dumps({"lat": float(row[1]), "lon": float(row[2]),
                           "year": 2013})
        results = [None] * 6

        def worker(i):
            results[i] = http(server, "/predict", body)

        threads = [threading.Thread(target=worker, args=(i,))
                   for i in range(6)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert all(r == results[0] for r in results), "responses must agree"
        assert results[0][0] == 200

    def test_unknown_path_is_404(self, server):
        assert http(server, "/nope")[0] == 404
        assert http(server, "/nope", "{}")[0] == 404
