import csv
import json

import numpy as np
import pytest

from regionkit.datagen import LevelSpec, generate_level, level_filename
from regionkit.harness import (
    AlgoSpec,
    BenchmarkRecord,
    ConfigError,
    ExperimentConfig,
    contiguity_graph,
    export_regions,
    prepare_level,
    read_regions,
    run_algorithm,
    run_experiment,
    run_trial,
)
from regionkit.metrics import CSV_FIXED, ahr, bin_national
from regionkit.spatial import Partition, is_region_connected, load_geojson, read_units, write_units


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    """Small stand-ins for levels 0 and 1 (seeds 0 and 1) under the standard file names."""
    d = tmp_path_factory.mktemp("levels")
    for level, n in ((0, 400), (1, 800)):
        for seed in (0, 1):
            units = generate_level(LevelSpec(level=level, seed=seed, target_n=n))
            write_units(units, d / level_filename(level, seed))
    return d


def config(data_dir, tmp_path, **kw):
    base = {"algorithms": ["agglomerative"], "levels": [0], "seeds": [0], "data_dir": str(data_dir),
            "output": str(tmp_path / "out.csv")}
    base.update(kw)
    return ExperimentConfig.from_dict(base)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestConfig:
    def test_parse(self, tmp_path):
        path = tmp_path / "exp.json"
        path.write_text(json.dumps({"algorithms": ["skater", {"name": "redcap", "linkage": "ward", "order": "first"},
                                                  {"name": "maxp", "threshold_fraction": 0.05}],
                                    "levels": [0, 1], "k": 5}))
        cfg = ExperimentConfig.load(path)
        assert [a.tag for a in cfg.algorithms] == ["skater", "redcap-ward-first", "maxp"]
        assert cfg.max_regions == 20
        assert cfg.contiguity == "queen" and cfg.time_cap == 3600

    @pytest.mark.parametrize("obj", [
        {"algorithms": [], "levels": [0]},
        {"algorithms": ["skater"], "levels": []},
        {"algorithms": ["dbscan"], "levels": [0]},
        {"algorithms": [{"name": "skater", "linkage": "ward"}], "levels": [0]},
        {"algorithms": ["skater"], "levels": [0], "k": 0},
        {"algorithms": ["skater"], "levels": [0], "time_cap": 0},
        {"algorithms": ["skater"], "levels": [0], "colour": "red"},
        {"algorithms": ["skater"]},
    ])
    def test_invalid(self, obj):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(obj)

    def test_unreadable(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ConfigError):
            ExperimentConfig.load(bad)
        with pytest.raises(ConfigError):
            ExperimentConfig.load(tmp_path / "missing.json")

    def test_run_algorithm_rejects_unknown(self):
        with pytest.raises(ConfigError):
            run_algorithm("dbscan", None, None, 2)
        with pytest.raises(ConfigError):
            AlgoSpec.parse({"name": "azp", "linkage": "ward"})


class TestPrepare:
    def test_cache(self, data_dir):
        path = data_dir / level_filename(0, 0)
        cache = prepare_level(path)
        assert cache.exists() and prepare_level(path) == cache
        with np.load(cache) as z:
            assert z["features"].min() == 0 and z["features"].max() == 1
            assert int(z["n"]) == 400
        with pytest.raises(FileNotFoundError):
            prepare_level(data_dir / "nope.geojson")

    def test_bridging_only_when_needed(self, data_dir):
        units = read_units(data_dir / level_filename(0, 0))
        g = contiguity_graph(units, "queen", bridge=True)
        assert g.is_connected()
        left = [u for u in units if u.centroid[0] < -300] + [u for u in units if u.centroid[0] > 300]
        left = [type(u)(i, u.centroid, u.polygon, u.features) for i, u in enumerate(left)]
        assert not contiguity_graph(left, "queen", bridge=False).is_connected()
        assert contiguity_graph(left, "queen", bridge=True).is_connected()


class TestTrial:
    def test_agglomerative_ok(self, data_dir, tmp_path):
        cfg = config(data_dir, tmp_path)
        rec = run_trial("agglomerative", 0, 0, cfg, keep_labels=True)
        assert rec.status == "ok" and rec.k == 5
        assert 0 < rec.wall_time <= cfg.time_cap
        assert rec.peak_memory > 10 * 2**20
        units = read_units(data_dir / level_filename(0, 0))
        graph = contiguity_graph(units)
        part = Partition.from_labels(rec.labels)
        assert all(is_region_connected(graph, m) for m in part.regions())
        assert rec.metrics is not None and len(rec.metrics.ahr_per_region) == 5

    def test_timeout(self, data_dir, tmp_path):
        rec = run_trial("skater", 0, 0, config(data_dir, tmp_path, time_cap=0.001))
        assert rec.status == "timeout"
        assert rec.metrics is None and rec.labels is None

    def test_oom(self, data_dir, tmp_path):
        rec = run_trial("agglomerative", 0, 0, config(data_dir, tmp_path, memory_cap=1024))
        assert rec.status == "oom"
        assert rec.metrics is None

    def test_missing_file(self, tmp_path):
        cfg = config(tmp_path / "empty", tmp_path)
        with pytest.raises(FileNotFoundError):
            run_trial("skater", 0, 0, cfg)

    def test_error_status(self, data_dir, tmp_path):
        # more regions than units is rejected inside the worker
        rec = run_trial("skater", 0, 0, config(data_dir, tmp_path, k=10_000))
        assert rec.status == "error" and "k must lie" in rec.message

    def test_geo_columns(self, data_dir, tmp_path):
        cfg = config(data_dir, tmp_path, geo=True)
        rec = run_trial("agglomerative", 0, 0, cfg)
        assert 0 < rec.geo["polsby_popper"] <= 1
        assert 0 < rec.geo["convex_hull_ratio"] <= 1
        assert 0 <= rec.geo["percent_overlap"] <= 1
        assert len(rec.row(cfg.max_regions, geo=True)) == len(CSV_FIXED) + 5 + 1 + 3


class TestSweep:
    def test_eight_rows_and_determinism(self, data_dir, tmp_path):
        kw = {"algorithms": ["agglomerative", "azp"], "levels": [0, 1], "seeds": [0, 1]}
        a = run_experiment(config(data_dir, tmp_path, **kw), tmp_path / "a.csv")
        b = run_experiment(config(data_dir, tmp_path, **kw), tmp_path / "b.csv")
        rows_a, rows_b = read_csv(tmp_path / "a.csv"), read_csv(tmp_path / "b.csv")
        assert len(a) == 8 and len(rows_a) == 9
        assert rows_a[0] == CSV_FIXED + ["ahr_1", "ahr_2", "ahr_3", "ahr_4", "ahr_5", "status"]
        assert all(r[-1] == "ok" for r in rows_a[1:])
        timing = {rows_a[0].index("time_s"), rows_a[0].index("peak_mem_bytes")}
        strip = [[v for i, v in enumerate(r) if i not in timing] for r in rows_a]
        assert strip == [[v for i, v in enumerate(r) if i not in timing] for r in rows_b]
        assert all(np.array_equal(ra.metrics.ahr_per_region, rb.metrics.ahr_per_region) for ra, rb in zip(a, b))

    def test_failed_trials_keep_rows(self, data_dir, tmp_path):
        cfg = config(data_dir, tmp_path, algorithms=["skater", "agglomerative"], levels=[0, 7], time_cap=0.001)
        recs = run_experiment(cfg)
        rows = read_csv(cfg.output)
        assert [r[-1] for r in rows[1:]] == ["timeout", "timeout", "error", "error"]
        # metric columns are empty for failures
        assert all(v == "" for v in rows[1][6:-1])
        assert "missing data file" in recs[2].message

    def test_generate_missing(self, tmp_path):
        cfg = ExperimentConfig.from_dict({"algorithms": ["kmeans"], "levels": [0], "seeds": [3],
                                          "data_dir": str(tmp_path / "gen"), "generate_missing": True,
                                          "output": str(tmp_path / "g.csv")})
        recs = run_experiment(cfg)
        assert recs[0].status == "ok"
        assert (tmp_path / "gen" / "level_0_seed_3.geojson").exists()


class TestExport:
    def test_round_trip_and_ranks(self, data_dir, tmp_path):
        units = read_units(data_dir / level_filename(0, 1))
        graph = contiguity_graph(units)
        x = np.array([u.features for u in units])
        part = run_algorithm("skater", graph, x, 5)
        path = export_regions(part, units, tmp_path / "r.geojson")
        assert read_regions(path) == part
        _, props = load_geojson(path)
        region_ahr = ahr(part, bin_national(x))
        for r in range(part.k):
            ranks = {p["risk_rank"] for p in props if p["region"] == r}
            assert ranks == {int(np.argsort(np.argsort(region_ahr, kind="stable"))[r]) + 1}
        by_rank = sorted(range(part.k), key=lambda r: next(p["risk_rank"] for p in props if p["region"] == r))
        assert np.all(np.diff(region_ahr[by_rank]) >= 0)

    def test_single_region(self, data_dir, tmp_path):
        units = read_units(data_dir / level_filename(0, 0))
        path = export_regions(Partition(np.zeros(len(units), int), 1), units, tmp_path / "one.geojson")
        _, props = load_geojson(path)
        assert {(p["region"], p["risk_rank"]) for p in props} == {(0, 1)}

    def test_unwritable(self, data_dir, tmp_path):
        units = read_units(data_dir / level_filename(0, 0))[:3]
        blocker = tmp_path / "file"
        blocker.write_text("")
        with pytest.raises(OSError):
            export_regions(Partition(np.zeros(3, int), 1), units, blocker / "sub" / "x.geojson")


def test_record_row_formats():
    rec = BenchmarkRecord("skater", 0, 1, 5, 1.5, 1000, "timeout")
    row = rec.row(5)
    assert row[:6] == ["skater", 0, 1, 5, "1.500000", 1000]
    assert row[6:-1] == [""] * 10 and row[-1] == "timeout"
