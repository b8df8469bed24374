"""Benchmark orchestration: isolated trials, sweeps and region export.

Every timed trial runs in a freshly spawned worker process so that wall
time and peak resident memory belong to that trial alone.  The parent
samples the worker's resident set size while it runs, kills it at the
time or memory cap, and computes the quality metrics once labels come
back.
"""

from __future__ import annotations

import csv
import json
import math
import multiprocessing as mp
import os
import resource
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import psutil

from . import geometry
from .agglomerative import agglomerate, cut
from .datagen import LevelSpec, level_filename, write_level
from .local_search import azp, kmeans_baseline, maxp
from .metrics import MetricsReport, ahr, bin_national, csv_header, evaluate, risk_rank
from .objective import minmax_normalize
from .spatial import (
    ContiguityGraph,
    Partition,
    bridge_gaps,
    build_graph,
    connected_components,
    load_geojson,
    read_units,
    write_units,
)
from .tree import redcap, skater

__all__ = [
    "ConfigError",
    "AlgoSpec",
    "ExperimentConfig",
    "BenchmarkRecord",
    "ALGORITHMS",
    "run_algorithm",
    "contiguity_graph",
    "prepare_level",
    "run_trial",
    "run_experiment",
    "export_regions",
    "read_regions",
    "geographic_report",
]

STATUSES = ("ok", "timeout", "oom", "error")
GEO_COLUMNS = ("polsby_popper", "convex_hull_ratio", "percent_overlap")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


# name -> allowed parameters
ALGORITHMS = {
    "agglomerative": ("linkage",),
    "skater": (),
    "redcap": ("linkage", "order"),
    "azp": ("max_passes",),
    "maxp": ("threshold_fraction", "restarts", "max_passes", "local_search"),
    "kmeans": ("iterations",),
}


def run_algorithm(name, graph, features, k, seed=0, **params):
    """Dispatch one regionalization by name; returns a :class:`Partition`.

    ``maxp`` ignores ``k`` and takes ``threshold_fraction`` (of the unit
    count, default 0.1) instead.
    """
    if name not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {name!r}; choose from {sorted(ALGORITHMS)}")
    extra = set(params) - set(ALGORITHMS[name])
    if extra:
        raise ConfigError(f"{name}: unknown parameter(s) {sorted(extra)}")
    if name == "agglomerative":
        return cut(agglomerate(graph, features, linkage=params.get("linkage", "ward")), k)
    if name == "skater":
        return skater(graph, features, k)
    if name == "redcap":
        return redcap(graph, features, k, params.get("linkage", "complete"), params.get("order", "full"))
    if name == "azp":
        return azp(graph, features, k, seed=seed, max_passes=params.get("max_passes"))
    if name == "maxp":
        frac = params.get("threshold_fraction", 0.1)
        return maxp(graph, features, threshold=frac * graph.n, seed=seed, restarts=params.get("restarts", 16),
                    local_search=params.get("local_search", True), max_passes=params.get("max_passes"))
    return kmeans_baseline(features, k, seed=seed, iterations=params.get("iterations", 100))


@dataclass(frozen=True)
class AlgoSpec:
    name: str
    params: dict = field(default_factory=dict)
    label: str | None = None

    @property
    def tag(self):
        """CSV name, e.g. ``redcap-ward-first``."""
        if self.label:
            return self.label
        parts = [self.name] + [str(self.params[p]) for p in ("linkage", "order") if p in self.params]
        return "-".join(parts)

    @classmethod
    def parse(cls, obj):
        if isinstance(obj, str):
            obj = {"name": obj}
        if not isinstance(obj, dict) or "name" not in obj:
            raise ConfigError(f"algorithm entry needs a name: {obj!r}")
        obj = dict(obj)
        name = obj.pop("name")
        label = obj.pop("label", None)
        if name not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {name!r}; choose from {sorted(ALGORITHMS)}")
        bad = set(obj) - set(ALGORITHMS[name])
        if bad:
            raise ConfigError(f"{name}: unknown parameter(s) {sorted(bad)}")
        return cls(name, obj, label)


@dataclass
class ExperimentConfig:
    """One benchmark sweep: every algorithm on every (level, seed).

    ``data_seed`` pins one dataset per level; by default the trial seed
    also selects the dataset file ``level_{L}_seed_{S}.geojson``.
    """

    algorithms: list
    levels: list
    seeds: list = field(default_factory=lambda: [0])
    k: int = 5
    time_cap: float = 3600.0
    memory_cap: int | None = None
    data_dir: str = "data"
    data_seed: int | None = None
    generate_missing: bool = False
    contiguity: str = "queen"
    bridge: bool = True
    sample_cap: int = 10_000
    geo: bool = False
    output: str = "results.csv"
    regions_dir: str | None = None

    def __post_init__(self):
        self.algorithms = [a if isinstance(a, AlgoSpec) else AlgoSpec.parse(a) for a in self.algorithms]
        if not self.algorithms:
            raise ConfigError("at least one algorithm is required")
        if not self.levels:
            raise ConfigError("at least one level is required")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if not isinstance(self.k, int) or self.k < 1:
            raise ConfigError("k must be a positive integer")
        if not self.time_cap > 0:
            raise ConfigError("time_cap must be positive")
        if self.memory_cap is not None and self.memory_cap <= 0:
            raise ConfigError("memory_cap must be positive")
        if self.contiguity not in ("queen", "rook", "voronoi"):
            raise ConfigError(f"unknown contiguity {self.contiguity!r}")

    @classmethod
    def from_dict(cls, obj):
        known = set(cls.__dataclass_fields__)
        bad = set(obj) - known
        if bad:
            raise ConfigError(f"unknown config key(s) {sorted(bad)}")
        if "algorithms" not in obj or "levels" not in obj:
            raise ConfigError("config needs 'algorithms' and 'levels'")
        try:
            return cls(**obj)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                obj = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(obj)

    @property
    def max_regions(self):
        """Number of ``ahr_*`` CSV columns."""
        out = self.k
        for a in self.algorithms:
            if a.name == "maxp":
                out = max(out, int(math.floor(1.0 / a.params.get("threshold_fraction", 0.1) + 1e-9)))
        return out

    def data_path(self, level, seed):
        s = seed if self.data_seed is None else self.data_seed
        return Path(self.data_dir) / level_filename(level, s)


@dataclass
class BenchmarkRecord:
    algo: str
    level: int
    seed: int
    k: int
    wall_time: float
    peak_memory: int
    status: str
    metrics: MetricsReport | None = None
    labels: np.ndarray | None = field(default=None, repr=False)
    geo: dict | None = None
    message: str = ""

    def row(self, max_regions, geo=False):
        def num(v):
            return "" if v is None else repr(float(v))

        out = [self.algo, self.level, self.seed, self.k, f"{self.wall_time:.6f}", self.peak_memory]
        if self.metrics is None:
            out += [""] * 5 + [""] * max_regions
        else:
            m = self.metrics
            out += [num(m.chi), num(m.silhouette), num(m.sse_normalized), num(m.within), num(m.between)]
            ahr = [num(v) for v in m.ahr_per_region[:max_regions]]
            out += ahr + [""] * (max_regions - len(ahr))
        out.append(self.status)
        if geo:
            out += [num((self.geo or {}).get(c)) for c in GEO_COLUMNS]
        return out


def contiguity_graph(units, method="queen", bridge=True):
    """Contiguity of ``units``; with ``bridge`` a disconnected graph is
    completed with the Voronoi gap-bridging links."""
    graph = build_graph(units, method)
    if bridge and method != "voronoi" and len(units) >= 3 and connected_components(graph).k > 1:
        graph = graph.union(bridge_gaps(units))
    return graph


def prepare_level(data_path, contiguity="queen", bridge=True, cache_dir=None):
    """Load a level, build its graph and cache ``features`` / ``raw`` /
    ``edges`` as ``.npz``; returns the cache path."""
    data_path = Path(data_path)
    if not data_path.exists():
        raise FileNotFoundError(f"missing data file {data_path}")
    cache_dir = Path(cache_dir) if cache_dir else data_path.parent / ".cache"
    cache = cache_dir / f"{data_path.stem}.{contiguity}{'-bridged' if bridge else ''}.npz"
    if cache.exists() and cache.stat().st_mtime >= data_path.stat().st_mtime:
        return cache
    units = read_units(data_path)
    graph = contiguity_graph(units, contiguity, bridge)
    raw = np.array([u.features for u in units], dtype=float)
    cache_dir.mkdir(parents=True, exist_ok=True)
    tmp = cache.with_suffix(".tmp.npz")
    np.savez(tmp, features=minmax_normalize(raw), raw=raw, edges=graph.edges(), n=graph.n)
    os.replace(tmp, cache)
    return cache


def _load_prepared(path):
    with np.load(path) as z:
        return z["features"], z["raw"], ContiguityGraph.from_edges(int(z["n"]), z["edges"])


def _worker(conn, cache, name, params, k, seed):
    try:
        x, _, graph = _load_prepared(cache)
        conn.send(("started",))
        t0 = time.perf_counter()
        part = run_algorithm(name, graph, x, k, seed=seed, **params)
        wall = time.perf_counter() - t0
        peak = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024
        conn.send(("done", part.labels, wall, peak))
    except MemoryError:
        conn.send(("oom", "MemoryError"))
    except BaseException as exc:  # reported to the parent, which decides the status
        conn.send(("error", f"{type(exc).__name__}: {exc}"))
    finally:
        conn.close()


def _rss(proc):
    try:
        return proc.memory_info().rss
    except psutil.Error:
        return 0


def _isolated(cache, algo, k, seed, time_cap, memory_cap, poll=0.05):
    ctx = mp.get_context("spawn")
    recv, send = ctx.Pipe(duplex=False)
    p = ctx.Process(target=_worker, args=(send, str(cache), algo.name, algo.params, k, seed), daemon=True)
    p.start()
    send.close()
    proc = psutil.Process(p.pid)
    peak = 0
    started = None
    status, labels, wall, message = "error", None, 0.0, ""
    try:
        while True:
            peak = max(peak, _rss(proc))
            if recv.poll(poll):
                try:
                    msg = recv.recv()
                except EOFError:
                    message = f"worker exited with code {p.exitcode}"
                    break
                if msg[0] == "started":
                    started = time.perf_counter()
                    continue
                if msg[0] == "done":
                    _, labels, wall, child_peak = msg
                    peak = max(peak, int(child_peak))
                    status = "ok" if wall <= time_cap else "timeout"
                elif msg[0] == "oom":
                    status, message = "oom", msg[1]
                else:
                    status, message = "error", msg[1]
                break
            if started is not None and time.perf_counter() - started > time_cap:
                status, wall = "timeout", time.perf_counter() - started
                break
            if memory_cap is not None and peak > memory_cap:
                status, message = "oom", f"resident memory exceeded {memory_cap} bytes"
                wall = time.perf_counter() - started if started else 0.0
                break
            if not p.is_alive() and not recv.poll():
                message = f"worker exited with code {p.exitcode}"
                break
    finally:
        if p.is_alive():
            p.kill()
        p.join()
        recv.close()
    if status != "ok":
        labels = None
    return status, labels, wall, peak, message


def geographic_report(partition, units, alpha=None):
    """Mean Polsby-Popper and convex-hull ratio of the dissolved regions,
    and the alpha-shape percent overlap."""
    pp, chr_ = [], []
    for members in partition.regions():
        shape = geometry.dissolve([units[i].polygon for i in members])
        pp.append(geometry.polsby_popper(shape))
        chr_.append(geometry.convex_hull_ratio(shape))
    overlap = geometry.percent_overlap(partition, units, alpha) if partition.k >= 2 else math.nan
    return {"polsby_popper": float(np.mean(pp)), "convex_hull_ratio": float(np.mean(chr_)),
            "percent_overlap": float(overlap)}


def run_trial(algo, level, seed, config, keep_labels=False):
    """Run one (algorithm, level, seed) in an isolated worker.

    Returns a :class:`BenchmarkRecord`.  Metrics are computed in the
    parent on the min-max scaled features, with risk bins taken from
    the unscaled ones.

    Raises
    ------
    FileNotFoundError
        The level's data file does not exist (and generation is off).
    ConfigError
        Unknown algorithm or parameter.
    """
    algo = algo if isinstance(algo, AlgoSpec) else AlgoSpec.parse(algo)
    path = config.data_path(level, seed)
    if not path.exists() and config.generate_missing:
        s = seed if config.data_seed is None else config.data_seed
        write_level(LevelSpec(level=level, seed=s), path.parent)
    cache = prepare_level(path, config.contiguity, config.bridge)
    status, labels, wall, peak, message = _isolated(cache, algo, config.k, seed, config.time_cap, config.memory_cap)
    rec = BenchmarkRecord(algo.tag, level, seed, config.k, wall, int(peak), status, message=message)
    if status == "ok":
        x, raw, _ = _load_prepared(cache)
        part = Partition.from_labels(labels)
        rec.k = part.k
        rec.metrics = evaluate(part, x, bins=bin_national(raw), sample_cap=config.sample_cap, seed=seed)
        if config.geo:
            rec.geo = geographic_report(part, read_units(path))
        if keep_labels or config.regions_dir:
            rec.labels = part.labels
        if config.regions_dir:
            out = Path(config.regions_dir) / f"{algo.tag}_level_{level}_seed_{seed}.geojson"
            export_regions(part, read_units(path), out)
    return rec


def run_experiment(config, output=None, progress=None):
    """Run the full sweep, appending one CSV row per trial as it finishes.

    The CSV is rewritten from scratch at the start of the sweep and
    flushed after every row, so an interrupted sweep leaves a valid file.
    Trials run one at a time so timings do not compete for cores.
    """
    output = Path(output or config.output)
    output.parent.mkdir(parents=True, exist_ok=True)
    extra = GEO_COLUMNS if config.geo else ()
    header = csv_header(config.max_regions, extra)
    records = []
    with open(output, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        fh.flush()
        for level in config.levels:
            for seed in config.seeds:
                for algo in config.algorithms:
                    try:
                        rec = run_trial(algo, level, seed, config)
                    except (FileNotFoundError, ConfigError) as exc:
                        rec = BenchmarkRecord(algo.tag, level, seed, config.k, 0.0, 0, "error", message=str(exc))
                    records.append(rec)
                    writer.writerow(rec.row(config.max_regions, config.geo))
                    fh.flush()
                    if progress is not None:
                        progress(rec)
    return records


def export_regions(partition, units, path, features=None):
    """Write units with their ``region`` and ``risk_rank`` as GeoJSON.

    ``risk_rank`` ranks the regions 1..k by ascending AHR, computed from
    risk bins of ``features`` (default: the units' own features).
    """
    x = np.array([u.features for u in units], dtype=float) if features is None else np.asarray(features, float)
    region_ahr = ahr(partition, bin_national(x))
    ranks = risk_rank(region_ahr)
    props = [
        {"region": int(r), "risk_rank": int(ranks[r]), "ahr": float(region_ahr[r])}
        for r in partition.labels.tolist()
    ]
    try:
        write_units(units, path, props)
    except OSError as exc:
        raise OSError(f"cannot write regions to {path}: {exc}") from exc
    return Path(path)


def read_regions(path):
    """Partition stored in an exported regions file."""
    _, props = load_geojson(path)
    try:
        labels = np.array([p["region"] for p in props], dtype=np.int64)
    except KeyError:
        raise ValueError(f"{path}: features carry no 'region' property") from None
    return Partition(labels, int(labels.max()) + 1 if len(labels) else 0)
