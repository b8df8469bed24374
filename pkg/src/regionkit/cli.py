"""Command-line interface: ``regionkit <command> ...``.

Exit codes: 0 success, 2 configuration or usage error, 3 at least one
trial failed (error or out of memory), 4 every failure was a timeout.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .datagen import LevelSpec, generate_level, level_filename
from .harness import (
    ALGORITHMS,
    ConfigError,
    ExperimentConfig,
    contiguity_graph,
    export_regions,
    geographic_report,
    read_regions,
    run_algorithm,
    run_experiment,
)
from .metrics import bin_national, evaluate
from .objective import minmax_normalize
from .spatial import DegenerateInputError, Partition, is_region_connected, read_units, write_units

EXIT_OK, EXIT_CONFIG, EXIT_FAILED, EXIT_TIMEOUT = 0, 2, 3, 4


def _fail(msg, code=EXIT_CONFIG):
    print(f"regionkit: error: {msg}", file=sys.stderr)
    return code


def _load(path):
    try:
        return read_units(path)
    except FileNotFoundError:
        raise ConfigError(f"input file {path} does not exist") from None
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None


def cmd_generate(args):
    spec = LevelSpec(level=args.level, seed=args.seed, target_n=args.target_n, hex_diameter=args.hex_diameter,
                     hole_fraction=args.hole_fraction)
    out = Path(args.out) if args.out else Path(level_filename(args.level, args.seed))
    units = generate_level(spec)
    write_units(units, out)
    print(f"wrote {len(units)} units to {out}")
    return EXIT_OK


def cmd_graph(args):
    units = _load(args.input)
    graph = contiguity_graph(units, args.method, bridge=args.bridge)
    if args.out:
        graph.write_edgelist(args.out)
    print(json.dumps({"n": graph.n, "edges": graph.n_edges, "connected": bool(graph.is_connected())}))
    return EXIT_OK


def _params(args):
    params = {}
    if args.algo in ("agglomerative", "redcap") and args.linkage:
        params["linkage"] = args.linkage
    if args.algo == "redcap" and args.order:
        params["order"] = args.order
    if args.algo == "maxp":
        params["threshold_fraction"] = args.threshold_fraction
        params["restarts"] = args.restarts
    if args.algo in ("azp", "maxp") and args.max_passes is not None:
        params["max_passes"] = args.max_passes
    return params


def cmd_run(args):
    units = _load(args.input)
    if args.algo != "maxp" and not 1 <= args.k <= len(units):
        raise ConfigError(f"--k must lie in [1, {len(units)}], got {args.k}")
    raw = np.array([u.features for u in units], dtype=float)
    x = minmax_normalize(raw)
    graph = contiguity_graph(units, args.contiguity, bridge=not args.no_bridge)
    try:
        part = run_algorithm(args.algo, graph, x, args.k, seed=args.seed, **_params(args))
    except ConfigError:
        raise
    except (ValueError, RuntimeError) as exc:
        return _fail(str(exc), EXIT_FAILED)
    if args.algo != "kmeans":
        bad = [r for r, m in enumerate(part.regions()) if not is_region_connected(graph, m)]
        if bad:
            return _fail(f"regions {bad} are not contiguous", EXIT_FAILED)
    export_regions(part, units, args.out, features=raw)
    report = evaluate(part, x, bins=bin_national(raw), sample_cap=args.sample_cap, seed=args.seed)
    print(json.dumps({"algo": args.algo, "k": part.k, **report.as_dict()}))
    return EXIT_OK


def cmd_bench(args):
    config = ExperimentConfig.load(args.config)
    if args.generate:
        config.generate_missing = True

    def progress(rec):
        if not args.quiet:
            print(f"{rec.algo} level={rec.level} seed={rec.seed} status={rec.status} "
                  f"time={rec.wall_time:.2f}s peak={rec.peak_memory / 2**20:.0f}MiB {rec.message}".rstrip(),
                  file=sys.stderr)

    records = run_experiment(config, args.out, progress)
    failed = [r for r in records if r.status != "ok"]
    if not failed:
        return EXIT_OK
    if all(r.status == "timeout" for r in failed):
        return EXIT_TIMEOUT
    return EXIT_FAILED


def cmd_metrics(args):
    part = read_regions(args.regions)
    units = _load(args.input or args.regions)
    if len(units) != part.n:
        raise ConfigError("regions and input files hold different unit counts")
    raw = np.array([u.features for u in units], dtype=float)
    report = evaluate(Partition.from_labels(part.labels), minmax_normalize(raw), bins=bin_national(raw),
                      sample_cap=args.sample_cap, seed=args.seed)
    out = report.as_dict()
    if args.geo:
        out.update(geographic_report(Partition.from_labels(part.labels), units))
    print(json.dumps(out))
    return EXIT_OK


def cmd_export(args):
    units = _load(args.input)
    try:
        labels = np.loadtxt(args.labels, dtype=np.int64, ndmin=1)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read labels {args.labels}: {exc}") from None
    if len(labels) != len(units):
        raise ConfigError(f"{len(labels)} labels for {len(units)} units")
    part = Partition.from_labels(labels)
    export_regions(part, units, args.out)
    print(f"wrote {part.k} regions over {part.n} units to {args.out}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="regionkit", description="Spatially constrained regionalization toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic hexagon level as GeoJSON")
    g.add_argument("--level", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out")
    g.add_argument("--target-n", type=int)
    g.add_argument("--hex-diameter", type=float, default=200.0)
    g.add_argument("--hole-fraction", type=float, default=0.1)
    g.set_defaults(func=cmd_generate)

    gr = sub.add_parser("graph", help="build a contiguity graph and write it as an edge list")
    gr.add_argument("--input", required=True)
    gr.add_argument("--method", choices=("queen", "rook", "voronoi"), default="queen")
    gr.add_argument("--bridge", action=argparse.BooleanOptionalAction, default=True,
                    help="add Voronoi links when the graph is disconnected")
    gr.add_argument("--out")
    gr.set_defaults(func=cmd_graph)

    r = sub.add_parser("run", help="regionalize one GeoJSON file")
    r.add_argument("--algo", required=True, choices=sorted(ALGORITHMS))
    r.add_argument("--k", type=int, default=5)
    r.add_argument("--input", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--linkage", choices=("ward", "complete", "average", "single"))
    r.add_argument("--order", choices=("first", "full"))
    r.add_argument("--threshold-fraction", type=float, default=0.1)
    r.add_argument("--restarts", type=int, default=16)
    r.add_argument("--max-passes", type=int)
    r.add_argument("--contiguity", choices=("queen", "rook", "voronoi"), default="queen")
    r.add_argument("--no-bridge", action="store_true")
    r.add_argument("--sample-cap", type=int, default=10_000)
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("bench", help="run a benchmark sweep from a JSON config")
    b.add_argument("--config", required=True)
    b.add_argument("--out")
    b.add_argument("--generate", action="store_true", help="generate missing level files")
    b.add_argument("--quiet", action="store_true")
    b.set_defaults(func=cmd_bench)

    m = sub.add_parser("metrics", help="score an exported regions file")
    m.add_argument("--regions", required=True)
    m.add_argument("--input", help="units file with the features (default: the regions file)")
    m.add_argument("--sample-cap", type=int, default=10_000)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--geo", action="store_true", help="add compactness and overlap")
    m.set_defaults(func=cmd_metrics)

    e = sub.add_parser("export", help="attach region labels (one per line) to units")
    e.add_argument("--input", required=True)
    e.add_argument("--labels", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_export)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DegenerateInputError) as exc:
        return _fail(str(exc))
    except ValueError as exc:
        return _fail(str(exc))
    except OSError as exc:
        return _fail(str(exc), EXIT_FAILED)


if __name__ == "__main__":
    sys.exit(main())
