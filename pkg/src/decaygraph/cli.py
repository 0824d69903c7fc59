"""Command-line entry point: ``decaygraph {fit-bins,run,verify,bench}``.

Human-readable progress goes to stderr; each command ends by printing a
one-line JSON summary to stdout (to stderr when stdout carries data).
Exit status is non-zero exactly when a command fails or a checked
contract is violated.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from contextlib import nullcontext

import numpy as np

from decaygraph import __version__, kernels
from decaygraph.binning import fit_binning
from decaygraph.core import CATEGORICAL
from decaygraph.errors import DecayGraphError
from decaygraph.io import (
    RunConfig,
    SketchSettings,
    load_binning,
    load_config,
    prefetch,
    read_edge_stream,
    restore,
    save_binning,
    snapshot,
    write_embeddings,
)

log = logging.getLogger("decaygraph")


def _emit_summary(summary: dict, to_stderr: bool = False) -> None:
    print(json.dumps(summary, sort_keys=True), file=sys.stderr if to_stderr else sys.stdout)


# -- fit-bins ---------------------------------------------------------------------


def cmd_fit_bins(args) -> int:
    config = load_config(args.config)
    events = list(read_edge_stream(args.stream, config.schema, tolerance=config.tolerance))
    if args.cutoff is not None:
        train = [ev for ev in events if ev.timestamp <= args.cutoff]
        split = f"timestamp <= {args.cutoff}"
    else:
        if not 0 < args.train_fraction <= 1:
            raise SystemExit("--train-fraction must lie in (0, 1]")
        train = events[: math.floor(args.train_fraction * len(events))]
        split = f"first {args.train_fraction:.0%} of events"
    if not train:
        log.error("training prefix is empty (%s of %d events)", split, len(events))
        return 2
    binning = fit_binning(
        config.schema, train,
        n_bins=args.n_bins,
        max_categories=args.max_categories,
        degree_timescale=config.discounts.degree_timescale,
    )
    save_binning(args.out, binning)
    log.info("fitted bins on %d of %d events (%s)", len(train), len(events), split)
    sizes = {}
    for f in config.schema.features:
        n = binning[f.name].size
        sizes[f.name] = n
        log.info("  %-24s %-11s L=%d", f.name, f.kind, n)
        if n == 1 and f.kind != CATEGORICAL:
            log.warning("feature %r is constant on the training prefix; it collapses to one bin", f.name)
    _emit_summary({"command": "fit-bins", "train_events": len(train), "bins": sizes, "out": str(args.out)})
    return 0


# -- run ----------------------------------------------------------------------------


def _build_store(config: RunConfig, backend: str):
    from decaygraph.engine import Engine
    from decaygraph.sketch import SketchEngine, init_planes

    if config.sketch.enabled:
        width = sum(config.binning.sizes(config.schema))
        planes = init_planes(config.sketch.k, width, config.sketch.seed)
        return SketchEngine(config.schema, config.binning, config.discounts, planes,
                            tolerance=config.tolerance, backend=backend)
    return Engine(config.schema, config.binning, config.discounts, tolerance=config.tolerance, backend=backend)


def _apply_overrides(config: RunConfig, args) -> RunConfig:
    from dataclasses import replace

    changes = {}
    if args.bins:
        changes["binning"] = load_binning(args.bins)
    if args.sketch or args.k is not None or args.seed is not None:
        s = config.sketch
        changes["sketch"] = SketchSettings(
            enabled=s.enabled or args.sketch,
            k=args.k if args.k is not None else s.k,
            seed=args.seed if args.seed is not None else s.seed,
        )
    if args.pair_embeddings:
        changes["pair_embeddings"] = True
    if args.emit:
        changes["emit"] = args.emit
    if args.append_degrees:
        changes["append_degrees"] = True
    if args.tolerance is not None:
        changes["tolerance"] = args.tolerance
    return replace(config, **changes) if changes else config


def cmd_run(args) -> int:
    config = _apply_overrides(load_config(args.config), args)
    if config.binning is None:
        log.error("no bins in the config; run `decaygraph fit-bins` first or pass --bins")
        return 2
    if args.resume:
        store = restore(args.resume, config, backend=args.backend)
        skip = store.events_processed
        log.info("resumed %s: %d nodes, skipping %d already-applied events", args.resume, len(store), skip)
    else:
        store = _build_store(config, args.backend)
        skip = 0
    nodes_before = len(store)

    names = store.names(config.append_degrees)
    per_event = config.emit == "per-event"
    if per_event and config.pair_embeddings:
        names = tuple(f"src:{n}" for n in names) + tuple(f"dst:{n}" for n in names)
        id_columns = ["event_index", "source_id", "destination_id"]
    elif per_event:
        id_columns = ["event_index", "source_id", "destination_id"]
    else:
        id_columns = ["node_id"]
    if config.pair_embeddings and not per_event:
        log.warning("--pair-embeddings only applies to --emit per-event; writing final node rows")
    id_columns += list(args.passthrough) if per_event else []

    events = read_edge_stream(args.stream, config.schema, tolerance=config.tolerance, passthrough=args.passthrough)
    if args.prefetch:
        events = prefetch(events)
    to_stdout = args.output == "-"
    sink_ctx = nullcontext(sys.stdout) if to_stdout else open(args.output, "w", newline="")
    latencies = []
    clock = time.perf_counter_ns
    append = config.append_degrees
    t_start = time.perf_counter()
    index = -1

    def per_event_rows():
        nonlocal index
        for index, ev in enumerate(events):
            if index < skip:
                continue
            t0 = clock()
            store.process(ev)
            latencies.append(clock() - t0)
            if config.pair_embeddings:
                vec = np.concatenate((_node_row(store, ev.source_id, append),
                                      _node_row(store, ev.destination_id, append)))
            else:
                vec = _node_row(store, ev.source_id, append)
            yield (index, ev.source_id, ev.destination_id, *ev.extras), vec

    try:
        with sink_ctx as sink:
            if per_event:
                rows = write_embeddings(sink, per_event_rows(), names, id_columns)
            else:
                for index, ev in enumerate(events):
                    if index < skip:
                        continue
                    t0 = clock()
                    store.process(ev)
                    latencies.append(clock() - t0)
                rows = write_embeddings(sink, (((n,), v) for n, v in store.iter_embeddings(append)), names, id_columns)
    except DecayGraphError as exc:
        log.error("event %d: %s", index + 1, exc)
        return 1
    wall = time.perf_counter() - t_start

    manifest = None
    if args.snapshot_out:
        manifest = snapshot(store, args.snapshot_out, config)
        log.info("snapshot written to %s", args.snapshot_out)

    lat = np.asarray(latencies, dtype=float) / 1e3
    summary = {
        "command": "run",
        "backend": store.backend,
        "mode": "sketch" if config.sketch.enabled else "histogram",
        "events_processed": len(latencies),
        "nodes_created": len(store) - nodes_before,
        "nodes_total": len(store),
        "rows_written": rows,
        "wall_seconds": round(wall, 6),
        "latency_p50_us": float(np.percentile(lat, 50)) if lat.size else None,
        "latency_p99_us": float(np.percentile(lat, 99)) if lat.size else None,
    }
    if config.sketch.enabled:
        summary["sketch"] = {"k": config.sketch.k, "seed": config.sketch.seed}
    if manifest is not None:
        summary["snapshot"] = manifest
    log.info(
        "processed %d events, %d new nodes, %.3fs wall, p50 %.2fus, p99 %.2fus",
        summary["events_processed"], summary["nodes_created"], wall,
        summary["latency_p50_us"] or 0.0, summary["latency_p99_us"] or 0.0,
    )
    _emit_summary(summary, to_stderr=to_stdout)
    return 0


def _node_row(store, node_id, append: bool):
    if hasattr(store, "planes"):
        vec = store.theta(node_id)
    else:
        vec = store.vector(node_id)
    if append:
        vec = np.concatenate((vec, store.degrees(node_id)))
    return vec


# -- verify ---------------------------------------------------------------------------


def cmd_verify(args) -> int:
    from decaygraph import verify

    suites = list(verify.SUITES) if args.suite == "all" else [args.suite]
    results = []
    for name in suites:
        if name == "chain":
            res = verify.chain_suite(args.chain_length, seed=args.seed, backend=args.backend)
        elif name == "replay":
            res = verify.replay_suite(args.events, args.nodes, args.checkpoints, args.seed, backend=args.backend)
        elif name == "sketch":
            res = verify.sketch_suite(args.events, args.nodes, args.k, args.seed, backend=args.backend)
        else:
            res = verify.walks_suite(args.walks, args.chain_length, seed=args.seed)
        print(res.line(), file=sys.stderr)
        if res.passed and res.detail:
            print(f"    {res.detail}", file=sys.stderr)
        results.append(res)
    ok = all(r.passed for r in results)
    _emit_summary({
        "command": "verify",
        "passed": ok,
        "suites": {
            r.name: {"max_discrepancy": r.max_discrepancy, "tolerance": r.tolerance, "passed": r.passed,
                     "detail": r.detail, "seconds": round(r.seconds, 3)}
            for r in results
        },
    })
    return 0 if ok else 1


# -- bench ------------------------------------------------------------------------------


def cmd_bench(args) -> int:
    from decaygraph import bench

    if args.backend == "both":
        backends = kernels.available()
    else:
        backends = [args.backend]
    node_counts = [int(x) for x in args.nodes.split(",")]
    rows = bench.run_bench(node_counts, args.events, args.warmup, args.repetitions, backends, args.seed)
    bench.write_table(rows, sys.stderr)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            bench.write_table(rows, fh)
    ratios = {b: bench.size_ratio(rows, kernels.load(b).NAME) for b in backends}
    ok = all(r <= args.max_ratio for r in ratios.values())
    for b, r in ratios.items():
        status = "PASS" if r <= args.max_ratio else "FAIL"
        print(f"{status} {kernels.load(b).NAME}: largest/smallest mean latency ratio {r:.3f} (limit {args.max_ratio})",
              file=sys.stderr)
    _emit_summary({
        "command": "bench",
        "passed": ok,
        "ratios": {kernels.load(b).NAME: r for b, r in ratios.items()},
        "rows": [vars(r) for r in rows],
    })
    return 0 if ok else 1


# -- parser ------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="decaygraph", description="Streaming time-decayed node embeddings.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit-bins", help="fit histogram bins on a training prefix")
    f.add_argument("--config", required=True, help="run config (JSON) holding the feature schema")
    f.add_argument("--stream", required=True)
    f.add_argument("--out", required=True, help="where to write the bins (JSON)")
    f.add_argument("--n-bins", type=int, default=10)
    f.add_argument("--max-categories", type=int, default=32)
    split = f.add_mutually_exclusive_group()
    split.add_argument("--train-fraction", type=float, default=0.7)
    split.add_argument("--cutoff", type=float, default=None, help="fit on events with timestamp <= cutoff")
    f.set_defaults(func=cmd_fit_bins)

    r = sub.add_parser("run", help="stream events and write embeddings")
    r.add_argument("--config", required=True)
    r.add_argument("--stream", required=True)
    r.add_argument("--output", required=True, help="CSV path, or - for stdout")
    r.add_argument("--bins", help="bins file overriding the config's")
    r.add_argument("--sketch", action="store_true", help="keep k random projections instead of histograms")
    r.add_argument("--k", type=int, default=None)
    r.add_argument("--seed", type=int, default=None, help="sketch plane seed (default 42)")
    r.add_argument("--pair-embeddings", action="store_true")
    r.add_argument("--emit", choices=["per-event", "final"], default=None)
    r.add_argument("--append-degrees", action="store_true", help="append raw in/out degree columns")
    r.add_argument("--tolerance", type=float, default=None, help="allowed timestamp regression, seconds")
    r.add_argument("--passthrough", nargs="*", default=[], help="stream columns copied to per-event rows")
    r.add_argument("--snapshot-out", help="write the final state here")
    r.add_argument("--resume", help="restore this snapshot and skip the events it already holds")
    r.add_argument("--prefetch", action="store_true", help="parse the stream on a reader thread")
    r.add_argument("--backend", choices=["auto", "python", "cython"], default="auto")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="check the engine against independent oracles")
    v.add_argument("--suite", choices=["chain", "replay", "sketch", "walks", "all"], default="all")
    v.add_argument("--events", type=int, default=10_000)
    v.add_argument("--nodes", type=int, default=300)
    v.add_argument("--checkpoints", type=int, default=5)
    v.add_argument("--chain-length", type=int, default=20)
    v.add_argument("--walks", type=int, default=100_000)
    v.add_argument("--k", type=int, default=16)
    v.add_argument("--seed", type=int, default=42)
    v.add_argument("--backend", choices=["auto", "python", "cython"], default="auto")
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bench", help="per-edge latency versus graph size")
    b.add_argument("--nodes", default="1000,10000,100000", help="comma-separated graph sizes")
    b.add_argument("--events", type=int, default=40_000)
    b.add_argument("--warmup", type=int, default=5_000)
    b.add_argument("--repetitions", type=int, default=10)
    b.add_argument("--backend", choices=["auto", "python", "cython", "both"], default="both")
    b.add_argument("--max-ratio", type=float, default=2.0)
    b.add_argument("--out", help="also write the table here")
    b.add_argument("--seed", type=int, default=42)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(message)s" if args.verbose else "%(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(logging.DEBUG if args.verbose else logging.INFO)
    log.propagate = False
    try:
        return args.func(args)
    except (DecayGraphError, OSError, KeyError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
