"""Per-edge latency versus graph size, for each kernel backend.

The timed region covers one ``process`` call plus reading the pair
embedding of the two endpoints; stream generation and parsing stay
outside it.  Every node of the graph exists before timing starts, so
"graph size" is the number of node states held by the engine.
"""

from __future__ import annotations

import csv
import gc
import statistics
import time
from dataclasses import asdict, dataclass
from typing import IO, Sequence

import numpy as np

from decaygraph import kernels, synth
from decaygraph.binning import fit_binning
from decaygraph.core import Constant, DiscountConfig, ExpDecay
from decaygraph.engine import Engine

BENCH_DISCOUNTS = DiscountConfig(Constant(0.6), ExpDecay(50.0), 100.0)


@dataclass
class BenchRow:
    backend: str
    nodes: int
    events: int
    repetitions: int
    mean_us: float
    std_us: float
    p50_us: float
    p99_us: float
    ratio: float = 1.0


def measure(n_nodes: int, n_events: int, warmup: int, repetitions: int,
            backend: str = "auto", seed: int = 42) -> BenchRow:
    schema = synth.make_schema(2, 1, derived=True)
    stream = synth.random_stream(warmup + n_events, n_nodes, schema, seed)
    binning = fit_binning(schema, stream[: max(warmup, 1)], degree_timescale=BENCH_DISCOUNTS.degree_timescale)
    warm, timed = stream[:warmup], stream[warmup:]
    pairs = [(ev.source_id, ev.destination_id) for ev in timed]
    rep_means = []
    samples = np.empty(repetitions * len(timed))
    clock = time.perf_counter_ns
    for rep in range(repetitions):
        eng = Engine(schema, binning, BENCH_DISCOUNTS, backend=backend, capacity=n_nodes)
        eng.reserve(range(n_nodes))
        eng.run(warm)
        process, read = eng.process, eng.pair_vector
        lat = [0] * len(timed)
        gc_was_on = gc.isenabled()
        gc.disable()
        try:
            for i, (ev, (s, d)) in enumerate(zip(timed, pairs)):
                t0 = clock()
                process(ev)
                read(s, d)
                lat[i] = clock() - t0
        finally:
            if gc_was_on:
                gc.enable()
        arr = np.asarray(lat, dtype=float) / 1e3
        samples[rep * len(timed):(rep + 1) * len(timed)] = arr
        rep_means.append(float(arr.mean()))
    return BenchRow(
        backend=kernels.load(backend).NAME,
        nodes=n_nodes,
        events=n_events,
        repetitions=repetitions,
        mean_us=statistics.fmean(rep_means),
        std_us=statistics.stdev(rep_means) if repetitions > 1 else 0.0,
        p50_us=float(np.percentile(samples, 50)),
        p99_us=float(np.percentile(samples, 99)),
    )


def run_bench(node_counts: Sequence[int], n_events: int = 40_000, warmup: int = 5_000,
              repetitions: int = 10, backends: Sequence[str] = ("auto",), seed: int = 42) -> list[BenchRow]:
    """One row per (backend, graph size); ``ratio`` is relative to the smallest graph."""
    rows = []
    for backend in backends:
        group = [measure(n, n_events, warmup, repetitions, backend, seed) for n in sorted(node_counts)]
        base = group[0].mean_us
        for r in group:
            r.ratio = r.mean_us / base
        rows += group
    return rows


def size_ratio(rows: Sequence[BenchRow], backend: str) -> float:
    """Mean latency of the largest graph over that of the smallest."""
    group = sorted((r for r in rows if r.backend == backend), key=lambda r: r.nodes)
    return group[-1].mean_us / group[0].mean_us


def write_table(rows: Sequence[BenchRow], sink: IO[str]) -> None:
    w = csv.DictWriter(sink, fieldnames=list(asdict(rows[0])), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (f"{v:.4g}" if isinstance(v, float) else v) for k, v in asdict(r).items()})
