"""Oracle suites run by ``decaygraph verify``.

Every suite generates its own synthetic data from a seed, compares the
engine against an independent computation and reports the worst
discrepancy next to the tolerance it must stay under.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from decaygraph import oracle, synth
from decaygraph.binning import fit_binning
from decaygraph.core import (
    BinningSpec,
    Constant,
    DiscountConfig,
    EdgeEvent,
    ExpDecay,
    FeatureDef,
    FeatureSchema,
    NumericalBins,
)
from decaygraph.engine import Engine
from decaygraph.sketch import SketchEngine, average_preservation_check, init_planes

CHAIN_TOL = 1e-12
REPLAY_TOL = 1e-12
SKETCH_TOL = 1e-9
AVERAGE_TOL = 1e-12
STAR_SIGMAS = 3.0


@dataclass
class SuiteResult:
    name: str
    max_discrepancy: float
    tolerance: float
    passed: bool
    detail: str = ""
    seconds: float = 0.0
    extra: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = f"{status} {self.name}: max discrepancy {self.max_discrepancy:.3e} (tolerance {self.tolerance:.0e}, {self.seconds:.2f}s)"
        if self.detail and not self.passed:
            text += f"\n    {self.detail}"
        return text


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def random_discounts(rng: np.random.Generator) -> DiscountConfig:
    def mode():
        if rng.random() < 0.5:
            return Constant(float(rng.random()))
        return ExpDecay(float(rng.uniform(0.5, 20.0)))

    return DiscountConfig(mode(), mode(), float(rng.uniform(1.0, 50.0)))


@_timed
def chain_suite(max_length: int = 20, alphas=(0.0, 0.25, 0.5, 0.75, 1.0), seed: int = 42,
                backend: str = "auto") -> SuiteResult:
    """Streaming result on chains vs the truncated discounted sum."""
    schema = synth.make_schema(2, 1, derived=False)
    worst, where = 0.0, ""
    for length in range(1, max_length + 1):
        events = synth.chain_stream(length, schema, seed + length)
        binning = fit_binning(schema, synth.random_stream(500, 10, schema, seed), n_bins=10, max_categories=6)
        for a in alphas:
            d = oracle.chain_equivalence(events, a, schema, binning, backend=backend)
            if d > worst:
                worst, where = d, f"chain length {length}, alpha {a}"
    return SuiteResult("chain", worst, CHAIN_TOL, worst <= CHAIN_TOL, where)


def replay_compare(engine_states: dict, reference: dict) -> tuple[float, str]:
    if set(engine_states) != set(reference):
        return float("inf"), "node sets differ"
    worst, where = 0.0, ""
    for n, ref in reference.items():
        got = engine_states[n]
        diff = np.abs(got.flat() - ref.flat())
        if diff.size and diff.max() > worst:
            j = int(diff.argmax())
            worst = float(diff[j])
            where = f"node {n!r}, flat bin {j}: engine {got.flat()[j]!r} vs replay {ref.flat()[j]!r}"
        for label, a, b in (("in_degree", got.in_degree, ref.in_degree), ("out_degree", got.out_degree, ref.out_degree)):
            if abs(a - b) > worst:
                worst, where = abs(a - b), f"node {n!r}, {label}: engine {a!r} vs replay {b!r}"
        clocks = lambda s: (s.last_any_event_time, s.last_in_event_time, s.last_out_event_time)
        if clocks(got) != clocks(ref):
            return float("inf"), f"node {n!r}: clocks differ {clocks(got)} vs {clocks(ref)}"
    return worst, where


@_timed
def replay_suite(n_events: int = 10_000, n_nodes: int = 300, n_checkpoints: int = 5, seed: int = 42,
                 backend: str = "auto") -> SuiteResult:
    """Incremental engine vs from-scratch replay at evenly spaced checkpoints."""
    rng = np.random.default_rng(seed)
    schema = synth.make_schema(2, 1, derived=True)
    events = synth.random_stream(n_events, n_nodes, schema, seed)
    discounts = random_discounts(rng)
    binning = fit_binning(schema, events[: max(1, n_events // 4)], degree_timescale=discounts.degree_timescale)
    checkpoints = sorted({int(round(n_events * (i + 1) / n_checkpoints)) for i in range(n_checkpoints)})
    references = oracle.naive_replay(events, schema, binning, discounts, checkpoints)
    eng = Engine(schema, binning, discounts, backend=backend)
    worst, where, done = 0.0, "", 0
    for cp, ref in zip(checkpoints, references):
        eng.run(events[done:cp])
        done = cp
        d, w = replay_compare(eng.states(), ref)
        if d > worst:
            worst, where = d, f"checkpoint {cp}: {w}"
    return SuiteResult("replay", worst, REPLAY_TOL, worst <= REPLAY_TOL, where,
                       extra={"checkpoints": checkpoints, "discounts": discounts.to_dict()})


@_timed
def sketch_suite(n_events: int = 10_000, n_nodes: int = 300, k: int = 16, seed: int = 42,
                 backend: str = "auto") -> SuiteResult:
    """Streamed projections vs projections of the full histograms, plus averaging."""
    rng = np.random.default_rng(seed)
    schema = synth.make_schema(2, 1, derived=True)
    events = synth.random_stream(n_events, n_nodes, schema, seed)
    discounts = random_discounts(rng)
    binning = fit_binning(schema, events[: max(1, n_events // 4)], degree_timescale=discounts.degree_timescale)
    full = Engine(schema, binning, discounts, backend=backend)
    planes = init_planes(k, full.layout.width, seed)
    sk = SketchEngine(schema, binning, discounts, planes, backend=backend)
    full.run(events)
    sk.run(events)
    projected = full.matrix() @ planes.vectors.T
    diff = np.abs(sk.matrix() - projected)
    worst = float(diff.max(initial=0.0))
    where = ""
    if diff.size:
        r, j = np.unravel_index(int(diff.argmax()), diff.shape)
        where = f"node {full.nodes()[r]!r}, theta_{j}"
    hists = _random_histogram_sets(rng, 100, full.layout.sizes)
    avg = average_preservation_check(hists, planes)
    passed = worst <= SKETCH_TOL and avg <= AVERAGE_TOL
    if avg > AVERAGE_TOL:
        where += f"; averaging discrepancy {avg:.3e}"
    return SuiteResult("sketch", worst, SKETCH_TOL, passed, where, extra={"averaging": avg})


def _random_histogram_sets(rng, n, sizes) -> np.ndarray:
    return np.hstack([rng.dirichlet(np.ones(s), n) for s in sizes])


def star_fixture():
    """Three leaves reach a hub, then a fourth node hits the hub.

    Returns ``(events, schema, binning, seed_node)``.  Each leaf edge falls
    in its own bin, the newest edge in a fourth one.
    """
    schema = FeatureSchema((FeatureDef("x"),))
    binning = BinningSpec({"x": NumericalBins((1.0, 2.0, 3.0))})
    events = [
        EdgeEvent("a", "hub", 1.0, (0.5,)),
        EdgeEvent("b", "hub", 2.0, (1.5,)),
        EdgeEvent("d", "hub", 3.0, (2.5,)),
        EdgeEvent("s", "hub", 4.0, (3.5,)),
    ]
    return events, schema, binning, "s"


def star_expectation(alpha: float) -> np.ndarray:
    """Closed form for the star fixture: one hop to the hub, then one of three leaves."""
    e = np.eye(4)
    leaves = (e[0] + e[1] + e[2]) / 3.0
    return (1 - alpha) * e[3] + alpha * (1 - alpha) * leaves + alpha**2 * np.full(4, 0.25)


@_timed
def walks_suite(n_walks: int = 100_000, max_length: int = 20, alpha: float = 0.5, seed: int = 42) -> SuiteResult:
    """Walk sampler: exact on chains, within a few standard errors on a star."""
    schema = synth.make_schema(2, 1, derived=False)
    binning = fit_binning(schema, synth.random_stream(500, 10, schema, seed), max_categories=6)
    chain_worst = 0.0
    for length in (1, 2, 5, max_length):
        events = synth.chain_stream(length, schema, seed + length)
        seed_node = events[-1].destination_id
        est = oracle.walk_sampler(events, seed_node, alpha, 50, schema, binning, rng_seed=seed)
        deltas = [oracle.edge_onehot(ev, schema, binning) for ev in reversed(events)]
        exact = oracle.truncated_sum(deltas, alpha, oracle.uniform_tail(schema, binning))
        chain_worst = max(chain_worst, float(np.abs(est.mean - exact).max()), float(est.stderr.max()))

    events, schema, binning, seed_node = star_fixture()
    est = oracle.walk_sampler(events, seed_node, alpha, n_walks, schema, binning, rng_seed=seed)
    expected = star_expectation(alpha)
    err = np.abs(est.mean - expected)
    allowed = STAR_SIGMAS * est.stderr + 1e-12
    noisy = est.stderr > 0
    z = float(np.max(err[noisy] / est.stderr[noisy], initial=0.0))
    star_ok = bool(np.all(err <= allowed))
    passed = chain_worst <= CHAIN_TOL and star_ok
    detail = f"chain max {chain_worst:.3e}; star max |err|/stderr {z:.2f} (limit {STAR_SIGMAS})"
    return SuiteResult("walks", chain_worst, CHAIN_TOL, passed, detail,
                       extra={"star_mean": est.mean.tolist(), "star_stderr": est.stderr.tolist(), "star_z": z})


SUITES = {
    "chain": chain_suite,
    "replay": replay_suite,
    "sketch": sketch_suite,
    "walks": walks_suite,
}
