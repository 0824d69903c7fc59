"""Slow, independent reference computations for checking the engine.

Nothing here touches the engine's per-edge path.  The replay keeps every
node as plain Python lists and re-derives every rule from scratch; the
walk sampler follows actual temporal walks over stored edges.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from collections import Counter
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

import numpy as np

from decaygraph.core import (
    DERIVED_IN_DEGREE,
    DERIVED_TIME_DELTA,
    EDGE,
    BinningSpec,
    Constant,
    DiscountConfig,
    EdgeEvent,
    FeatureSchema,
    Layout,
    NodeState,
)
from decaygraph.errors import PreconditionError, StructuralError, TimeOrderError


def truncated_sum(path_deltas: Sequence, alpha: float, tail) -> np.ndarray:
    """sum_i alpha^i (1 - alpha) delta_i  +  alpha^k tail, newest hop first."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    tail = np.asarray(tail, dtype=float)
    out = np.zeros_like(tail)
    w = 1.0
    for d in path_deltas:
        d = np.asarray(d, dtype=float)
        if d.shape != tail.shape:
            raise StructuralError(f"delta of shape {d.shape} does not match tail {tail.shape}")
        out += w * (1.0 - alpha) * d
        w *= alpha
    return out + w * tail


# -- independent helpers -------------------------------------------------------


def _bin(value, entry) -> int:
    if hasattr(entry, "mapping"):
        return entry.mapping.get(str(value), entry.size - 1)
    x = float(value)
    j = 0
    for c in entry.cuts:
        if x >= c:
            j += 1
    return j


def edge_onehot(event: EdgeEvent, schema: FeatureSchema, binning: BinningSpec) -> np.ndarray:
    parts = []
    for f, v in zip(schema.edge_features, event.values):
        e = binning[f.name]
        vec = np.zeros(e.size)
        vec[_bin(v, e)] = 1.0
        parts.append(vec)
    return np.concatenate(parts)


def uniform_tail(schema: FeatureSchema, binning: BinningSpec) -> np.ndarray:
    return np.concatenate([np.full(binning[f.name].size, 1.0 / binning[f.name].size) for f in schema.features])


def _require_edge_only(schema: FeatureSchema) -> None:
    if any(f.source != EDGE for f in schema.features):
        raise PreconditionError("this oracle covers edge features only; drop derived features from the schema")


def check_chain(events: Sequence[EdgeEvent]) -> Hashable:
    """Validate a temporal chain ``n0 -> n1 -> ... -> nk`` and return ``nk``."""
    if not events:
        raise PreconditionError("empty chain")
    seen = {events[0].source_id}
    prev = None
    for i, ev in enumerate(events):
        if prev is not None:
            if ev.source_id != prev.destination_id:
                raise PreconditionError(f"event {i} does not continue the chain")
            if not ev.timestamp > prev.timestamp:
                raise PreconditionError(f"event {i} is not strictly later than event {i - 1}")
        if ev.destination_id in seen:
            raise PreconditionError(f"event {i} revisits node {ev.destination_id!r}")
        seen.add(ev.destination_id)
        prev = ev
    return events[-1].destination_id


def chain_equivalence(
    chain_events: Sequence[EdgeEvent],
    alpha: float,
    schema: FeatureSchema,
    binning: BinningSpec,
    backend: str = "auto",
) -> float:
    """Max |engine histogram of the chain's last node - truncated sum|.

    With ``beta = 0`` each hop of a chain hands the whole history of the
    older node forward, so the streaming result must equal the closed form.
    """
    from decaygraph.engine import Engine

    _require_edge_only(schema)
    seed = check_chain(chain_events)
    eng = Engine(schema, binning, DiscountConfig(Constant(alpha), Constant(0.0)), backend=backend)
    eng.run(chain_events)
    deltas = [edge_onehot(ev, schema, binning) for ev in reversed(chain_events)]
    expected = truncated_sum(deltas, alpha, uniform_tail(schema, binning))
    return float(np.max(np.abs(eng.vector(seed) - expected)))


# -- naive replay ---------------------------------------------------------------


def naive_replay(
    events: Sequence[EdgeEvent],
    schema: FeatureSchema,
    binning: BinningSpec,
    discounts: DiscountConfig,
    checkpoints: Iterable[int],
    tolerance: float = 0.0,
) -> list[dict]:
    """Recompute every node state from scratch for each prefix length in ``checkpoints``.

    Returns one ``{node_id: NodeState}`` dict per checkpoint.
    """
    layout = Layout.build(schema, binning)
    return [_replay_prefix(events[:n], schema, binning, discounts, tolerance, layout) for n in checkpoints]


def _discount(mode, gap):
    if isinstance(mode, Constant):
        return mode.value
    return 0.0 if gap is None else math.exp(-gap / mode.tau)


def _replay_prefix(events, schema, binning, discounts, tolerance, layout):
    tau = discounts.degree_timescale
    nodes: dict = {}
    clock = -math.inf

    def node(n):
        if n not in nodes:
            nodes[n] = {
                "h": [[1.0 / binning[f.name].size] * binning[f.name].size for f in schema.features],
                "din": 0.0, "dout": 0.0, "tany": None, "tin": None, "tout": None,
            }
        return nodes[n]

    def gap(last, now):
        if last is None:
            return None
        return max(now - last, 0.0)

    def decayed(d, last, now):
        return 0.0 if last is None else d * math.exp(-gap(last, now) / tau)

    def bumped(d, last, now):
        return 1.0 if last is None else d * math.exp(-gap(last, now) / tau) + 1.0

    def onehots(ev, dt, din, dout):
        edge_vals = iter(ev.values)
        out = []
        for f in schema.features:
            e = binning[f.name]
            if f.source == EDGE:
                j = _bin(next(edge_vals), e)
            elif f.source == DERIVED_TIME_DELTA:
                j = e.size - 1 if dt is None else _bin(dt, e)
            elif f.source == DERIVED_IN_DEGREE:
                j = _bin(din, e)
            else:
                j = _bin(dout, e)
            out.append([1.0 if i == j else 0.0 for i in range(e.size)])
        return out

    def mixed(own, other, delta, a, b):
        return [
            [b * x + (1.0 - b) * (a * y + (1.0 - a) * d) for x, y, d in zip(hx, hy, hd)]
            for hx, hy, hd in zip(own, other, delta)
        ]

    for i, ev in enumerate(events):
        ts = ev.timestamp
        if ts < clock - tolerance:
            raise TimeOrderError(f"event {i} goes back in time")
        clock = max(clock, ts)
        s = node(ev.source_id)
        if ev.source_id == ev.destination_id:
            dt = gap(s["tany"], ts)
            din = bumped(s["din"], s["tin"], ts)
            dout = bumped(s["dout"], s["tout"], ts)
            pre = [list(h) for h in s["h"]]
            a, b = _discount(discounts.alpha, dt), _discount(discounts.beta, dt)
            s["h"] = mixed(pre, pre, onehots(ev, dt, din, dout), a, b)
            s["din"], s["dout"] = din, dout
            for key in ("tany", "tin", "tout"):
                s[key] = ts if s[key] is None else max(s[key], ts)
            continue
        d = node(ev.destination_id)
        s_pre = [list(h) for h in s["h"]]
        d_pre = [list(h) for h in d["h"]]
        dt_s, dt_d = gap(s["tany"], ts), gap(d["tany"], ts)
        s_out = bumped(s["dout"], s["tout"], ts)
        d_in = bumped(d["din"], d["tin"], ts)
        s_delta = onehots(ev, dt_s, decayed(s["din"], s["tin"], ts), s_out)
        d_delta = onehots(ev, dt_d, d_in, decayed(d["dout"], d["tout"], ts))
        s["h"] = mixed(s_pre, d_pre, s_delta, _discount(discounts.alpha, dt_s), _discount(discounts.beta, dt_s))
        d["h"] = mixed(d_pre, s_pre, d_delta, _discount(discounts.alpha, dt_d), _discount(discounts.beta, dt_d))
        s["dout"], d["din"] = s_out, d_in
        for rec, keys in ((s, ("tany", "tout")), (d, ("tany", "tin"))):
            for key in keys:
                rec[key] = ts if rec[key] is None else max(rec[key], ts)

    return {
        n: NodeState(
            layout,
            tuple(np.array(h) for h in rec["h"]),
            rec["din"], rec["dout"], rec["tany"], rec["tin"], rec["tout"],
        )
        for n, rec in nodes.items()
    }


def max_state_discrepancy(a: dict, b: dict) -> float:
    """Largest elementwise difference between two ``{node: NodeState}`` maps."""
    if set(a) != set(b):
        raise StructuralError(f"node sets differ: {len(set(a) ^ set(b))} nodes in only one side")
    worst = 0.0
    for n, sa in a.items():
        sb = b[n]
        worst = max(
            worst,
            float(np.max(np.abs(sa.flat() - sb.flat()), initial=0.0)),
            abs(sa.in_degree - sb.in_degree),
            abs(sa.out_degree - sb.out_degree),
        )
        if (sa.last_any_event_time, sa.last_in_event_time, sa.last_out_event_time) != (
            sb.last_any_event_time, sb.last_in_event_time, sb.last_out_event_time,
        ):
            return math.inf
    return worst


# -- temporal random walks ----------------------------------------------------


@dataclass
class WalkEstimate:
    mean: np.ndarray
    stderr: np.ndarray
    n_walks: int
    distinct_paths: int


def walk_sampler(
    events: Sequence[EdgeEvent],
    seed_node: Hashable,
    alpha: float,
    n_walks: int,
    schema: FeatureSchema,
    binning: BinningSpec,
    *,
    max_hops: int = 64,
    rng_seed: int = 42,
) -> WalkEstimate:
    """Monte-Carlo discounted histogram from backward temporal walks.

    Each walk starts on the seed node's latest edge and repeatedly moves to
    a uniformly chosen edge that is strictly older than the one it arrived
    on.  Hop ``i`` contributes ``alpha^i (1 - alpha)`` times its edge's
    one-hot bins; the remaining ``alpha^depth`` mass goes to the uniform
    histogram.
    """
    _require_edge_only(schema)
    if n_walks < 1:
        raise ValueError("n_walks must be >= 1")
    incident: dict = {}
    for idx, ev in enumerate(events):
        incident.setdefault(ev.source_id, []).append(idx)
        if ev.destination_id != ev.source_id:
            incident.setdefault(ev.destination_id, []).append(idx)
    if seed_node not in incident:
        raise KeyError(f"unknown seed node {seed_node!r}")
    times = {n: [events[i].timestamp for i in idxs] for n, idxs in incident.items()}

    rng = np.random.default_rng(rng_seed)
    paths: Counter = Counter()
    for u in _uniform_rows(rng, n_walks, max_hops):
        e = incident[seed_node][-1]
        at = seed_node
        path = [e]
        while len(path) < max_hops:
            ev = events[e]
            at = ev.destination_id if ev.source_id == at else ev.source_id
            older = bisect_left(times[at], ev.timestamp)
            if older == 0:
                break
            e = incident[at][int(u[len(path)] * older)]
            path.append(e)
        paths[tuple(path)] += 1

    onehot = {}
    tail = uniform_tail(schema, binning)
    outcomes, counts = [], []
    for path, c in paths.items():
        w = 1.0
        acc = np.zeros_like(tail)
        for e in path:
            if e not in onehot:
                onehot[e] = edge_onehot(events[e], schema, binning)
            acc += w * (1.0 - alpha) * onehot[e]
            w *= alpha
        outcomes.append(acc + w * tail)
        counts.append(c)
    X = np.array(outcomes)
    c = np.array(counts, dtype=float)
    mean = (c[:, None] * X).sum(axis=0) / n_walks
    if n_walks > 1:
        var = (c[:, None] * (X - mean) ** 2).sum(axis=0) / (n_walks - 1)
    else:
        var = np.zeros_like(mean)
    return WalkEstimate(mean, np.sqrt(var / n_walks), n_walks, len(paths))


def _uniform_rows(rng, n, width, block=4096):
    while n > 0:
        m = min(n, block)
        yield from rng.random((m, width))
        n -= m


@dataclass
class ReportRow:
    node_id: Hashable
    events: int
    l1_distance: float
    max_stderr: float


def approximation_report(
    events: Sequence[EdgeEvent],
    schema: FeatureSchema,
    binning: BinningSpec,
    discounts: DiscountConfig,
    *,
    n_walks: int = 2000,
    max_hops: int = 64,
    rng_seed: int = 42,
) -> list[ReportRow]:
    """Per-node L1 distance between streaming histograms and walk estimates.

    Informational: the streaming update mixes all neighbours over time and
    is only an approximation of the walk expectation off chains.
    """
    from decaygraph.engine import Engine

    if not isinstance(discounts.alpha, Constant):
        raise PreconditionError("walk comparison needs a constant alpha")
    eng = Engine(schema, binning, discounts)
    eng.run(events)
    degree = Counter()
    for ev in events:
        degree[ev.source_id] += 1
        if ev.destination_id != ev.source_id:
            degree[ev.destination_id] += 1
    rows = []
    for n in eng.nodes():
        est = walk_sampler(events, n, discounts.alpha.value, n_walks, schema, binning,
                           max_hops=max_hops, rng_seed=rng_seed)
        l1 = float(np.abs(eng.vector(n) - est.mean).sum())
        rows.append(ReportRow(n, degree[n], l1, float(est.stderr.max(initial=0.0))))
    return rows
