"""Streaming per-node decayed histograms.

Each arriving edge touches exactly its two endpoints.  Both endpoints read
each other's pre-update state, mix it with the one-hot bins of the new
event and their own history, and advance their streaming degree counters:

    s_self <- beta * s_self + (1 - beta) * (alpha * s_neighbor + (1 - alpha) * delta)
    d      <- d * exp(-dt / tau_d) + 1

The per-edge cost depends only on the total number of bins, never on the
size of the graph.  No adjacency is stored.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from typing import Hashable, Iterable, Iterator, Mapping, Sequence

import numpy as np

from decaygraph import kernels
from decaygraph.binning import lookup
from decaygraph.core import (
    CATEGORICAL,
    DERIVED_IN_DEGREE,
    DERIVED_OUT_DEGREE,
    DERIVED_TIME_DELTA,
    EDGE,
    BinningSpec,
    Constant,
    DiscountConfig,
    DiscountMode,
    EdgeEvent,
    Embedding,
    FeatureSchema,
    Layout,
    NodeState,
)
from decaygraph.errors import DataError, StructuralError, TimeOrderError

__all__ = [
    "Engine",
    "init_node",
    "delta_vector",
    "effective_discount",
    "histogram_update",
    "update_degree",
    "derived_feature_values",
]


def init_node(schema: FeatureSchema, binning: BinningSpec) -> NodeState:
    """A node nobody has seen yet: uniform histograms, zero degrees."""
    layout = Layout.build(schema, binning)
    return NodeState(layout, tuple(np.full(n, 1.0 / n) for n in layout.sizes))


def effective_discount(mode: DiscountMode, dt: float | None) -> float:
    """Value of ``alpha`` or ``beta`` for an update ``dt`` seconds after the last one.

    ``dt is None`` marks a node's first event; time-decayed modes return 0
    there so the new information fully replaces the initial state.
    """
    if isinstance(mode, Constant):
        return mode.value
    if dt is None:
        return 0.0
    if dt < 0:
        raise TimeOrderError(f"negative time difference {dt}")
    return math.exp(-dt / mode.tau)


def update_degree(d: float, dt: float | None, tau: float) -> float:
    """Streaming degree count: decay the old count, then add this edge."""
    if dt is None:
        return 1.0
    if dt < 0:
        raise TimeOrderError(f"negative time difference {dt}")
    return d * math.exp(-dt / tau) + 1.0


def delta_vector(
    event: EdgeEvent,
    derived_values: Mapping[str, float | None],
    schema: FeatureSchema,
    binning: BinningSpec,
) -> tuple[np.ndarray, ...]:
    """One-hot bin indicators, one vector per schema feature.

    ``derived_values`` maps a derived source kind to its value for the
    updating node.  A missing time difference (first event) selects the
    last bin.
    """
    edge_feats = schema.edge_features
    if len(event.values) != len(edge_feats):
        raise StructuralError(f"event has {len(event.values)} values, schema has {len(edge_feats)} edge features")
    edge_values = dict(zip((f.name for f in edge_feats), event.values))
    out = []
    for f in schema.features:
        entry = binning[f.name]
        if f.source == EDGE:
            j = lookup(edge_values[f.name], entry)
        else:
            if f.source not in derived_values:
                raise StructuralError(f"no derived value supplied for {f.source}")
            value = derived_values[f.source]
            j = entry.size - 1 if value is None else lookup(value, entry)
        vec = np.zeros(entry.size)
        vec[j] = 1.0
        out.append(vec)
    return tuple(out)


def histogram_update(s_self, s_neighbor, delta, alpha: float, beta: float) -> tuple[np.ndarray, ...]:
    """Mix a node's histograms with its neighbour's and the event's indicators."""
    if not (len(s_self) == len(s_neighbor) == len(delta)):
        raise StructuralError("histogram sets have different feature counts")
    out = []
    for a, b, d in zip(s_self, s_neighbor, delta):
        a, b, d = np.asarray(a, float), np.asarray(b, float), np.asarray(d, float)
        if not (a.shape == b.shape == d.shape):
            raise StructuralError(f"bin count mismatch: {a.shape}, {b.shape}, {d.shape}")
        out.append(beta * a + (1.0 - beta) * (alpha * b + (1.0 - alpha) * d))
    return tuple(out)


def _discount_fn(mode: DiscountMode):
    # specialised twin of effective_discount for the per-edge path
    if isinstance(mode, Constant):
        value = mode.value
        return lambda dt: value
    tau = mode.tau

    def decayed(dt):
        if dt is None:
            return 0.0
        return math.exp(-dt / tau)

    return decayed


def _elapsed(last: float | None, now: float) -> float | None:
    if last is None:
        return None
    # within-tolerance jitter would give a negative gap; treat it as simultaneous
    return now - last if now > last else 0.0


class StreamCore:
    """Bookkeeping shared by the histogram engine and the sketch engine.

    Owns node ids, degree counters, clocks, bin lookup and the per-event
    control flow.  Subclasses own the per-node vectors and provide the
    mixing step.
    """

    def __init__(
        self,
        schema: FeatureSchema,
        binning: BinningSpec,
        discounts: DiscountConfig,
        *,
        tolerance: float = 0.0,
        capacity: int = 1024,
    ):
        self.schema = schema
        self.binning = binning
        self.discounts = discounts
        self.layout = Layout.build(schema, binning)
        if tolerance < 0:
            raise ValueError("timestamp tolerance must be >= 0")
        self.tolerance = float(tolerance)

        bases = dict(zip(self.layout.features, self.layout.offsets))
        self._n_edge = len(schema.edge_features)
        self._edge_plan = []
        for f in schema.edge_features:
            entry = binning[f.name]
            if f.kind == CATEGORICAL:
                self._edge_plan.append((bases[f.name], None, entry.mapping, entry.overflow, f.name))
            else:
                self._edge_plan.append((bases[f.name], entry.cuts, None, 0, f.name))

        def derived(source):
            f = schema.derived(source)
            if f is None:
                return None
            return bases[f.name], binning[f.name].cuts, binning[f.name].size - 1

        self._dt_plan = derived(DERIVED_TIME_DELTA)
        self._in_plan = derived(DERIVED_IN_DEGREE)
        self._out_plan = derived(DERIVED_OUT_DEGREE)

        self._alpha_at = _discount_fn(discounts.alpha)
        self._beta_at = _discount_fn(discounts.beta)
        self._tau_d = discounts.degree_timescale

        self._index: dict[Hashable, int] = {}
        self._ids: list[Hashable] = []
        self._in: list[float] = []
        self._out: list[float] = []
        self._t_any: list[float | None] = []
        self._t_in: list[float | None] = []
        self._t_out: list[float | None] = []
        self._capacity = max(int(capacity), 1)
        self._clock = -math.inf
        self.events_processed = 0

    # -- subclass hooks ---------------------------------------------------
    def _grow(self, capacity: int) -> None:
        raise NotImplementedError

    def _init_row(self, row: int) -> None:
        raise NotImplementedError

    def _mix_pair(self, u, v, pos_u, pos_v, au, bu, av, bv) -> None:
        raise NotImplementedError

    def _mix_self(self, u, pos, a, b) -> None:
        raise NotImplementedError

    # -- node bookkeeping -------------------------------------------------
    def __len__(self) -> int:
        return len(self._ids)

    def __contains__(self, node_id) -> bool:
        return node_id in self._index

    def nodes(self) -> list:
        return list(self._ids)

    def _new_row(self, node_id) -> int:
        row = len(self._ids)
        if row == self._capacity:
            self._capacity *= 2
            self._grow(self._capacity)
        self._index[node_id] = row
        self._ids.append(node_id)
        self._in.append(0.0)
        self._out.append(0.0)
        self._t_any.append(None)
        self._t_in.append(None)
        self._t_out.append(None)
        self._init_row(row)
        return row

    def reserve(self, node_ids: Iterable) -> None:
        """Create fresh states for ``node_ids`` that do not exist yet."""
        for n in node_ids:
            if n not in self._index:
                self._new_row(n)

    def _row_of(self, node_id) -> int:
        try:
            return self._index[node_id]
        except KeyError:
            raise KeyError(f"unknown node {node_id!r}") from None

    # -- per-event path -----------------------------------------------------
    def _edge_positions(self, values: Sequence) -> list[int]:
        if len(values) != self._n_edge:
            raise StructuralError(f"event has {len(values)} values, schema has {self._n_edge} edge features")
        out = []
        for (base, cuts, mapping, overflow, name), v in zip(self._edge_plan, values):
            if cuts is None:
                out.append(base + mapping.get(v if type(v) is str else str(v), overflow))
                continue
            try:
                x = float(v)
            except (TypeError, ValueError):
                raise DataError(f"value {v!r} is not numeric", field=name) from None
            if x != x:
                raise DataError("NaN cannot be binned", field=name)
            out.append(base + bisect_right(cuts, x))
        return out

    def _derived_positions(self, pos: list[int], dt, row: int, now: float, d_in, d_out) -> list[int]:
        # d_in / d_out are None when this event does not advance that counter
        plan = self._dt_plan
        if plan is not None:
            base, cuts, last = plan
            pos.append(base + (last if dt is None else bisect_right(cuts, dt)))
        plan = self._in_plan
        if plan is not None:
            if d_in is None:
                d_in = self._current_degree(self._in[row], self._t_in[row], now)
            pos.append(plan[0] + bisect_right(plan[1], d_in))
        plan = self._out_plan
        if plan is not None:
            if d_out is None:
                d_out = self._current_degree(self._out[row], self._t_out[row], now)
            pos.append(plan[0] + bisect_right(plan[1], d_out))
        return pos

    def _current_degree(self, d: float, last: float | None, now: float) -> float:
        if last is None:
            return 0.0
        return d * math.exp(-_elapsed(last, now) / self._tau_d)

    def process(self, event: EdgeEvent) -> None:
        """Apply one edge.  Hot path; returns nothing."""
        ts = event.timestamp
        if ts < self._clock - self.tolerance:
            raise TimeOrderError(
                f"event {self.events_processed} at t={ts} is older than t={self._clock} "
                f"beyond tolerance {self.tolerance}"
            )
        edge_pos = self._edge_positions(event.values)
        if ts > self._clock:
            self._clock = ts
        src = event.source_id
        dst = event.destination_id
        u = self._index.get(src)
        if u is None:
            u = self._new_row(src)
        tau = self._tau_d

        if src == dst:
            dt = _elapsed(self._t_any[u], ts)
            new_in = update_degree(self._in[u], _elapsed(self._t_in[u], ts), tau)
            new_out = update_degree(self._out[u], _elapsed(self._t_out[u], ts), tau)
            pos = self._derived_positions(list(edge_pos), dt, u, ts, new_in, new_out)
            self._mix_self(u, pos, self._alpha_at(dt), self._beta_at(dt))
            self._in[u] = new_in
            self._out[u] = new_out
            self._touch(u, ts, True, True)
            self.events_processed += 1
            return

        v = self._index.get(dst)
        if v is None:
            v = self._new_row(dst)
        dt_u = _elapsed(self._t_any[u], ts)
        dt_v = _elapsed(self._t_any[v], ts)
        out_u = update_degree(self._out[u], _elapsed(self._t_out[u], ts), tau)
        in_v = update_degree(self._in[v], _elapsed(self._t_in[v], ts), tau)
        pos_u = self._derived_positions(list(edge_pos), dt_u, u, ts, None, out_u)
        pos_v = self._derived_positions(edge_pos, dt_v, v, ts, in_v, None)
        self._mix_pair(
            u, v, pos_u, pos_v,
            self._alpha_at(dt_u), self._beta_at(dt_u),
            self._alpha_at(dt_v), self._beta_at(dt_v),
        )
        self._out[u] = out_u
        self._in[v] = in_v
        self._touch(u, ts, False, True)
        self._touch(v, ts, True, False)
        self.events_processed += 1

    def _touch(self, row: int, ts: float, incoming: bool, outgoing: bool) -> None:
        t = self._t_any[row]
        if t is None or ts > t:
            self._t_any[row] = ts
        if incoming:
            t = self._t_in[row]
            if t is None or ts > t:
                self._t_in[row] = ts
        if outgoing:
            t = self._t_out[row]
            if t is None or ts > t:
                self._t_out[row] = ts

    def run(self, events: Iterable[EdgeEvent]) -> int:
        n = 0
        for ev in events:
            self.process(ev)
            n += 1
        return n

    # -- scalar reads -------------------------------------------------------
    def degrees(self, node_id) -> tuple[float, float]:
        r = self._row_of(node_id)
        return self._in[r], self._out[r]

    def clocks(self, node_id) -> tuple[float | None, float | None, float | None]:
        r = self._row_of(node_id)
        return self._t_any[r], self._t_in[r], self._t_out[r]

    # -- persistence support --------------------------------------------------
    def _scalar_state(self) -> dict:
        def times(col):
            return np.array([np.nan if t is None else t for t in col], dtype=float)

        return {
            "ids": list(self._ids),
            "in_degree": np.array(self._in, dtype=float),
            "out_degree": np.array(self._out, dtype=float),
            "t_any": times(self._t_any),
            "t_in": times(self._t_in),
            "t_out": times(self._t_out),
            "clock": self._clock,
            "events_processed": self.events_processed,
        }

    def _load_scalar_state(self, d: Mapping) -> None:
        def times(arr):
            return [None if math.isnan(t) else float(t) for t in arr]

        ids = list(d["ids"])
        self._index = {n: i for i, n in enumerate(ids)}
        self._ids = ids
        self._in = [float(x) for x in d["in_degree"]]
        self._out = [float(x) for x in d["out_degree"]]
        self._t_any = times(d["t_any"])
        self._t_in = times(d["t_in"])
        self._t_out = times(d["t_out"])
        self._clock = float(d["clock"])
        self.events_processed = int(d["events_processed"])


class Engine(StreamCore):
    """Full-histogram engine.  One writer, events in time order.

    >>> from decaygraph.core import FeatureSchema, FeatureDef, BinningSpec, NumericalBins
    >>> schema = FeatureSchema((FeatureDef("f"),))
    >>> eng = Engine(schema, BinningSpec({"f": NumericalBins((0.5,))}),
    ...              DiscountConfig(Constant(0.5), Constant(0.0)))
    >>> eng.process(EdgeEvent("u", "v", 1.0, (0.0,)))
    >>> eng.vector("v").tolist()
    [0.75, 0.25]
    """

    def __init__(
        self,
        schema: FeatureSchema,
        binning: BinningSpec,
        discounts: DiscountConfig,
        *,
        tolerance: float = 0.0,
        backend: str = "auto",
        capacity: int = 1024,
    ):
        super().__init__(schema, binning, discounts, tolerance=tolerance, capacity=capacity)
        self._k = kernels.load(backend)
        self.backend = self._k.NAME
        width = self.layout.width
        self._H = np.empty((self._capacity, width))
        self._uniform = self.layout.uniform()
        self._du = np.zeros(width)
        self._dv = np.zeros(width)

    def _grow(self, capacity: int) -> None:
        H = np.empty((capacity, self._H.shape[1]))
        H[: len(self._ids)] = self._H[: len(self._ids)]
        self._H = H

    def _init_row(self, row: int) -> None:
        self._H[row] = self._uniform

    def _mix_pair(self, u, v, pos_u, pos_v, au, bu, av, bv) -> None:
        self._k.mix_pair(self._H, u, v, pos_u, pos_v, au, bu, av, bv, self._du, self._dv)

    def _mix_self(self, u, pos, a, b) -> None:
        self._k.mix_self(self._H, u, pos, a, b, self._du)

    def apply_edge(self, event: EdgeEvent) -> tuple[NodeState, NodeState]:
        """Apply ``event`` and return copies of both endpoint states."""
        self.process(event)
        return self.state(event.source_id), self.state(event.destination_id)

    # -- reads ----------------------------------------------------------------
    def vector(self, node_id) -> np.ndarray:
        """Copy of the node's concatenated histograms."""
        return self._H[self._row_of(node_id)].copy()

    def pair_vector(self, src, dst) -> np.ndarray:
        H = self._H
        return np.concatenate((H[self._row_of(src)], H[self._row_of(dst)]))

    def matrix(self) -> np.ndarray:
        """Copy of all node rows, in node-creation order."""
        return self._H[: len(self._ids)].copy()

    def state(self, node_id) -> NodeState:
        r = self._row_of(node_id)
        return NodeState(
            self.layout,
            self.layout.split(self._H[r].copy()),
            self._in[r],
            self._out[r],
            self._t_any[r],
            self._t_in[r],
            self._t_out[r],
        )

    def states(self) -> dict:
        return {n: self.state(n) for n in self._ids}

    def names(self, append_degrees: bool = False) -> tuple[str, ...]:
        return self.layout.names(append_degrees)

    def embedding(self, node_id, append_degrees: bool = False) -> Embedding:
        return self.state(node_id).embedding(append_degrees)

    def iter_embeddings(self, append_degrees: bool = False) -> Iterator[tuple[Hashable, np.ndarray]]:
        for r, n in enumerate(self._ids):
            row = self._H[r]
            if append_degrees:
                row = np.concatenate((row, (self._in[r], self._out[r])))
            yield n, row

    def export_state(self) -> dict:
        d = self._scalar_state()
        d["vectors"] = self.matrix()
        return d

    def load_state(self, d: Mapping) -> None:
        self._load_scalar_state(d)
        vectors = np.asarray(d["vectors"], dtype=float).reshape(len(self._ids), self.layout.width)
        self._capacity = max(len(self._ids), 1)
        self._H = np.empty((self._capacity, self.layout.width))
        self._H[: len(self._ids)] = vectors


def derived_feature_values(events: Iterable[EdgeEvent], degree_timescale: float) -> dict[str, list[float]]:
    """Replay only the counters and collect what each endpoint would bin.

    Used to fit bins for derived features on a training prefix.  Follows
    the engine's conventions: a node bins its own time gap, the counter
    this edge advances includes the edge, the other counter is decayed to
    the current time.  First-event time gaps are skipped.
    """
    tau = degree_timescale
    t_any: dict = {}
    t_in: dict = {}
    t_out: dict = {}
    d_in: dict = {}
    d_out: dict = {}
    out = {DERIVED_TIME_DELTA: [], DERIVED_IN_DEGREE: [], DERIVED_OUT_DEGREE: []}

    def gap(table, node, ts):
        return _elapsed(table.get(node), ts)

    def current(table, times, node, ts):
        last = times.get(node)
        if last is None:
            return 0.0
        return table[node] * math.exp(-_elapsed(last, ts) / tau)

    for ev in events:
        ts = ev.timestamp
        s, d = ev.source_id, ev.destination_id
        if s == d:
            dt = gap(t_any, s, ts)
            new_in = update_degree(d_in.get(s, 0.0), gap(t_in, s, ts), tau)
            new_out = update_degree(d_out.get(s, 0.0), gap(t_out, s, ts), tau)
            if dt is not None:
                out[DERIVED_TIME_DELTA].append(dt)
            out[DERIVED_IN_DEGREE].append(new_in)
            out[DERIVED_OUT_DEGREE].append(new_out)
            d_in[s], d_out[s] = new_in, new_out
            for table in (t_any, t_in, t_out):
                table[s] = max(ts, table.get(s, ts))
            continue
        dt_s, dt_d = gap(t_any, s, ts), gap(t_any, d, ts)
        out_s = update_degree(d_out.get(s, 0.0), gap(t_out, s, ts), tau)
        in_d = update_degree(d_in.get(d, 0.0), gap(t_in, d, ts), tau)
        for dt in (dt_s, dt_d):
            if dt is not None:
                out[DERIVED_TIME_DELTA].append(dt)
        out[DERIVED_IN_DEGREE] += [current(d_in, t_in, s, ts), in_d]
        out[DERIVED_OUT_DEGREE] += [out_s, current(d_out, t_out, d, ts)]
        d_out[s], d_in[d] = out_s, in_d
        for table, node in ((t_any, s), (t_out, s), (t_any, d), (t_in, d)):
            table[node] = max(ts, table.get(node, ts))
    return out
