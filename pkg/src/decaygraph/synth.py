"""Synthetic schemas and edge streams for tests, verification and benchmarks."""

from __future__ import annotations

import numpy as np

from decaygraph.core import (
    CATEGORICAL,
    DERIVED_IN_DEGREE,
    DERIVED_OUT_DEGREE,
    DERIVED_TIME_DELTA,
    EdgeEvent,
    FeatureDef,
    FeatureSchema,
)


def make_schema(n_numerical: int = 2, n_categorical: int = 1, derived: bool = True) -> FeatureSchema:
    feats = [FeatureDef(f"x{i}") for i in range(n_numerical)]
    feats += [FeatureDef(f"c{i}", CATEGORICAL) for i in range(n_categorical)]
    if derived:
        feats += [
            FeatureDef("in_deg", source=DERIVED_IN_DEGREE),
            FeatureDef("out_deg", source=DERIVED_OUT_DEGREE),
            FeatureDef("dt", source=DERIVED_TIME_DELTA),
        ]
    return FeatureSchema(tuple(feats))


def random_stream(
    n_events: int,
    n_nodes: int,
    schema: FeatureSchema,
    seed: int = 42,
    *,
    mean_gap: float = 1.0,
    burst: float = 0.1,
    self_loops: float = 0.01,
    n_tokens: int = 12,
) -> list[EdgeEvent]:
    """Uniformly random endpoints, exponential time gaps with some ties."""
    rng = np.random.default_rng(seed)
    src = rng.integers(0, n_nodes, n_events)
    dst = rng.integers(0, n_nodes, n_events)
    loops = rng.random(n_events) < self_loops
    dst = np.where(loops, src, dst)
    gaps = rng.exponential(mean_gap, n_events)
    gaps[rng.random(n_events) < burst] = 0.0
    ts = np.cumsum(gaps)
    edge = schema.edge_features
    cols = []
    for f in edge:
        if f.kind == CATEGORICAL:
            # skewed token frequencies so some tokens overflow
            p = 1.0 / np.arange(1, n_tokens + 1)
            toks = rng.choice(n_tokens, n_events, p=p / p.sum())
            cols.append([f"t{t}" for t in toks])
        else:
            cols.append(rng.lognormal(0.0, 1.0, n_events).tolist())
    rows = list(zip(*cols)) if cols else [()] * n_events
    return [
        EdgeEvent(int(s), int(d), float(t), tuple(vals))
        for s, d, t, vals in zip(src.tolist(), dst.tolist(), ts.tolist(), rows)
    ]


def chain_stream(length: int, schema: FeatureSchema, seed: int = 0, start: float = 1.0) -> list[EdgeEvent]:
    """Events ``n_i -> n_{i+1}`` at strictly increasing times."""
    return [
        EdgeEvent(f"n{i}", f"n{i + 1}", start + i, ev.values)
        for i, ev in enumerate(random_stream(length, 2, schema, seed))
    ]
