"""Domain types shared across the package.

Everything here is a plain value: frozen dataclasses or small containers
that are safe to copy between threads.  The mutable per-node storage used
while streaming lives in :mod:`decaygraph.engine`; :class:`NodeState` is
the detached copy handed out to callers.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any, Hashable, Mapping

import numpy as np

from decaygraph.errors import ConfigError, DataError, StructuralError

NUMERICAL = "numerical"
CATEGORICAL = "categorical"
KINDS = (NUMERICAL, CATEGORICAL)

EDGE = "edge"
DERIVED_IN_DEGREE = "derived_in_degree"
DERIVED_OUT_DEGREE = "derived_out_degree"
DERIVED_TIME_DELTA = "derived_time_delta"
SOURCES = (EDGE, DERIVED_IN_DEGREE, DERIVED_OUT_DEGREE, DERIVED_TIME_DELTA)
DERIVED_SOURCES = SOURCES[1:]


def stable_hash(obj: Any) -> str:
    """sha256 of the canonical JSON rendering of ``obj``."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True, slots=True)
class EdgeEvent:
    """One timestamped interaction ``source_id -> destination_id``.

    ``values`` line up with the edge features of the schema.  Integer
    timestamps are stored as floats.  ``extras`` carries pass-through
    columns (labels and the like) that the engine never looks at.
    """

    source_id: Hashable
    destination_id: Hashable
    timestamp: float
    values: tuple = ()
    extras: tuple = ()

    def __post_init__(self):
        try:
            ts = float(self.timestamp)
        except (TypeError, ValueError):
            raise DataError(f"timestamp {self.timestamp!r} is not a number", field="timestamp")
        if not math.isfinite(ts) or ts < 0:
            raise DataError(f"timestamp must be finite and >= 0, got {ts}", field="timestamp")
        object.__setattr__(self, "timestamp", ts)
        if not isinstance(self.values, tuple):
            object.__setattr__(self, "values", tuple(self.values))


@dataclass(frozen=True)
class FeatureDef:
    name: str
    kind: str = NUMERICAL
    source: str = EDGE

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if self.source not in SOURCES:
            raise ConfigError(f"feature {self.name!r}: unknown source {self.source!r}")
        if self.source != EDGE and self.kind != NUMERICAL:
            raise ConfigError(f"derived feature {self.name!r} must be numerical")


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered list of tracked features."""

    features: tuple[FeatureDef, ...]

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate feature names in {names}")
        for src in DERIVED_SOURCES:
            if sum(f.source == src for f in self.features) > 1:
                raise ConfigError(f"more than one feature with source {src!r}")

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    @property
    def edge_features(self) -> list[FeatureDef]:
        return [f for f in self.features if f.source == EDGE]

    def derived(self, source: str) -> FeatureDef | None:
        for f in self.features:
            if f.source == source:
                return f
        return None

    def to_dict(self) -> dict:
        return {"features": [{"name": f.name, "kind": f.kind, "source": f.source} for f in self.features]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "FeatureSchema":
        try:
            feats = [FeatureDef(**f) for f in d["features"]]
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed schema: {exc}") from None
        return cls(tuple(feats))

    def digest(self) -> str:
        return stable_hash(self.to_dict())


# -- binning entries -------------------------------------------------------


@dataclass(frozen=True)
class NumericalBins:
    """Cut points ``c_0 < c_1 < ...``; ``len(cuts) + 1`` right-open bins."""

    cuts: tuple[float, ...] = ()

    def __post_init__(self):
        cuts = tuple(float(c) for c in self.cuts)
        if not all(math.isfinite(c) for c in cuts):
            raise ConfigError(f"cut points must be finite: {cuts}")
        if any(b <= a for a, b in zip(cuts, cuts[1:])):
            raise ConfigError(f"cut points must be strictly increasing: {cuts}")
        object.__setattr__(self, "cuts", cuts)

    @property
    def size(self) -> int:
        return len(self.cuts) + 1

    def to_dict(self) -> dict:
        return {"type": NUMERICAL, "cuts": list(self.cuts)}


@dataclass(frozen=True)
class CategoricalBins:
    """Token -> bin map.  The last bin (``size - 1``) catches everything else."""

    mapping: Mapping[str, int] = field(default_factory=dict)
    size: int = 1

    def __post_init__(self):
        mapping = {str(k): int(v) for k, v in dict(self.mapping).items()}
        if self.size < 1:
            raise ConfigError("categorical bins need size >= 1")
        if any(not 0 <= v < self.size - 1 for v in mapping.values()):
            raise ConfigError(f"category bin index out of range for size {self.size}")
        object.__setattr__(self, "mapping", mapping)

    @property
    def overflow(self) -> int:
        return self.size - 1

    def to_dict(self) -> dict:
        return {"type": CATEGORICAL, "mapping": dict(self.mapping), "size": self.size}


BinEntry = NumericalBins | CategoricalBins


def bin_entry_from_dict(d: Mapping) -> BinEntry:
    kind = d.get("type")
    if kind == NUMERICAL:
        return NumericalBins(tuple(d.get("cuts", ())))
    if kind == CATEGORICAL:
        return CategoricalBins(d.get("mapping", {}), int(d.get("size", 1)))
    raise ConfigError(f"unknown bin entry type {kind!r}")


@dataclass(frozen=True)
class BinningSpec:
    """Fitted bins for every feature of a schema, keyed by feature name."""

    entries: Mapping[str, BinEntry]

    def __getitem__(self, name: str) -> BinEntry:
        return self.entries[name]

    def sizes(self, schema: FeatureSchema) -> list[int]:
        return [self.entries[f.name].size for f in schema.features]

    def check(self, schema: FeatureSchema) -> None:
        for f in schema.features:
            entry = self.entries.get(f.name)
            if entry is None:
                raise ConfigError(f"no bins fitted for feature {f.name!r}")
            want = NumericalBins if f.kind == NUMERICAL else CategoricalBins
            if not isinstance(entry, want):
                raise ConfigError(f"feature {f.name!r} is {f.kind} but its bins are not")

    def to_dict(self) -> dict:
        return {name: e.to_dict() for name, e in self.entries.items()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "BinningSpec":
        return cls({name: bin_entry_from_dict(e) for name, e in d.items()})

    def digest(self) -> str:
        return stable_hash(self.to_dict())


# -- discounting -------------------------------------------------------------


@dataclass(frozen=True)
class Constant:
    """Discount that ignores elapsed time."""

    value: float

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ConfigError(f"constant discount must lie in [0, 1], got {self.value}")

    def to_dict(self) -> dict:
        return {"mode": "constant", "value": self.value}


@dataclass(frozen=True)
class ExpDecay:
    """Discount ``exp(-dt / tau)``; a node's first event gives 0."""

    tau: float

    def __post_init__(self):
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ConfigError(f"timescale must be positive, got {self.tau}")

    def to_dict(self) -> dict:
        return {"mode": "exp_time_decay", "tau": self.tau}


DiscountMode = Constant | ExpDecay


def mode_from_dict(d: Mapping | float) -> DiscountMode:
    if isinstance(d, (int, float)):
        return Constant(float(d))
    mode = d.get("mode")
    if mode == "constant":
        return Constant(float(d["value"]))
    if mode == "exp_time_decay":
        return ExpDecay(float(d["tau"]))
    raise ConfigError(f"unknown discount mode {mode!r}")


@dataclass(frozen=True)
class DiscountConfig:
    """Hop discount ``alpha``, mixing weight ``beta`` and degree timescale."""

    alpha: DiscountMode = Constant(0.5)
    beta: DiscountMode = Constant(0.5)
    degree_timescale: float = 86400.0

    def __post_init__(self):
        if not (self.degree_timescale > 0 and math.isfinite(self.degree_timescale)):
            raise ConfigError(f"degree timescale must be positive, got {self.degree_timescale}")

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha.to_dict(),
            "beta": self.beta.to_dict(),
            "degree_timescale": self.degree_timescale,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "DiscountConfig":
        return cls(
            alpha=mode_from_dict(d.get("alpha", 0.5)),
            beta=mode_from_dict(d.get("beta", 0.5)),
            degree_timescale=float(d.get("degree_timescale", 86400.0)),
        )


# -- layout, state and embeddings -------------------------------------------


@dataclass(frozen=True)
class Layout:
    """Where each feature's histogram sits inside a flat node vector."""

    features: tuple[str, ...]
    sizes: tuple[int, ...]

    @classmethod
    def build(cls, schema: FeatureSchema, binning: BinningSpec) -> "Layout":
        binning.check(schema)
        return cls(tuple(schema.names), tuple(binning.sizes(schema)))

    @property
    def offsets(self) -> tuple[int, ...]:
        out, acc = [], 0
        for s in self.sizes:
            out.append(acc)
            acc += s
        return tuple(out)

    @property
    def width(self) -> int:
        return sum(self.sizes)

    def names(self, append_degrees: bool = False) -> tuple[str, ...]:
        cols = [f"{f}:bin_{j}" for f, n in zip(self.features, self.sizes) for j in range(n)]
        if append_degrees:
            cols += ["in_degree", "out_degree"]
        return tuple(cols)

    def uniform(self) -> np.ndarray:
        return np.concatenate([np.full(n, 1.0 / n) for n in self.sizes]) if self.sizes else np.zeros(0)

    def split(self, flat: np.ndarray) -> tuple[np.ndarray, ...]:
        return tuple(flat[o:o + n] for o, n in zip(self.offsets, self.sizes))


@dataclass(frozen=True)
class Embedding:
    values: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self):
        if len(self.values) != len(self.names):
            raise StructuralError(f"{len(self.values)} values but {len(self.names)} names")

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class NodeState:
    """Detached copy of one node's histograms, degree counters and clocks."""

    layout: Layout
    histograms: tuple[np.ndarray, ...]
    in_degree: float = 0.0
    out_degree: float = 0.0
    last_any_event_time: float | None = None
    last_in_event_time: float | None = None
    last_out_event_time: float | None = None

    def flat(self) -> np.ndarray:
        if not self.histograms:
            return np.zeros(0)
        return np.concatenate(self.histograms)

    def embedding(self, append_degrees: bool = False) -> Embedding:
        values = self.flat()
        if append_degrees:
            values = np.concatenate([values, [self.in_degree, self.out_degree]])
        return Embedding(values, self.layout.names(append_degrees))


def node_embedding(state: NodeState, append_degrees: bool = False) -> Embedding:
    """Flatten ``state`` into the layout order; never mutates it."""
    return state.embedding(append_degrees)


def pair_embedding(u_state: NodeState, v_state: NodeState, append_degrees: bool = False) -> Embedding:
    """Source embedding followed by destination embedding."""
    if u_state.layout != v_state.layout:
        raise StructuralError("cannot pair node states built from different layouts")
    u = u_state.embedding(append_degrees)
    v = v_state.embedding(append_degrees)
    names = tuple(f"src:{n}" for n in u.names) + tuple(f"dst:{n}" for n in v.names)
    return Embedding(np.concatenate([u.values, v.values]), names)

