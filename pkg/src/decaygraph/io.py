"""Edge-stream files, embedding export, run configuration and snapshots.

Streams are delimited text with a header (first three columns: source,
destination, timestamp; feature columns found by name) or line-delimited
JSON records with the same field names.  Snapshots are ``.npz`` archives
whose manifest pins the schema, bins and discount settings by hash.
"""

from __future__ import annotations

import csv
import json
import math
import queue
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, Sequence

import numpy as np

from decaygraph.core import (
    CATEGORICAL,
    BinningSpec,
    DiscountConfig,
    EdgeEvent,
    FeatureSchema,
    stable_hash,
)
from decaygraph.errors import ConfigError, DataError, SnapshotError, TimeOrderError

SNAPSHOT_VERSION = 1
BINNING_VERSION = 1

SOURCE_KEYS = ("source_id", "src", "source", "u")
DESTINATION_KEYS = ("destination_id", "dst", "destination", "i", "v")
TIME_KEYS = ("timestamp", "ts", "time", "t")

EMIT_MODES = ("final", "per-event")


@dataclass(frozen=True)
class SketchSettings:
    enabled: bool = False
    k: int = 16
    seed: int = 42

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"sketch k must be >= 1, got {self.k}")


@dataclass(frozen=True)
class RunConfig:
    schema: FeatureSchema
    discounts: DiscountConfig = field(default_factory=DiscountConfig)
    binning: BinningSpec | None = None
    sketch: SketchSettings = field(default_factory=SketchSettings)
    tolerance: float = 0.0
    append_degrees: bool = False
    emit: str = "final"
    pair_embeddings: bool = False

    def __post_init__(self):
        if self.emit not in EMIT_MODES:
            raise ConfigError(f"emit must be one of {EMIT_MODES}, got {self.emit!r}")
        if not (self.tolerance >= 0 and math.isfinite(self.tolerance)):
            raise ConfigError(f"tolerance must be finite and >= 0, got {self.tolerance}")
        if self.binning is not None:
            self.binning.check(self.schema)
            extra = set(self.binning.entries) - set(self.schema.names)
            if extra:
                raise ConfigError(f"bins for features not in the schema: {sorted(extra)}")

    def digest(self) -> str:
        """Hash of every setting that changes node state."""
        return stable_hash({
            "discounts": self.discounts.to_dict(),
            "tolerance": self.tolerance,
            "sketch": {"enabled": self.sketch.enabled, "k": self.sketch.k, "seed": self.sketch.seed},
        })

    def to_dict(self) -> dict:
        return {
            "schema": self.schema.to_dict(),
            "discounts": self.discounts.to_dict(),
            "binning": None if self.binning is None else self.binning.to_dict(),
            "sketch": {"enabled": self.sketch.enabled, "k": self.sketch.k, "seed": self.sketch.seed},
            "tolerance": self.tolerance,
            "embedding": {
                "append_degrees": self.append_degrees,
                "emit": self.emit,
                "pair_embeddings": self.pair_embeddings,
            },
        }

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "RunConfig":
        if "schema" not in d:
            raise ConfigError("config has no 'schema' section")
        schema = FeatureSchema.from_dict(d["schema"])
        binning = d.get("binning")
        if isinstance(binning, str):
            path = Path(binning)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            binning = load_binning(path)
        elif binning is not None:
            binning = BinningSpec.from_dict(binning)
        emb = d.get("embedding", {})
        sk = d.get("sketch", {})
        return cls(
            schema=schema,
            discounts=DiscountConfig.from_dict(d.get("discounts", {})),
            binning=binning,
            sketch=SketchSettings(bool(sk.get("enabled", False)), int(sk.get("k", 16)), int(sk.get("seed", 42))),
            tolerance=float(d.get("tolerance", 0.0)),
            append_degrees=bool(emb.get("append_degrees", False)),
            emit=emb.get("emit", "final"),
            pair_embeddings=bool(emb.get("pair_embeddings", False)),
        )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return RunConfig.from_dict(data, base_dir=path.parent)


def save_config(path, config: RunConfig) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2) + "\n")


def load_binning(path) -> BinningSpec:
    data = json.loads(Path(path).read_text())
    if data.get("format") != BINNING_VERSION:
        raise ConfigError(f"{path}: unsupported binning format {data.get('format')!r}")
    return BinningSpec.from_dict(data["bins"])


def save_binning(path, binning: BinningSpec) -> None:
    Path(path).write_text(json.dumps({"format": BINNING_VERSION, "bins": binning.to_dict()}, indent=2) + "\n")


# -- edge streams -----------------------------------------------------------


def _pick(keys: Sequence[str], names: Sequence[str]):
    for k in keys:
        if k in names:
            return k
    return None


class _Ordering:
    def __init__(self, path, tolerance: float):
        self.path = path
        self.tolerance = tolerance
        self.latest = -math.inf

    def check(self, ts: float, line: int) -> None:
        if ts < self.latest - self.tolerance:
            raise TimeOrderError(
                f"timestamp {ts} is earlier than {self.latest} beyond tolerance {self.tolerance}",
                path=self.path, line=line, field="timestamp",
            )
        self.latest = max(self.latest, ts)


def _parse_value(raw, kind: str, path, line, name):
    if kind == CATEGORICAL:
        if raw is None or raw == "":
            raise DataError("missing value", path=path, line=line, field=name)
        return str(raw)
    try:
        x = float(raw)
    except (TypeError, ValueError):
        raise DataError(f"cannot parse {raw!r} as a number", path=path, line=line, field=name) from None
    if not math.isfinite(x):
        raise DataError(f"non-finite value {raw!r}", path=path, line=line, field=name)
    return x


def _parse_time(raw, path, line) -> float:
    try:
        ts = float(raw)
    except (TypeError, ValueError):
        raise DataError(f"cannot parse {raw!r} as a timestamp", path=path, line=line, field="timestamp") from None
    if not math.isfinite(ts) or ts < 0:
        raise DataError(f"timestamp must be finite and >= 0, got {raw!r}", path=path, line=line, field="timestamp")
    return ts


def read_edge_stream(
    path,
    schema: FeatureSchema,
    *,
    tolerance: float = 0.0,
    fmt: str | None = None,
    passthrough: Sequence[str] = (),
) -> Iterator[EdgeEvent]:
    """Yield events in file order, validating as it goes.

    ``fmt`` is ``"csv"`` or ``"jsonl"``; by default it is guessed from the
    suffix.  ``passthrough`` columns are copied into ``EdgeEvent.extras``.
    """
    path = Path(path)
    if fmt is None:
        fmt = "jsonl" if path.suffix in (".jsonl", ".ndjson") else "csv"
    if fmt == "csv":
        yield from _read_csv(path, schema, tolerance, passthrough)
    elif fmt == "jsonl":
        yield from _read_jsonl(path, schema, tolerance, passthrough)
    else:
        raise ValueError(f"unknown stream format {fmt!r}")


def _read_csv(path, schema, tolerance, passthrough):
    feats = schema.edge_features
    order = _Ordering(path, tolerance)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            return
        header = [h.strip() for h in header]
        if len(header) < 3:
            raise DataError("header needs source, destination and timestamp columns", path=path, line=1)
        cols = {}
        for f in feats:
            if f.name not in header:
                raise DataError("missing column", path=path, line=1, field=f.name)
            cols[f.name] = header.index(f.name)
        extra_idx = []
        for name in passthrough:
            if name not in header:
                raise DataError("missing pass-through column", path=path, line=1, field=name)
            extra_idx.append(header.index(name))
        width = len(header)
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != width:
                raise DataError(f"expected {width} fields, found {len(row)}", path=path, line=line)
            ts = _parse_time(row[2], path, line)
            order.check(ts, line)
            values = tuple(_parse_value(row[cols[f.name]], f.kind, path, line, f.name) for f in feats)
            yield EdgeEvent(row[0], row[1], ts, values, tuple(row[i] for i in extra_idx))


def _read_jsonl(path, schema, tolerance, passthrough):
    feats = schema.edge_features
    order = _Ordering(path, tolerance)
    with open(path) as fh:
        for line, text in enumerate(fh, start=1):
            if not text.strip():
                continue
            try:
                rec = json.loads(text)
            except json.JSONDecodeError as exc:
                raise DataError(f"invalid JSON ({exc.msg})", path=path, line=line) from None
            if not isinstance(rec, dict):
                raise DataError("record is not an object", path=path, line=line)
            keys = {}
            for role, options in (("source", SOURCE_KEYS), ("destination", DESTINATION_KEYS), ("timestamp", TIME_KEYS)):
                k = _pick(options, rec)
                if k is None:
                    raise DataError("missing field", path=path, line=line, field=role)
                keys[role] = k
            ts = _parse_time(rec[keys["timestamp"]], path, line)
            order.check(ts, line)
            values = []
            for f in feats:
                if f.name not in rec:
                    raise DataError("missing field", path=path, line=line, field=f.name)
                values.append(_parse_value(rec[f.name], f.kind, path, line, f.name))
            extras = []
            for name in passthrough:
                if name not in rec:
                    raise DataError("missing pass-through field", path=path, line=line, field=name)
                extras.append(str(rec[name]))
            yield EdgeEvent(str(rec[keys["source"]]), str(rec[keys["destination"]]), ts, tuple(values), tuple(extras))


def write_edge_stream(path, events: Iterable[EdgeEvent], schema: FeatureSchema, fmt: str | None = None) -> int:
    """Inverse of :func:`read_edge_stream` (pass-through columns are not written)."""
    path = Path(path)
    if fmt is None:
        fmt = "jsonl" if path.suffix in (".jsonl", ".ndjson") else "csv"
    names = [f.name for f in schema.edge_features]
    n = 0
    with open(path, "w", newline="") as fh:
        if fmt == "csv":
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["source_id", "destination_id", "timestamp", *names])
            for ev in events:
                w.writerow([ev.source_id, ev.destination_id, repr(ev.timestamp), *(
                    repr(v) if isinstance(v, float) else v for v in ev.values
                )])
                n += 1
        else:
            for ev in events:
                rec = {"source_id": str(ev.source_id), "destination_id": str(ev.destination_id),
                       "timestamp": ev.timestamp, **dict(zip(names, ev.values))}
                fh.write(json.dumps(rec) + "\n")
                n += 1
    return n


def prefetch(events: Iterable, maxsize: int = 4096) -> Iterator:
    """Read ``events`` on a background thread through an ordered bounded queue."""
    q: queue.Queue = queue.Queue(maxsize)
    done = object()
    failure = []

    def pump():
        try:
            for ev in events:
                q.put(ev)
        except BaseException as exc:  # re-raised on the consumer side
            failure.append(exc)
        finally:
            q.put(done)

    t = threading.Thread(target=pump, daemon=True)
    t.start()
    while True:
        item = q.get()
        if item is done:
            break
        yield item
    t.join()
    if failure:
        raise failure[0]


# -- embeddings ---------------------------------------------------------------


def format_value(x: float) -> str:
    return format(float(x), ".9g")


def write_embeddings(sink: IO[str], records: Iterable[tuple[Sequence, Sequence[float]]],
                     names: Sequence[str], id_columns: Sequence[str]) -> int:
    """Write ``(ids, values)`` records as CSV; returns the number of rows."""
    w = csv.writer(sink, lineterminator="\n")
    w.writerow([*id_columns, *names])
    width = len(names)
    n = 0
    for ids, values in records:
        if len(values) != width:
            raise ValueError(f"record has {len(values)} values, layout has {width}")
        w.writerow([*ids, *(format_value(x) for x in values)])
        n += 1
    return n


# -- snapshots ------------------------------------------------------------------


def _kind(store) -> str:
    return "sketch" if hasattr(store, "planes") else "histogram"


def snapshot(store, path, config: RunConfig) -> dict:
    """Write ``store`` (an Engine or SketchEngine) to ``path`` and return the manifest.

    Only call between events.
    """
    if (store.schema, store.binning, store.discounts, store.tolerance) != (
        config.schema, config.binning, config.discounts, config.tolerance,
    ):
        raise SnapshotError("store was not built from this config")
    if _kind(store) == "sketch" and (store.planes.seed, store.planes.k) != (config.sketch.seed, config.sketch.k):
        raise SnapshotError("sketch planes do not match the config's sketch settings")
    state = store.export_state()
    manifest = {
        "format_version": SNAPSHOT_VERSION,
        "kind": _kind(store),
        "schema_hash": config.schema.digest(),
        "binning_hash": config.binning.digest(),
        "config_hash": config.digest(),
        "sketch_seed": config.sketch.seed if config.sketch.enabled else None,
        "sketch_k": config.sketch.k if config.sketch.enabled else None,
        "nodes": len(state["ids"]),
        "events_processed": state["events_processed"],
    }
    with open(path, "wb") as fh:
        np.savez(
            fh,
            manifest=np.array(json.dumps(manifest, sort_keys=True)),
            ids=np.array(json.dumps(state["ids"])),
            vectors=state["vectors"],
            in_degree=state["in_degree"],
            out_degree=state["out_degree"],
            t_any=state["t_any"],
            t_in=state["t_in"],
            t_out=state["t_out"],
            clock=np.array(state["clock"]),
        )
    return manifest


def read_manifest(path) -> dict:
    with np.load(path, allow_pickle=False) as z:
        return json.loads(str(z["manifest"]))


def restore(path, config: RunConfig, *, backend: str = "auto"):
    """Rebuild the store saved at ``path``; refuses on any hash or version mismatch."""
    from decaygraph.engine import Engine
    from decaygraph.sketch import SketchEngine, init_planes

    if config.binning is None:
        raise SnapshotError("config has no bins; cannot restore")
    try:
        z = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise SnapshotError(f"{path}: unreadable snapshot ({exc})") from None
    with z:
        manifest = json.loads(str(z["manifest"]))
        if manifest.get("format_version") != SNAPSHOT_VERSION:
            raise SnapshotError(
                f"{path}: snapshot format {manifest.get('format_version')!r}, this build reads {SNAPSHOT_VERSION}"
            )
        expected = {
            "schema_hash": config.schema.digest(),
            "binning_hash": config.binning.digest(),
            "config_hash": config.digest(),
        }
        for key, want in expected.items():
            if manifest.get(key) != want:
                raise SnapshotError(
                    f"{path}: {key} mismatch (snapshot {str(manifest.get(key))[:12]}, "
                    f"config {want[:12]}); refusing to resume under a different setup"
                )
        want_kind = "sketch" if config.sketch.enabled else "histogram"
        if manifest.get("kind") != want_kind:
            raise SnapshotError(f"{path}: snapshot holds a {manifest.get('kind')} store, config wants {want_kind}")
        state = {
            "ids": json.loads(str(z["ids"])),
            "vectors": z["vectors"],
            "in_degree": z["in_degree"],
            "out_degree": z["out_degree"],
            "t_any": z["t_any"],
            "t_in": z["t_in"],
            "t_out": z["t_out"],
            "clock": float(z["clock"]),
            "events_processed": manifest["events_processed"],
        }
    if config.sketch.enabled:
        planes = init_planes(config.sketch.k, _layout_width(config), config.sketch.seed)
        store = SketchEngine(config.schema, config.binning, config.discounts, planes,
                             tolerance=config.tolerance, backend=backend)
    else:
        store = Engine(config.schema, config.binning, config.discounts,
                       tolerance=config.tolerance, backend=backend)
    store.load_state(state)
    return store


def _layout_width(config: RunConfig) -> int:
    return sum(config.binning.sizes(config.schema))
