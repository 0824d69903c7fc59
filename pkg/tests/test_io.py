import io
import json
import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from decaygraph import synth
from decaygraph.core import (
    CATEGORICAL,
    BinningSpec,
    CategoricalBins,
    Constant,
    DiscountConfig,
    EdgeEvent,
    ExpDecay,
    FeatureDef,
    FeatureSchema,
    NumericalBins,
)
from decaygraph.engine import Engine
from decaygraph.errors import ConfigError, DataError, SnapshotError, TimeOrderError
from decaygraph.io import (
    RunConfig,
    SketchSettings,
    load_binning,
    load_config,
    prefetch,
    read_edge_stream,
    read_manifest,
    restore,
    save_binning,
    save_config,
    snapshot,
    write_edge_stream,
    write_embeddings,
)
from decaygraph.sketch import SketchEngine, init_planes

F1 = FeatureSchema((FeatureDef("f1"),))


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestReadStream:
    def test_csv_row(self, tmp_path):
        p = write(tmp_path, "s.csv", "src,dst,ts,f1\na,b,10.0,0.3\n")
        assert list(read_edge_stream(p, F1)) == [EdgeEvent("a", "b", 10.0, (0.3,))]

    def test_jsonl_row(self, tmp_path):
        p = write(tmp_path, "s.jsonl", '{"src": "a", "dst": "b", "ts": 10, "f1": 0.3}\n\n')
        assert list(read_edge_stream(p, F1)) == [EdgeEvent("a", "b", 10.0, (0.3,))]

    def test_feature_columns_by_name(self, tmp_path):
        schema = FeatureSchema((FeatureDef("x"), FeatureDef("c", CATEGORICAL)))
        p = write(tmp_path, "s.csv", "s,d,t,c,x,label\na,b,1,red,2.5,1\n")
        (ev,) = read_edge_stream(p, schema, passthrough=["label"])
        assert ev.values == (2.5, "red") and ev.extras == ("1",)

    def test_nan_timestamp(self, tmp_path):
        p = write(tmp_path, "s.csv", "src,dst,ts,f1\na,b,1,0.3\na,b,NaN,0.3\n")
        with pytest.raises(DataError) as exc:
            list(read_edge_stream(p, F1))
        msg = str(exc.value)
        assert "s.csv" in msg and "line 3" in msg and "timestamp" in msg

    def test_regression(self, tmp_path):
        p = write(tmp_path, "s.csv", "src,dst,ts,f1\na,b,10,0.3\na,b,9,0.3\n")
        with pytest.raises(TimeOrderError, match="line 3"):
            list(read_edge_stream(p, F1))
        assert len(list(read_edge_stream(p, F1, tolerance=1.0))) == 2

    def test_missing_column(self, tmp_path):
        p = write(tmp_path, "s.csv", "src,dst,ts,g\na,b,1,0.3\n")
        with pytest.raises(DataError, match="'f1'"):
            list(read_edge_stream(p, F1))

    def test_bad_value(self, tmp_path):
        p = write(tmp_path, "s.csv", "src,dst,ts,f1\na,b,1,abc\n")
        with pytest.raises(DataError, match="line 2, field 'f1'"):
            list(read_edge_stream(p, F1))

    def test_infinite_value(self, tmp_path):
        p = write(tmp_path, "s.jsonl", '{"src": "a", "dst": "b", "ts": 1, "f1": "inf"}\n')
        with pytest.raises(DataError, match="non-finite"):
            list(read_edge_stream(p, F1))

    def test_ragged_row(self, tmp_path):
        p = write(tmp_path, "s.csv", "src,dst,ts,f1\na,b,1\n")
        with pytest.raises(DataError, match="line 2"):
            list(read_edge_stream(p, F1))

    def test_bad_json(self, tmp_path):
        p = write(tmp_path, "s.jsonl", '{"src": "a"\n')
        with pytest.raises(DataError, match="line 1"):
            list(read_edge_stream(p, F1))


@settings(max_examples=20, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.integers(0, 10_000), st.sampled_from(["csv", "jsonl"]))
def test_round_trip(tmp_path, seed, fmt):
    schema = synth.make_schema(2, 1, derived=True)
    p = tmp_path / f"s.{fmt}"
    write_edge_stream(p, synth.random_stream(50, 10, schema, seed), schema)
    first = list(read_edge_stream(p, schema))
    q = tmp_path / f"t.{fmt}"
    write_edge_stream(q, first, schema)
    assert list(read_edge_stream(q, schema)) == first


def test_prefetch_preserves_order():
    assert list(prefetch(iter(range(10_000)), maxsize=8)) == list(range(10_000))


def test_prefetch_propagates_errors():
    def gen():
        yield 1
        raise DataError("boom")

    with pytest.raises(DataError, match="boom"):
        list(prefetch(gen()))


class TestWriteEmbeddings:
    def test_node_rows(self):
        sink = io.StringIO()
        n = write_embeddings(sink, [(("u",), [0.75, 0.25])], ["f:bin_0", "f:bin_1"], ["node_id"])
        assert n == 1
        assert sink.getvalue().splitlines() == ["node_id,f:bin_0,f:bin_1", "u,0.75,0.25"]

    def test_nine_significant_digits(self):
        sink = io.StringIO()
        write_embeddings(sink, [(("u",), [1 / 3])], ["x"], ["node_id"])
        assert sink.getvalue().splitlines()[1] == "u,0.333333333"

    def test_empty(self):
        sink = io.StringIO()
        assert write_embeddings(sink, [], ["a"], ["node_id"]) == 0
        assert sink.getvalue() == "node_id,a\n"

    def test_width_mismatch(self):
        with pytest.raises(ValueError):
            write_embeddings(io.StringIO(), [(("u",), [1.0])], ["a", "b"], ["node_id"])


class TestConfig:
    def test_round_trip_with_bins_file(self, tmp_path):
        schema = FeatureSchema((FeatureDef("x"), FeatureDef("c", CATEGORICAL)))
        bins = BinningSpec({"x": NumericalBins((0.0,)), "c": CategoricalBins({"a": 0}, 2)})
        save_binning(tmp_path / "bins.json", bins)
        cfg = RunConfig(schema, DiscountConfig(ExpDecay(2.0), Constant(0.1), 9.0))
        raw = cfg.to_dict()
        raw["binning"] = "bins.json"
        (tmp_path / "cfg.json").write_text(json.dumps(raw))
        loaded = load_config(tmp_path / "cfg.json")
        assert loaded.binning == bins and loaded.discounts == cfg.discounts
        save_config(tmp_path / "again.json", loaded)
        assert load_config(tmp_path / "again.json") == loaded
        assert load_binning(tmp_path / "bins.json") == bins

    def test_unknown_feature_in_bins(self):
        with pytest.raises(ConfigError):
            RunConfig(F1, binning=BinningSpec({"f1": NumericalBins(()), "zzz": NumericalBins(())}))

    def test_bad_emit(self):
        with pytest.raises(ConfigError):
            RunConfig(F1, emit="sometimes")


def _config(mixed_setup, sketch=False):
    schema, binning, discounts, _ = mixed_setup
    return RunConfig(schema, discounts, binning, SketchSettings(sketch, 8, 5))


def _store(config):
    if config.sketch.enabled:
        planes = init_planes(config.sketch.k, sum(config.binning.sizes(config.schema)), config.sketch.seed)
        return SketchEngine(config.schema, config.binning, config.discounts, planes)
    return Engine(config.schema, config.binning, config.discounts)


class TestSnapshot:
    @pytest.mark.parametrize("sketch", [False, True])
    def test_split_resume(self, tmp_path, mixed_setup, sketch):
        cfg = _config(mixed_setup, sketch)
        events = mixed_setup[3][:1000]
        whole = _store(cfg)
        whole.run(events)
        part = _store(cfg)
        part.run(events[:500])
        manifest = snapshot(part, tmp_path / "s.npz", cfg)
        assert manifest["events_processed"] == 500
        resumed = restore(tmp_path / "s.npz", cfg)
        resumed.run(events[500:])
        assert resumed.nodes() == whole.nodes()
        assert np.max(np.abs(resumed.matrix() - whole.matrix())) <= 1e-12
        for n in whole.nodes():
            assert resumed.degrees(n) == whole.degrees(n) and resumed.clocks(n) == whole.clocks(n)

    @settings(max_examples=10, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(st.integers(0, 400))
    def test_any_split_point(self, tmp_path, mixed_setup, split):
        cfg = _config(mixed_setup)
        events = mixed_setup[3][:400]
        whole = _store(cfg)
        whole.run(events)
        part = _store(cfg)
        part.run(events[:split])
        snapshot(part, tmp_path / "p.npz", cfg)
        resumed = restore(tmp_path / "p.npz", cfg)
        resumed.run(events[split:])
        assert resumed.matrix().tobytes() == whole.matrix().tobytes()

    def test_edited_binning_refused(self, tmp_path, mixed_setup):
        cfg = _config(mixed_setup)
        store = _store(cfg)
        store.run(mixed_setup[3][:50])
        snapshot(store, tmp_path / "s.npz", cfg)
        entries = dict(cfg.binning.entries)
        entries["x0"] = NumericalBins(tuple(c + 1e-9 for c in entries["x0"].cuts))
        from dataclasses import replace

        edited = replace(cfg, binning=BinningSpec(entries))
        with pytest.raises(SnapshotError, match="binning_hash"):
            restore(tmp_path / "s.npz", edited)
        with pytest.raises(SnapshotError, match="config_hash"):
            restore(tmp_path / "s.npz", replace(cfg, tolerance=1.0))

    def test_version_refused(self, tmp_path, mixed_setup):
        cfg = _config(mixed_setup)
        snapshot(_store(cfg), tmp_path / "s.npz", cfg)
        with np.load(tmp_path / "s.npz") as z:
            arrays = dict(z)
        manifest = json.loads(str(arrays["manifest"]))
        manifest["format_version"] = 99
        arrays["manifest"] = np.array(json.dumps(manifest))
        np.savez(tmp_path / "bad.npz", **arrays)
        with pytest.raises(SnapshotError, match="format"):
            restore(tmp_path / "bad.npz", cfg)

    def test_kind_mismatch(self, tmp_path, mixed_setup):
        cfg = _config(mixed_setup)
        snapshot(_store(cfg), tmp_path / "s.npz", cfg)
        with pytest.raises(SnapshotError):
            restore(tmp_path / "s.npz", _config(mixed_setup, sketch=True))

    def test_empty_store(self, tmp_path, mixed_setup):
        cfg = _config(mixed_setup)
        manifest = snapshot(_store(cfg), tmp_path / "e.npz", cfg)
        assert manifest["nodes"] == 0 and read_manifest(tmp_path / "e.npz") == manifest
        assert len(restore(tmp_path / "e.npz", cfg)) == 0

    def test_foreign_store_refused(self, tmp_path, mixed_setup):
        cfg = _config(mixed_setup)
        schema, binning, _, _ = mixed_setup
        other = Engine(schema, binning, DiscountConfig(Constant(0.1), Constant(0.1)))
        with pytest.raises(SnapshotError):
            snapshot(other, tmp_path / "x.npz", cfg)

    def test_unreadable(self, tmp_path, mixed_setup):
        p = write(tmp_path, "junk.npz", "not a zip")
        with pytest.raises(SnapshotError):
            restore(p, _config(mixed_setup))


def test_integer_epoch_timestamps(tmp_path):
    p = write(tmp_path, "s.csv", "src,dst,ts,f1\na,b,1700000000,1\n")
    (ev,) = read_edge_stream(p, F1)
    assert ev.timestamp == 1.7e9 and not math.isnan(ev.timestamp)
