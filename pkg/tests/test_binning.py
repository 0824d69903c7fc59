import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from decaygraph.binning import fit_binning, fit_categorical_bins, fit_quantile_bins, lookup, lookup_linear
from decaygraph.core import CategoricalBins, FeatureDef, FeatureSchema, NumericalBins
from decaygraph.errors import DataError, FitError

finite = st.floats(-1e6, 1e6, allow_nan=False)


def nearest_rank_oracle(values, n_bins):
    s = sorted(values)
    if s[0] == s[-1]:
        return ()
    cuts = []
    for i in range(1, n_bins):
        c = s[max(math.ceil(i / n_bins * len(s)), 1) - 1]
        if not cuts or c > cuts[-1]:
            cuts.append(c)
    return tuple(cuts)


class TestQuantiles:
    def test_one_to_ten_five_bins(self):
        b = fit_quantile_bins(range(1, 11), 5)
        assert b.cuts == (2, 4, 6, 8) and b.size == 5

    def test_constant_collapses(self):
        b = fit_quantile_bins([7, 7, 7, 7], 10)
        assert b.cuts == () and b.size == 1

    def test_two_values_two_bins(self):
        assert fit_quantile_bins([0, 100], 2).cuts == (0,)

    def test_ten_distinct_ten_bins(self):
        assert fit_quantile_bins(range(100), 10).size == 10

    def test_errors(self):
        with pytest.raises(FitError):
            fit_quantile_bins([], 10)
        with pytest.raises(DataError, match="line 1"):
            fit_quantile_bins([1.0, math.nan], 10)

    @given(st.lists(finite, min_size=1, max_size=200), st.integers(1, 20))
    def test_matches_oracle(self, values, n_bins):
        assert fit_quantile_bins(values, n_bins).cuts == nearest_rank_oracle(values, n_bins)

    @given(st.lists(finite, min_size=1, max_size=100), st.integers(1, 12), st.randoms())
    def test_permutation_invariant(self, values, n_bins, rnd):
        shuffled = list(values)
        rnd.shuffle(shuffled)
        assert fit_quantile_bins(values, n_bins) == fit_quantile_bins(shuffled, n_bins)

    @given(st.lists(finite, min_size=1, max_size=100), st.integers(1, 12))
    def test_training_values_land_in_range(self, values, n_bins):
        b = fit_quantile_bins(values, n_bins)
        assert all(0 <= lookup(v, b) < b.size for v in values)


class TestCategorical:
    def test_below_cap(self):
        b = fit_categorical_bins(["a", "a", "b"], 10)
        assert b.mapping == {"a": 0, "b": 1} and b.size == 3

    def test_tie_break_and_overflow(self):
        b = fit_categorical_bins(list("aabbc"), 3)
        assert b.mapping == {"a": 0, "b": 1} and b.size == 3
        assert lookup("c", b) == 2

    def test_unseen_goes_to_overflow(self):
        b = fit_categorical_bins(list("xyz"), 5)
        assert lookup("z-never-seen", b) == b.size - 1

    def test_empty(self):
        with pytest.raises(FitError):
            fit_categorical_bins([], 4)

    @given(st.lists(st.sampled_from("abcdefgh"), min_size=1), st.integers(1, 10))
    def test_size_formula(self, tokens, cap):
        assert fit_categorical_bins(tokens, cap).size == min(len(set(tokens)), cap - 1) + 1


class TestLookup:
    @pytest.mark.parametrize("value,expected", [(1.5, 2), (-5, 0), (2.0, 3), (0.0, 1), (99, 3)])
    def test_interval_convention(self, value, expected):
        assert lookup(value, NumericalBins((0.0, 1.0, 2.0))) == expected

    def test_nan(self):
        with pytest.raises(DataError):
            lookup(math.nan, NumericalBins((0.0,)))
        with pytest.raises(DataError):
            lookup("abc", NumericalBins((0.0,)))

    def test_categorical_hit(self):
        assert lookup("a", CategoricalBins({"a": 0}, 2)) == 0

    @given(st.lists(finite, max_size=30, unique=True), finite)
    def test_binary_equals_linear(self, cuts, value):
        cuts = tuple(sorted(cuts))
        assert lookup(value, NumericalBins(cuts)) == lookup_linear(value, cuts)

    def test_binary_equals_linear_on_cut_points(self):
        rnd = random.Random(3)
        for _ in range(200):
            cuts = tuple(sorted(set(rnd.randint(-20, 20) for _ in range(rnd.randint(0, 8)))))
            for v in [c + e for c in cuts for e in (-1e-9, 0.0, 1e-9)] or [0.0]:
                assert lookup(v, NumericalBins(cuts)) == lookup_linear(v, cuts)


class TestFitBinning:
    def test_fits_every_feature(self, mixed_setup):
        schema, binning, *_ = mixed_setup
        assert set(binning.entries) == set(schema.names)
        assert binning["c0"].size >= 2
        assert all(binning[f.name].size >= 1 for f in schema.features)

    def test_derived_bins_from_replay(self):
        from decaygraph import synth
        from decaygraph.engine import derived_feature_values

        schema = synth.make_schema(1, 0, derived=True)
        events = synth.random_stream(400, 20, schema, seed=1)
        b = fit_binning(schema, events, degree_timescale=10.0)
        vals = derived_feature_values(events, 10.0)
        assert b["dt"] == fit_quantile_bins(vals["derived_time_delta"], 10)
        assert b["in_deg"] == fit_quantile_bins(vals["derived_in_degree"], 10)

    def test_empty_prefix(self):
        with pytest.raises(FitError):
            fit_binning(FeatureSchema((FeatureDef("x"),)), [])

    def test_train_values_in_range(self, mixed_setup):
        schema, binning, _, events = mixed_setup
        for ev in events[:500]:
            for f, v in zip(schema.edge_features, ev.values):
                assert 0 <= lookup(v, binning[f.name]) < binning[f.name].size


def test_lookup_bulk_random_pairs():
    rng = np.random.default_rng(0)
    for _ in range(50):
        cuts = tuple(np.unique(rng.normal(size=rng.integers(0, 12))).tolist())
        for v in rng.normal(scale=2, size=40).tolist():
            assert lookup(v, NumericalBins(cuts)) == lookup_linear(v, cuts)


@settings(max_examples=50)
@given(st.lists(st.integers(-5, 5), min_size=1, max_size=50))
def test_low_cardinality_collapse(values):
    # a cut may sit on the sample minimum, hence the +1
    b = fit_quantile_bins(values, 10)
    assert b.size <= len(set(values)) + 1
    assert set(b.cuts) <= set(values)
