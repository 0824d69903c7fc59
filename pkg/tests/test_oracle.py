import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from decaygraph import synth
from decaygraph.binning import fit_binning
from decaygraph.core import Constant, DiscountConfig, EdgeEvent, ExpDecay
from decaygraph.engine import Engine
from decaygraph.errors import PreconditionError
from decaygraph.oracle import (
    approximation_report,
    chain_equivalence,
    check_chain,
    edge_onehot,
    max_state_discrepancy,
    naive_replay,
    truncated_sum,
    uniform_tail,
    walk_sampler,
)
from decaygraph.verify import replay_compare, star_expectation, star_fixture


@pytest.fixture(scope="module")
def edge_only():
    schema = synth.make_schema(2, 1, derived=False)
    binning = fit_binning(schema, synth.random_stream(500, 10, schema, 0), max_categories=6)
    return schema, binning


class TestTruncatedSum:
    def test_empty(self):
        assert truncated_sum([], 0.3, [0.2, 0.8]).tolist() == [0.2, 0.8]

    def test_two_steps(self):
        out = truncated_sum([[1, 0], [0, 1]], 0.5, [0.5, 0.5])
        assert out.tolist() == [0.625, 0.375]

    def test_alpha_zero(self):
        assert truncated_sum([[0, 1], [1, 0]], 0.0, [0.5, 0.5]).tolist() == [0.0, 1.0]

    @given(st.integers(0, 20), st.floats(0, 1), st.integers(0, 1000))
    def test_closure(self, k, alpha, seed):
        rng = np.random.default_rng(seed)
        deltas = np.eye(5)[rng.integers(0, 5, k)]
        assert abs(truncated_sum(deltas, alpha, rng.dirichlet(np.ones(5))).sum() - 1.0) <= 1e-12


class TestChain:
    def test_length_one(self, edge_only):
        schema, binning = edge_only
        ev = synth.chain_stream(1, schema, 3)
        eng = Engine(schema, binning, DiscountConfig(Constant(0.4), Constant(0.0)))
        eng.run(ev)
        expected = 0.6 * edge_onehot(ev[0], schema, binning) + 0.4 * uniform_tail(schema, binning)
        assert np.max(np.abs(eng.vector(ev[0].destination_id) - expected)) <= 1e-15

    @pytest.mark.parametrize("alpha", [0.0, 0.5, 1.0])
    def test_length_twenty(self, edge_only, alpha, backend):
        schema, binning = edge_only
        assert chain_equivalence(synth.chain_stream(20, schema, 9), alpha, schema, binning, backend) <= 1e-12

    def test_alpha_one_keeps_tail(self, edge_only):
        schema, binning = edge_only
        ev = synth.chain_stream(7, schema, 1)
        eng = Engine(schema, binning, DiscountConfig(Constant(1.0), Constant(0.0)))
        eng.run(ev)
        assert np.array_equal(eng.vector(ev[-1].destination_id), uniform_tail(schema, binning))

    def test_not_a_chain(self):
        with pytest.raises(PreconditionError):
            check_chain([EdgeEvent("a", "b", 1, ()), EdgeEvent("c", "d", 2, ())])
        with pytest.raises(PreconditionError):
            check_chain([EdgeEvent("a", "b", 2, ()), EdgeEvent("b", "c", 1, ())])

    def test_derived_features_rejected(self):
        schema = synth.make_schema(1, 0, derived=True)
        ev = synth.chain_stream(3, schema, 0)
        with pytest.raises(PreconditionError):
            chain_equivalence(ev, 0.5, schema, fit_binning(schema, ev))


class TestReplay:
    def test_empty(self, mixed_setup):
        schema, binning, discounts, _ = mixed_setup
        assert naive_replay([], schema, binning, discounts, [0]) == [{}]

    def test_single_event_hand_example(self, one_feature):
        cfg = DiscountConfig(Constant(0.5), Constant(0.0))
        (ref,) = naive_replay([EdgeEvent("u", "v", 1.0, (0.2,))], *one_feature, cfg, [1])
        assert ref["u"].histograms[0].tolist() == [0.75, 0.25]
        assert ref["v"].histograms[0].tolist() == [0.75, 0.25]

    @pytest.mark.parametrize("beta", [Constant(0.3), ExpDecay(2.0)])
    def test_matches_engine(self, mixed_setup, beta, backend):
        schema, binning, discounts, events = mixed_setup
        discounts = DiscountConfig(ExpDecay(4.0), beta, 15.0)
        events = events[:600]
        eng = Engine(schema, binning, discounts, backend=backend)
        refs = naive_replay(events, schema, binning, discounts, [200, 600])
        eng.run(events[:200])
        assert replay_compare(eng.states(), refs[0])[0] <= 1e-12
        eng.run(events[200:])
        assert replay_compare(eng.states(), refs[1])[0] <= 1e-12
        assert max_state_discrepancy(eng.states(), refs[1]) <= 1e-12

    def test_detects_difference(self, mixed_setup):
        schema, binning, discounts, events = mixed_setup
        eng = Engine(schema, binning, discounts)
        eng.run(events[:100])
        (ref,) = naive_replay(events[:99], schema, binning, discounts, [99])
        assert replay_compare(eng.states(), ref)[0] > 0


class TestWalks:
    @pytest.mark.parametrize("n_walks", [1, 7, 200])
    def test_chain_exact(self, edge_only, n_walks):
        schema, binning = edge_only
        ev = synth.chain_stream(6, schema, 2)
        est = walk_sampler(ev, ev[-1].destination_id, 0.5, n_walks, schema, binning)
        deltas = [edge_onehot(e, schema, binning) for e in reversed(ev)]
        assert np.max(np.abs(est.mean - truncated_sum(deltas, 0.5, uniform_tail(schema, binning)))) <= 1e-12
        assert est.distinct_paths == 1

    def test_alpha_zero(self):
        events, schema, binning, seed = star_fixture()
        est = walk_sampler(events, seed, 0.0, 500, schema, binning)
        assert est.mean.tolist() == [0, 0, 0, 1] and est.stderr.max() == 0

    def test_star(self):
        events, schema, binning, seed = star_fixture()
        est = walk_sampler(events, seed, 0.5, 20000, schema, binning, rng_seed=1)
        err = np.abs(est.mean - star_expectation(0.5))
        assert np.all(err <= 3 * est.stderr + 1e-12)

    @pytest.mark.parametrize("rng_seed", [0, 1, 2])
    def test_seed_invariance(self, rng_seed):
        events, schema, binning, seed = star_fixture()
        a = walk_sampler(events, seed, 0.5, 20000, schema, binning, rng_seed=rng_seed)
        b = walk_sampler(events, seed, 0.5, 20000, schema, binning, rng_seed=rng_seed + 100)
        assert np.all(np.abs(a.mean - b.mean) <= 3 * np.hypot(a.stderr, b.stderr) + 1e-12)

    def test_max_hops(self, edge_only):
        schema, binning = edge_only
        ev = synth.chain_stream(10, schema, 2)
        est = walk_sampler(ev, ev[-1].destination_id, 0.5, 5, schema, binning, max_hops=3)
        deltas = [edge_onehot(e, schema, binning) for e in reversed(ev)][:3]
        assert np.allclose(est.mean, truncated_sum(deltas, 0.5, uniform_tail(schema, binning)), atol=1e-15)

    def test_unknown_seed(self):
        events, schema, binning, _ = star_fixture()
        with pytest.raises(KeyError):
            walk_sampler(events, "nobody", 0.5, 10, schema, binning)


class TestReport:
    def test_chain_matches(self, edge_only):
        schema, binning = edge_only
        ev = synth.chain_stream(8, schema, 4)
        rows = approximation_report(ev, schema, binning, DiscountConfig(Constant(0.5), Constant(0.0)), n_walks=50)
        assert len(rows) == 9
        assert max(r.l1_distance for r in rows) <= 1e-12

    def test_star_smoke(self):
        events, schema, binning, _ = star_fixture()
        rows = approximation_report(events, schema, binning, DiscountConfig(Constant(0.5), Constant(0.0)), n_walks=200)
        assert len(rows) == 5
        assert all(np.isfinite(r.l1_distance) for r in rows)

    def test_needs_constant_alpha(self):
        events, schema, binning, _ = star_fixture()
        with pytest.raises(PreconditionError):
            approximation_report(events, schema, binning, DiscountConfig(ExpDecay(1.0), Constant(0.0)))


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 20), st.sampled_from([0.0, 0.25, 0.5, 0.75, 1.0]), st.integers(0, 10_000))
def test_chain_property(length, alpha, seed):
    schema = synth.make_schema(2, 1, derived=False)
    binning = fit_binning(schema, synth.random_stream(300, 10, schema, seed), max_categories=6)
    assert chain_equivalence(synth.chain_stream(length, schema, seed), alpha, schema, binning) <= 1e-12
