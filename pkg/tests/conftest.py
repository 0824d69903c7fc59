import pytest

from decaygraph import kernels, synth
from decaygraph.binning import fit_binning
from decaygraph.core import (
    BinningSpec,
    Constant,
    DiscountConfig,
    ExpDecay,
    FeatureDef,
    FeatureSchema,
    NumericalBins,
)

BACKENDS = kernels.available()


@pytest.fixture
def one_feature():
    """One numerical edge feature with two bins split at 1.0."""
    schema = FeatureSchema((FeatureDef("f"),))
    return schema, BinningSpec({"f": NumericalBins((1.0,))})


@pytest.fixture(scope="session")
def mixed_setup():
    schema = synth.make_schema(2, 1, derived=True)
    events = synth.random_stream(2000, 60, schema, seed=7)
    discounts = DiscountConfig(Constant(0.6), ExpDecay(5.0), 20.0)
    binning = fit_binning(schema, events[:500], degree_timescale=discounts.degree_timescale)
    return schema, binning, discounts, events


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param
