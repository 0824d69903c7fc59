"""Streaming, time-decayed histogram embeddings for nodes of a temporal graph."""

from decaygraph.core import (
    CATEGORICAL,
    NUMERICAL,
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
from decaygraph.errors import DataError, DecayGraphError, SnapshotError, TimeOrderError

__version__ = "0.1.0"

__all__ = [
    "CATEGORICAL",
    "NUMERICAL",
    "BinningSpec",
    "CategoricalBins",
    "Constant",
    "DataError",
    "DecayGraphError",
    "DiscountConfig",
    "EdgeEvent",
    "ExpDecay",
    "FeatureDef",
    "FeatureSchema",
    "NumericalBins",
    "SnapshotError",
    "TimeOrderError",
]
