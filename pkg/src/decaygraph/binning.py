"""Histogram bin fitting and value-to-bin lookup.

Numerical features get nearest-rank quantile cut points; categorical
features get one bin per frequent token plus a catch-all bin.  Fitted
entries are frozen values and can be shared freely.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from collections import Counter
from typing import Iterable

from decaygraph.core import CATEGORICAL, EDGE, BinningSpec, CategoricalBins, NumericalBins
from decaygraph.errors import DataError, FitError


def nearest_rank_cuts(sorted_values: list[float], n_bins: int) -> list[float]:
    n = len(sorted_values)
    cuts = []
    for i in range(1, n_bins):
        rank = -(-i * n // n_bins)  # ceil(i * n / n_bins), exact in integers
        cuts.append(sorted_values[rank - 1])
    return cuts


def fit_quantile_bins(values: Iterable[float], n_bins: int = 10) -> NumericalBins:
    """Cut points at the ``100*i/n_bins`` nearest-rank percentiles.

    Repeated percentiles collapse into one cut, so heavy-tailed or
    low-cardinality features end up with fewer than ``n_bins`` bins.

    >>> fit_quantile_bins(range(1, 11), 5).cuts
    (2.0, 4.0, 6.0, 8.0)
    """
    if n_bins < 1:
        raise FitError(f"n_bins must be >= 1, got {n_bins}")
    data = []
    for row, v in enumerate(values):
        try:
            x = float(v)
        except (TypeError, ValueError):
            raise DataError(f"value {v!r} is not numeric", line=row) from None
        if not math.isfinite(x):
            raise DataError(f"non-finite value {x}", line=row)
        data.append(x)
    if not data:
        raise FitError("cannot fit bins on an empty sample")
    data.sort()
    if data[0] == data[-1]:
        # a constant sample gets one bin, not an empty one below it
        return NumericalBins(())
    cuts: list[float] = []
    for c in nearest_rank_cuts(data, n_bins):
        if not cuts or c > cuts[-1]:
            cuts.append(c)
    return NumericalBins(tuple(cuts))


def fit_categorical_bins(categories: Iterable, max_categories: int = 32) -> CategoricalBins:
    """Own bins for the ``max_categories - 1`` most frequent tokens.

    Ties in frequency go to the lexicographically smaller token.  The
    overflow bin is always reserved, even if every token got its own bin.
    """
    if max_categories < 1:
        raise FitError(f"max_categories must be >= 1, got {max_categories}")
    counts = Counter(str(c) for c in categories)
    if not counts:
        raise FitError("cannot fit bins on an empty sample")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = [tok for tok, _ in ranked[: max_categories - 1]]
    return CategoricalBins({tok: i for i, tok in enumerate(kept)}, len(kept) + 1)


def lookup(value, entry) -> int:
    """Bin index of ``value``.

    Numerical bins are right-open, ``[c_i, c_{i+1})``, and clamp at both
    ends.  Unknown categories land in the overflow bin.
    """
    if isinstance(entry, NumericalBins):
        try:
            x = float(value)
        except (TypeError, ValueError):
            raise DataError(f"value {value!r} is not numeric") from None
        if x != x:
            raise DataError("NaN cannot be binned")
        return bisect_right(entry.cuts, x)
    if value is None:
        raise DataError("missing categorical value")
    return entry.mapping.get(str(value), entry.overflow)


def lookup_linear(value: float, cuts) -> int:
    """Reference lookup by scanning every interval."""
    if value != value:
        raise DataError("NaN cannot be binned")
    if not cuts or value < cuts[0]:
        return 0
    for i in range(len(cuts) - 1):
        if cuts[i] <= value < cuts[i + 1]:
            return i + 1
    return len(cuts)


def fit_binning(
    schema,
    events,
    *,
    n_bins: int = 10,
    max_categories: int = 32,
    degree_timescale: float = 86400.0,
):
    """Fit every schema feature on a training prefix of edge events.

    Derived features are fitted on the values a counters-only replay of
    the same prefix produces.
    """
    from decaygraph.engine import derived_feature_values

    events = list(events)
    if not events:
        raise FitError("training prefix is empty")
    edge_names = [f.name for f in schema.edge_features]
    columns = {name: [ev.values[i] for ev in events] for i, name in enumerate(edge_names)}
    derived = None
    entries = {}
    for f in schema.features:
        if f.source == EDGE:
            if f.kind == CATEGORICAL:
                entries[f.name] = fit_categorical_bins(columns[f.name], max_categories)
            else:
                entries[f.name] = fit_quantile_bins(columns[f.name], n_bins)
            continue
        if derived is None:
            derived = derived_feature_values(events, degree_timescale)
        sample = derived[f.source]
        # a prefix where every node appears once has no time gaps yet
        entries[f.name] = fit_quantile_bins(sample, n_bins) if sample else NumericalBins(())
    return BinningSpec(entries)
