"""Random-projection sketches of node histograms.

Instead of ``M`` histogram bins a node keeps ``k`` projections
``theta_j = h_j . s`` onto fixed random unit vectors.  The histogram update
is linear, so the projections can be updated directly from the event's
one-hot bins and never need the histograms themselves.  Signs of the
projections give a similarity-preserving bit code.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Iterator, Mapping, Sequence

import numpy as np

from decaygraph import kernels
from decaygraph.core import BinningSpec, DiscountConfig, FeatureSchema
from decaygraph.engine import StreamCore
from decaygraph.errors import StructuralError


@dataclass(frozen=True)
class HashPlanes:
    """``k`` unit vectors in ``R^M``, stored as a ``(k, M)`` matrix."""

    vectors: np.ndarray
    seed: int

    @property
    def k(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def init_planes(k: int, dim: int, seed: int = 42) -> HashPlanes:
    """Gaussian directions normalised to unit length; same seed, same planes."""
    if k < 1 or dim < 1:
        raise ValueError(f"need k >= 1 and dim >= 1, got k={k}, dim={dim}")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((k, dim))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    v.setflags(write=False)
    return HashPlanes(v, int(seed))


def project(s_tot, planes: HashPlanes) -> np.ndarray:
    s = np.asarray(s_tot, dtype=float)
    if s.shape != (planes.dim,):
        raise StructuralError(f"vector of shape {s.shape} does not match plane dimension {planes.dim}")
    return planes.vectors @ s


def binarize(theta) -> np.ndarray:
    """1 where the projection is strictly positive; zero maps to 0."""
    return (np.asarray(theta) > 0).astype(np.uint8)


def sketch_update(theta_self, theta_neighbor, delta_flat, alpha: float, beta: float, planes: HashPlanes) -> np.ndarray:
    """Projected form of the histogram update; ``beta = 0`` is the plain moving average."""
    a = np.asarray(theta_self, dtype=float)
    b = np.asarray(theta_neighbor, dtype=float)
    if a.shape != (planes.k,) or b.shape != (planes.k,):
        raise StructuralError(f"theta vectors must have length {planes.k}")
    hd = project(delta_flat, planes)
    return beta * a + (1.0 - beta) * (alpha * b + (1.0 - alpha) * hd)


def average_preservation_check(histograms: Sequence, planes: HashPlanes) -> float:
    """max_j |h_j . mean(S) - mean(h_j . S)|: hashing commutes with averaging."""
    S = np.asarray(histograms, dtype=float)
    if S.ndim != 2 or S.shape[1] != planes.dim:
        raise StructuralError(f"expected an (n, {planes.dim}) stack of histograms, got {S.shape}")
    hash_of_mean = planes.vectors @ S.mean(axis=0)
    mean_of_hash = (S @ planes.vectors.T).mean(axis=0)
    return float(np.max(np.abs(hash_of_mean - mean_of_hash)))


@dataclass
class SketchState:
    theta: np.ndarray
    in_degree: float = 0.0
    out_degree: float = 0.0
    last_any_event_time: float | None = None
    last_in_event_time: float | None = None
    last_out_event_time: float | None = None

    def bits(self) -> np.ndarray:
        return binarize(self.theta)


class SketchEngine(StreamCore):
    """Same stream semantics as :class:`~decaygraph.engine.Engine`, ``k`` floats per node."""

    def __init__(
        self,
        schema: FeatureSchema,
        binning: BinningSpec,
        discounts: DiscountConfig,
        planes: HashPlanes,
        *,
        tolerance: float = 0.0,
        backend: str = "auto",
        capacity: int = 1024,
    ):
        super().__init__(schema, binning, discounts, tolerance=tolerance, capacity=capacity)
        if planes.dim != self.layout.width:
            raise StructuralError(f"planes have dimension {planes.dim}, layout has {self.layout.width} bins")
        self.planes = planes
        self._k = kernels.load(backend)
        self.backend = self._k.NAME
        self._PT = np.ascontiguousarray(planes.vectors.T)
        self._T = np.empty((self._capacity, planes.k))
        self._theta0 = planes.vectors @ self.layout.uniform()
        self._hu = np.zeros(planes.k)
        self._hv = np.zeros(planes.k)

    def _grow(self, capacity: int) -> None:
        T = np.empty((capacity, self._T.shape[1]))
        T[: len(self._ids)] = self._T[: len(self._ids)]
        self._T = T

    def _init_row(self, row: int) -> None:
        self._T[row] = self._theta0

    def _mix_pair(self, u, v, pos_u, pos_v, au, bu, av, bv) -> None:
        self._k.theta_pair(self._T, u, v, self._PT, pos_u, pos_v, au, bu, av, bv, self._hu, self._hv)

    def _mix_self(self, u, pos, a, b) -> None:
        self._k.theta_self(self._T, u, self._PT, pos, a, b, self._hu)

    def theta(self, node_id) -> np.ndarray:
        return self._T[self._row_of(node_id)].copy()

    def pair_vector(self, src, dst) -> np.ndarray:
        T = self._T
        return np.concatenate((T[self._row_of(src)], T[self._row_of(dst)]))

    def matrix(self) -> np.ndarray:
        return self._T[: len(self._ids)].copy()

    def state(self, node_id) -> SketchState:
        r = self._row_of(node_id)
        return SketchState(
            self._T[r].copy(), self._in[r], self._out[r], self._t_any[r], self._t_in[r], self._t_out[r]
        )

    def names(self, append_degrees: bool = False) -> tuple[str, ...]:
        cols = [f"theta_{j}" for j in range(self.planes.k)]
        if append_degrees:
            cols += ["in_degree", "out_degree"]
        return tuple(cols)

    def iter_embeddings(self, append_degrees: bool = False) -> Iterator[tuple[Hashable, np.ndarray]]:
        for r, n in enumerate(self._ids):
            row = self._T[r]
            if append_degrees:
                row = np.concatenate((row, (self._in[r], self._out[r])))
            yield n, row

    def export_state(self) -> dict:
        d = self._scalar_state()
        d["vectors"] = self.matrix()
        return d

    def load_state(self, d: Mapping) -> None:
        self._load_scalar_state(d)
        k = self.planes.k
        vectors = np.asarray(d["vectors"], dtype=float).reshape(len(self._ids), k)
        self._capacity = max(len(self._ids), 1)
        self._T = np.empty((self._capacity, k))
        self._T[: len(self._ids)] = vectors
