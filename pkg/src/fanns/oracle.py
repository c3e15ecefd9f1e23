"""Exact filtered k-nearest-neighbor search by brute force.

This is the ground-truth generator and the correctness baseline every index
in this package is tested against. Ties in distance always break by
ascending item id, which makes results reproducible across runs and
implementations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, Query
from .distance import euclidean_to_many
from .filters import matching_mask, validate_filter


@dataclass(frozen=True)
class KnnResult:
    """Result list sorted ascending by (distance, id); ids are unique."""

    ids: tuple[int, ...]
    distances: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.ids) != len(self.distances):
            raise ValueError("ids and distances must have equal length")

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def entries(self) -> tuple[tuple[int, float], ...]:
        return tuple(zip(self.ids, self.distances))

    def top(self, k: int) -> "KnnResult":
        return KnnResult(self.ids[:k], self.distances[:k])

    @classmethod
    def empty(cls) -> "KnnResult":
        return cls((), ())

    @classmethod
    def from_arrays(cls, ids: np.ndarray, distances: np.ndarray,
                    k: int | None = None) -> "KnnResult":
        """Sort candidates by (distance, id) and keep the first k."""
        ids = np.asarray(ids, dtype=np.int64)
        distances = np.asarray(distances, dtype=np.float64)
        order = np.lexsort((ids, distances))
        if k is not None:
            order = order[:k]
        return cls(tuple(int(i) for i in ids[order]),
                   tuple(float(x) for x in distances[order]))


def knn_over_ids(dataset: Dataset, q: np.ndarray, k: int,
                 ids: np.ndarray) -> KnnResult:
    """Exact top-k among the given item ids."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size == 0:
        return KnnResult.empty()
    dists = euclidean_to_many(q, dataset.vectors[ids])
    return KnnResult.from_arrays(ids, dists, k)


def exact_filtered_knn(dataset: Dataset, query: Query) -> KnnResult:
    """The min(k, #matching) matching items nearest to the query vector."""
    if query.vector.shape[0] != dataset.d:
        raise ValueError(
            f"query has {query.vector.shape[0]} coordinates, dataset d={dataset.d}")
    if query.filter is None:
        ids = np.arange(dataset.n, dtype=np.int64)
    else:
        validate_filter(query.filter, dataset.schema)
        ids = np.nonzero(matching_mask(query.filter, dataset))[0]
    return knn_over_ids(dataset, query.vector, query.k, ids)


def batch_ground_truth(dataset: Dataset, queries: list[Query],
                       k: int) -> list[KnnResult]:
    """Exact results for each query with its k overridden by ``k``.

    Queries without a filter yield unfiltered exact KNN.
    """
    out = []
    for q in queries:
        out.append(exact_filtered_knn(dataset, Query(q.vector, k, q.filter)))
    return out
