"""Pre-filtering, post-filtering, selectivity-based routing, and the
fused-distance mode that trades filter guarantees for hybrid ranking.

Strategy tags emitted by the router are fixed to {"pre", "in", "post"}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ORDERED, SET, UNORDERED, Dataset, Query, SchemaError
from .distance import distance_euclidean, euclidean_to_many
from .filters import (And, ExactMatch, Filter, Not, Or, Range, SetContains,
                      validate_filter)
from .hnsw import HnswIndex, search_induced, search_unfiltered
from .oracle import KnnResult, knn_over_ids


@dataclass
class AttributeIndexes:
    """Per-column lookup structures backing exact pre-filtering.

    unordered: token -> sorted id array
    ordered:   (values sorted ascending, ids aligned with that order)
    set:       token -> sorted id array (inverted index)
    """

    dataset: Dataset
    unordered: dict[str, dict[str, np.ndarray]]
    ordered: dict[str, tuple[np.ndarray, np.ndarray]]
    sets: dict[str, dict[str, np.ndarray]]


def build_attribute_indexes(dataset: Dataset) -> AttributeIndexes:
    unordered: dict[str, dict[str, np.ndarray]] = {}
    ordered: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    sets: dict[str, dict[str, np.ndarray]] = {}
    for c, col in enumerate(dataset.schema):
        if col.kind == UNORDERED:
            postings: dict[str, list[int]] = {}
            for i, tok in enumerate(dataset.attributes[c]):
                postings.setdefault(tok, []).append(i)
            unordered[col.name] = {
                t: np.asarray(ids, dtype=np.int64) for t, ids in postings.items()
            }
        elif col.kind == ORDERED:
            values = dataset.ordered_values(c)
            ids = np.arange(dataset.n, dtype=np.int64)
            # ties ordered by id for a deterministic layout
            order = np.lexsort((ids, values))
            ordered[col.name] = (values[order], ids[order])
        else:
            sets[col.name] = dict(dataset.set_postings(c))
    return AttributeIndexes(dataset, unordered, ordered, sets)


def _ordered_range_ids(indexes: AttributeIndexes, column: str,
                       low: float, high: float) -> np.ndarray:
    values, ids = indexes.ordered[column]
    lo = np.searchsorted(values, low, side="left")
    hi = np.searchsorted(values, high, side="right")
    return np.sort(ids[lo:hi])


def matching_ids(indexes: AttributeIndexes, flt: Filter) -> np.ndarray:
    """Sorted ids of all items satisfying the filter, resolved from the
    attribute indexes alone (no per-item evaluation)."""
    ds = indexes.dataset
    schema = ds.schema
    if isinstance(flt, ExactMatch):
        kind = schema.kind_of(flt.column)
        if kind == UNORDERED:
            ids = indexes.unordered[flt.column].get(flt.value)
            return ids.copy() if ids is not None else np.empty(0, dtype=np.int64)
        if kind == ORDERED:
            v = float(flt.value)
            return _ordered_range_ids(indexes, flt.column, v, v)
        raise SchemaError(f"exact-match filter on set column {flt.column!r}")
    if isinstance(flt, Range):
        if schema.kind_of(flt.column) != ORDERED:
            raise SchemaError(f"range filter on non-ordered column {flt.column!r}")
        return _ordered_range_ids(indexes, flt.column, flt.low, flt.high)
    if isinstance(flt, SetContains):
        if schema.kind_of(flt.column) != SET:
            raise SchemaError(f"set-contains filter on non-set column {flt.column!r}")
        ids = indexes.sets[flt.column].get(flt.token)
        return ids.copy() if ids is not None else np.empty(0, dtype=np.int64)
    if isinstance(flt, And):
        out = None
        for p in flt.parts:
            part = matching_ids(indexes, p)
            out = part if out is None else np.intersect1d(out, part, assume_unique=True)
        return out if out is not None else np.empty(0, dtype=np.int64)
    if isinstance(flt, Or):
        out = np.empty(0, dtype=np.int64)
        for p in flt.parts:
            out = np.union1d(out, matching_ids(indexes, p))
        return out
    if isinstance(flt, Not):
        inner = matching_ids(indexes, flt.inner)
        all_ids = np.arange(ds.n, dtype=np.int64)
        return np.setdiff1d(all_ids, inner, assume_unique=True)
    raise SchemaError(f"unknown filter node {type(flt).__name__}")


def pre_filter_query(dataset: Dataset, indexes: AttributeIndexes,
                     query: Query) -> KnnResult:
    """Exact filtered search: resolve matching ids, then scan only those."""
    if query.filter is None:
        raise ValueError("pre_filter_query requires a filter")
    validate_filter(query.filter, dataset.schema)
    ids = matching_ids(indexes, query.filter)
    return knn_over_ids(dataset, query.vector, query.k, ids)


def post_filter_query(index: HnswIndex, query: Query, ef: int,
                      initial_multiplier: int = 2) -> KnnResult:
    """Unfiltered search with oversampling, doubling k' until k matches
    pass the filter or k' reaches the dataset size."""
    if query.filter is None:
        raise ValueError("post_filter_query requires a filter")
    if ef < query.k:
        raise ValueError(f"ef={ef} must be >= k={query.k}")
    validate_filter(query.filter, index.dataset.schema)
    from .filters import matching_mask

    mask = matching_mask(query.filter, index.dataset)
    n = index.dataset.n
    k_prime = min(max(query.k, initial_multiplier * query.k), n)
    while True:
        raw = search_unfiltered(index, query.vector, k_prime,
                                max(ef, k_prime))
        keep_ids = [i for i in raw.ids if mask[i]]
        if len(keep_ids) >= query.k or k_prime >= n:
            break
        k_prime = min(2 * k_prime, n)
    keep = [(i, d) for i, d in raw.entries if mask[i]][:query.k]
    return KnnResult(tuple(i for i, _ in keep), tuple(d for _, d in keep))


@dataclass(frozen=True)
class RouterConfig:
    """Selectivity bands: below low_threshold pre-filter, above
    high_threshold post-filter, in-filter in between."""

    low_threshold: float = 0.01
    high_threshold: float = 0.5

    def __post_init__(self) -> None:
        if not (0.0 <= self.low_threshold <= self.high_threshold <= 1.0):
            raise ValueError("need 0 <= low_threshold <= high_threshold <= 1")


def route_and_query(dataset: Dataset, indexes: AttributeIndexes,
                    index: HnswIndex, query: Query, ef: int,
                    config: RouterConfig = RouterConfig(),
                    ) -> tuple[KnnResult, str]:
    """Dispatch to pre-/in-/post-filtering based on filter selectivity."""
    if query.filter is None:
        raise ValueError("route_and_query requires a filter")
    ids = matching_ids(indexes, query.filter)
    sel = len(ids) / dataset.n
    if sel < config.low_threshold:
        return knn_over_ids(dataset, query.vector, query.k, ids), "pre"
    if sel > config.high_threshold:
        return post_filter_query(index, query, ef), "post"
    return search_induced(index, query, ef), "in"


# -- fused-distance (hybrid ranking, no filter guarantee) ------------------

def fused_distance(u: np.ndarray, v: np.ndarray,
                   attr_a: tuple, attr_b: tuple, weight: float) -> float:
    """Euclidean distance plus weight times the fraction of attribute
    positions that disagree."""
    if len(attr_a) != len(attr_b):
        raise ValueError("attribute lists must align positionally")
    base = distance_euclidean(u, v)
    if not attr_a:
        return base
    mismatches = sum(1 for a, b in zip(attr_a, attr_b) if a != b)
    return base + weight * mismatches / len(attr_a)


def afanns_query_fused(dataset: Dataset, query: Query, k: int,
                       weight: float) -> KnnResult:
    """Brute-force top-k under the fused distance.

    The filter must be an exact-match conjunction; its target values are
    compared against item attributes as the dissimilarity term. Returned
    items are NOT guaranteed to satisfy the filter.
    """
    targets = _em_targets(query.filter, dataset)
    m = len(dataset.schema)
    dists = euclidean_to_many(query.vector, dataset.vectors)
    mismatches = np.zeros(dataset.n, dtype=np.float64)
    for col, value in targets:
        kind = dataset.schema.columns[col].kind
        if kind == UNORDERED:
            codes, table = dataset.token_codes(col)
            code = table.get(value, -1)
            mismatches += codes != code
        else:
            mismatches += dataset.ordered_values(col) != float(value)
    fused = dists + weight * mismatches / m
    return KnnResult.from_arrays(np.arange(dataset.n, dtype=np.int64), fused, k)


def _em_targets(flt: Filter | None, dataset: Dataset) -> list[tuple[int, object]]:
    if flt is None:
        raise ValueError("fused queries require an exact-match filter")
    validate_filter(flt, dataset.schema)
    leaves: list[ExactMatch] = []
    if isinstance(flt, ExactMatch):
        leaves.append(flt)
    elif isinstance(flt, And) and all(isinstance(p, ExactMatch) for p in flt.parts):
        leaves.extend(flt.parts)  # type: ignore[arg-type]
    else:
        raise ValueError("fused queries support only conjunctions of exact matches")
    return [(dataset.schema.index_of(l.column), l.value) for l in leaves]
