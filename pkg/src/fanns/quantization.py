"""Quantization-based indexes: IVF with optional product-quantized codes,
a selectivity-switched filtered query in the style of inverted-file PQ
indexes, and a cluster + attribute-frequency-tree index for exact-match
filters.

PQ codes are stored contiguously in item-id order so a linear scan over an
arbitrary id subset touches memory sequentially.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .data import UNORDERED, Dataset, Query, SchemaError
from .filters import ExactMatch
from .oracle import KnnResult, knn_over_ids


def _sq_dists_to_centroids(vectors: np.ndarray, centroids: np.ndarray,
                           chunk: int = 16384) -> tuple[np.ndarray, np.ndarray]:
    """Per-row argmin cluster and squared distance, computed in chunks."""
    n = vectors.shape[0]
    labels = np.empty(n, dtype=np.int64)
    best = np.empty(n, dtype=np.float64)
    c_sq = np.einsum("ij,ij->i", centroids, centroids)
    for s in range(0, n, chunk):
        block = vectors[s:s + chunk].astype(np.float64)
        d2 = (np.einsum("ij,ij->i", block, block)[:, None]
              + c_sq[None, :] - 2.0 * (block @ centroids.T))
        np.maximum(d2, 0.0, out=d2)
        labels[s:s + chunk] = np.argmin(d2, axis=1)
        best[s:s + chunk] = d2[np.arange(d2.shape[0]), labels[s:s + chunk]]
    return labels, best


@dataclass(frozen=True)
class KMeansModel:
    centroids: np.ndarray  # float64 (c, d)
    iters: int
    seed: int
    objective_trace: tuple[float, ...]

    @property
    def c(self) -> int:
        return self.centroids.shape[0]

    def assign(self, vectors: np.ndarray) -> np.ndarray:
        return _sq_dists_to_centroids(vectors, self.centroids)[0]


def kmeans_train(vectors: np.ndarray, c: int, iters: int = 25,
                 seed: int = 0) -> KMeansModel:
    """Lloyd iterations from k-means++ seeding; empty clusters are reseeded
    from the point farthest to its assigned centroid."""
    vectors = np.asarray(vectors, dtype=np.float64)
    n = vectors.shape[0]
    if c < 1 or c > n:
        raise ValueError(f"need 1 <= c <= {n}, got {c}")
    rng = np.random.default_rng(seed)

    centroids = np.empty((c, vectors.shape[1]), dtype=np.float64)
    centroids[0] = vectors[rng.integers(n)]
    closest = np.full(n, np.inf)
    for j in range(1, c):
        diff = vectors - centroids[j - 1]
        np.minimum(closest, np.einsum("ij,ij->i", diff, diff), out=closest)
        total = closest.sum()
        if total <= 0:
            centroids[j] = vectors[rng.integers(n)]
            continue
        r = rng.random() * total
        centroids[j] = vectors[min(np.searchsorted(np.cumsum(closest), r), n - 1)]

    trace: list[float] = []
    labels = None
    for _ in range(max(1, iters)):
        labels, sq = _sq_dists_to_centroids(vectors, centroids)
        trace.append(float(sq.sum()))
        for j in range(c):
            members = labels == j
            if members.any():
                centroids[j] = vectors[members].mean(axis=0)
            else:
                centroids[j] = vectors[np.argmax(sq)]
                sq = sq.copy()
                sq[np.argmax(sq)] = 0.0
    return KMeansModel(centroids=centroids, iters=iters, seed=seed,
                       objective_trace=tuple(trace))


# -- product quantization ---------------------------------------------------

@dataclass(frozen=True)
class PqSpec:
    s: int = 8
    c_sub: int = 256
    iters: int = 25


@dataclass(frozen=True)
class PqCodebook:
    codebooks: np.ndarray  # float64 (s, c_sub, d/s)
    seed: int

    @property
    def s(self) -> int:
        return self.codebooks.shape[0]

    @property
    def c_sub(self) -> int:
        return self.codebooks.shape[1]

    @property
    def d(self) -> int:
        return self.codebooks.shape[0] * self.codebooks.shape[2]


def pq_train(vectors: np.ndarray, s: int, c_sub: int, iters: int = 25,
             seed: int = 0) -> PqCodebook:
    vectors = np.asarray(vectors, dtype=np.float64)
    d = vectors.shape[1]
    if d % s != 0:
        raise ValueError(f"s={s} must divide d={d}")
    if c_sub > 256:
        raise ValueError("c_sub must fit one byte (<= 256)")
    sub_d = d // s
    sub_seeds = np.random.SeedSequence(seed).generate_state(s)
    books = np.empty((s, c_sub, sub_d), dtype=np.float64)
    for j in range(s):
        sub = vectors[:, j * sub_d:(j + 1) * sub_d]
        books[j] = kmeans_train(sub, c_sub, iters, int(sub_seeds[j])).centroids
    return PqCodebook(codebooks=books, seed=seed)


def pq_encode_many(codebook: PqCodebook, vectors: np.ndarray) -> np.ndarray:
    vectors = np.asarray(vectors, dtype=np.float64)
    n = vectors.shape[0]
    s = codebook.s
    sub_d = codebook.d // s
    codes = np.empty((n, s), dtype=np.uint8)
    for j in range(s):
        sub = vectors[:, j * sub_d:(j + 1) * sub_d]
        codes[:, j] = _sq_dists_to_centroids(sub, codebook.codebooks[j])[0]
    return codes


def pq_encode(codebook: PqCodebook, vector: np.ndarray) -> np.ndarray:
    return pq_encode_many(codebook, np.asarray(vector)[None, :])[0]


def pq_decode(codebook: PqCodebook, code: np.ndarray) -> np.ndarray:
    parts = [codebook.codebooks[j, int(code[j])] for j in range(codebook.s)]
    return np.concatenate(parts)


def adc_table(codebook: PqCodebook, q: np.ndarray) -> np.ndarray:
    """Per-subspace squared distances from the query to every codeword."""
    q = np.asarray(q, dtype=np.float64)
    s = codebook.s
    sub_d = codebook.d // s
    table = np.empty((s, codebook.c_sub), dtype=np.float64)
    for j in range(s):
        diff = codebook.codebooks[j] - q[j * sub_d:(j + 1) * sub_d]
        table[j] = np.einsum("ij,ij->i", diff, diff)
    return table


def adc_distance(table: np.ndarray, code: np.ndarray) -> float:
    return float(np.sqrt(sum(table[j, int(code[j])] for j in range(table.shape[0]))))


def adc_distance_many(table: np.ndarray, codes: np.ndarray) -> np.ndarray:
    s = table.shape[0]
    acc = table[0, codes[:, 0]].copy()
    for j in range(1, s):
        acc += table[j, codes[:, j]]
    return np.sqrt(acc)


# -- inverted file -----------------------------------------------------------

@dataclass
class IvfIndex:
    dataset: Dataset
    model: KMeansModel
    lists: list[np.ndarray]          # per-cluster sorted id arrays
    assignments: np.ndarray          # int64 (n,)
    codebook: PqCodebook | None
    codes: np.ndarray | None         # uint8 (n, s), id-ordered
    store_raw: bool

    @property
    def c(self) -> int:
        return self.model.c


def build_ivf(dataset: Dataset, c: int, iters: int = 25, seed: int = 0,
              pq: PqSpec | None = None, store_raw: bool = True) -> IvfIndex:
    model = kmeans_train(dataset.vectors, c, iters, seed)
    assignments = model.assign(dataset.vectors)
    lists = [np.nonzero(assignments == j)[0].astype(np.int64) for j in range(c)]
    codebook = codes = None
    if pq is not None:
        codebook = pq_train(dataset.vectors, pq.s, pq.c_sub, pq.iters, seed)
        codes = pq_encode_many(codebook, dataset.vectors)
    return IvfIndex(dataset=dataset, model=model, lists=lists,
                    assignments=assignments, codebook=codebook, codes=codes,
                    store_raw=store_raw)


def _nearest_clusters(index: IvfIndex, q: np.ndarray, w: int) -> np.ndarray:
    diff = index.model.centroids - np.asarray(q, dtype=np.float64)
    d2 = np.einsum("ij,ij->i", diff, diff)
    order = np.lexsort((np.arange(index.c), d2))
    return order[:w]


def ivf_query(index: IvfIndex, q: np.ndarray, k: int, w: int) -> KnnResult:
    """Scan members of the w nearest clusters; exact distances when raw
    vectors are stored, asymmetric code distances otherwise."""
    if not (1 <= w <= index.c):
        raise ValueError(f"need 1 <= w <= {index.c}, got {w}")
    probe = _nearest_clusters(index, q, w)
    ids = np.concatenate([index.lists[j] for j in probe]) if probe.size else \
        np.empty(0, dtype=np.int64)
    if ids.size == 0:
        return KnnResult.empty()
    if index.store_raw:
        return knn_over_ids(index.dataset, np.asarray(q, dtype=np.float64), k, ids)
    if index.codes is None:
        raise ValueError("index stores neither raw vectors nor codes")
    table = adc_table(index.codebook, q)
    return KnnResult.from_arrays(ids, adc_distance_many(table, index.codes[ids]), k)


def rii_query(index: IvfIndex, q: np.ndarray, k: int, matching: np.ndarray,
              threshold: float, w: int,
              rerank: int | None = None) -> KnnResult:
    """Selectivity-switched filtered query over PQ codes.

    Below the threshold the matching ids are scanned linearly with
    asymmetric code distances (the codes are contiguous in id order);
    otherwise the w nearest clusters are probed and only members present
    in the matching set are scored. With ``rerank``, the top candidates by
    code distance are re-scored against raw vectors.
    """
    if index.codes is None or index.codebook is None:
        raise ValueError("rii_query requires an index built with PQ codes")
    matching = np.asarray(matching, dtype=np.int64)
    if matching.size == 0:
        return KnnResult.empty()
    n = index.dataset.n
    if matching.size / n < threshold:
        cand = matching
    else:
        in_set = np.zeros(n, dtype=bool)
        in_set[matching] = True
        probe = _nearest_clusters(index, q, w)
        parts = [index.lists[j][in_set[index.lists[j]]] for j in probe]
        cand = np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)
    if cand.size == 0:
        return KnnResult.empty()
    table = adc_table(index.codebook, q)
    approx = adc_distance_many(table, index.codes[cand])
    if rerank is None:
        return KnnResult.from_arrays(cand, approx, k)
    keep = KnnResult.from_arrays(cand, approx, max(k, rerank))
    ids = np.asarray(keep.ids, dtype=np.int64)
    return knn_over_ids(index.dataset, np.asarray(q, dtype=np.float64), k, ids)


# -- cluster + attribute-frequency-tree index -------------------------------

@dataclass(frozen=True)
class AftLevel:
    token: str
    ids: np.ndarray  # sorted ids holding exactly this token


@dataclass(frozen=True)
class AttributeFrequencyTree:
    """Chain of (most frequent remaining token, bucket) levels plus the
    terminal remainder bucket."""

    levels: tuple[AftLevel, ...]
    terminal: np.ndarray

    def extract(self, token: str, values: list) -> np.ndarray:
        """Ids in this tree whose attribute equals token. Level buckets are
        returned directly; the terminal bucket is scanned."""
        for level in self.levels:
            if level.token == token:
                return level.ids
        if self.terminal.size == 0:
            return self.terminal
        mask = np.array([values[i] == token for i in self.terminal], dtype=bool)
        return self.terminal[mask]


@dataclass
class CapsIndex:
    dataset: Dataset
    column: str
    model: KMeansModel
    lists: list[np.ndarray]
    afts: list[AttributeFrequencyTree]
    max_depth: int

    @property
    def B(self) -> int:
        return self.model.c


def _build_aft(ids: np.ndarray, values: list, max_depth: int) -> AttributeFrequencyTree:
    levels: list[AftLevel] = []
    remaining = ids
    for _ in range(max_depth):
        if remaining.size == 0:
            break
        counts = Counter(values[i] for i in remaining)
        # ties on frequency break lexicographically
        token = min(counts, key=lambda t: (-counts[t], t))
        mask = np.array([values[i] == token for i in remaining], dtype=bool)
        levels.append(AftLevel(token=token, ids=remaining[mask]))
        remaining = remaining[~mask]
    return AttributeFrequencyTree(levels=tuple(levels), terminal=remaining)


def build_caps(dataset: Dataset, column: str, B: int, max_depth: int = 8,
               iters: int = 25, seed: int = 0) -> CapsIndex:
    col = dataset.schema.index_of(column)
    if dataset.schema.columns[col].kind != UNORDERED:
        raise SchemaError(f"caps index requires an unordered column, got "
                          f"{dataset.schema.columns[col].kind!r}")
    if B < 1:
        raise ValueError("B must be >= 1")
    model = kmeans_train(dataset.vectors, B, iters, seed)
    assignments = model.assign(dataset.vectors)
    values = dataset.attributes[col]
    lists = []
    afts = []
    for j in range(B):
        ids = np.nonzero(assignments == j)[0].astype(np.int64)
        lists.append(ids)
        afts.append(_build_aft(ids, values, max_depth))
    return CapsIndex(dataset=dataset, column=column, model=model,
                     lists=lists, afts=afts, max_depth=max_depth)


def caps_query(index: CapsIndex, query: Query, w: int) -> KnnResult:
    """Probe the w nearest clusters, pull token-matching ids out of each
    cluster's attribute tree, then run exact search over the union."""
    flt = query.filter
    if not isinstance(flt, ExactMatch) or flt.column != index.column:
        raise ValueError("caps_query requires a single exact-match filter "
                         f"on column {index.column!r}")
    if not (1 <= w <= index.B):
        raise ValueError(f"need 1 <= w <= {index.B}, got {w}")
    col = index.dataset.schema.index_of(index.column)
    values = index.dataset.attributes[col]
    diff = index.model.centroids - query.vector
    d2 = np.einsum("ij,ij->i", diff, diff)
    probe = np.lexsort((np.arange(index.B), d2))[:w]
    parts = [index.afts[j].extract(flt.value, values) for j in probe]
    parts = [p for p in parts if p.size]
    if not parts:
        return KnnResult.empty()
    ids = np.concatenate(parts)
    return knn_over_ids(index.dataset, query.vector, query.k, ids)
