"""Layered proximity-graph index with a densification knob.

The graph is built by incremental insertion: greedy descent from the top
layer, an ef_construction-wide beam on each layer at or below the new
node's level, and diversity-based neighbor pruning. A ``gamma`` factor
of 1 gives the classic structure; larger values densify every adjacency
list, which keeps filtered traversal connected at lower selectivities.

Three query modes are provided:
  * :func:`search_unfiltered` ignores attributes entirely.
  * :func:`search_visit_all` traverses without restriction but admits only
    filter-matching vertices into the result set.
  * :func:`search_induced` traverses only the subgraph induced by matching
    vertices, supplementing two-hop neighbors where the induced lists get
    too sparse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .data import Dataset, Query
from .filters import matching_mask, validate_filter
from .oracle import KnnResult

_NO_MASK = np.empty(0, dtype=np.uint8)


@dataclass(frozen=True)
class HnswParams:
    M: int = 16
    ef_construction: int = 100
    gamma: float = 1.0
    m_beta: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.M < 2:
            raise ValueError("M must be >= 2")
        if self.ef_construction < self.M:
            raise ValueError("ef_construction must be >= M")
        if self.gamma < 1:
            raise ValueError("gamma must be >= 1")
        if self.m_beta is not None and not (1 <= self.m_beta <= 2 * self.M * self.gamma):
            raise ValueError("m_beta must lie in [1, 2*M*gamma]")

    def cap(self, layer: int) -> int:
        """Adjacency-list capacity: M*gamma on upper layers; layer 0 uses
        m_beta when set, otherwise 2*M*gamma."""
        if layer == 0:
            if self.m_beta is not None:
                return int(self.m_beta)
            return int(round(2 * self.M * self.gamma))
        return int(round(self.M * self.gamma))


class EdgeRecorder:
    """Tracks the insertion rank at which each directed edge appears and,
    if pruned, disappears. Ranks are 1-based; death n+1 means the edge
    survived construction. Edges born and pruned within the same insertion
    are dropped since no snapshot can observe them."""

    _ALIVE = -1

    def __init__(self) -> None:
        self.by_layer: list[dict[int, list[list[int]]]] = []
        self._pos: dict[tuple[int, int, int], int] = {}

    def ensure_layer(self, layer: int) -> None:
        while len(self.by_layer) <= layer:
            self.by_layer.append({})

    def on_add(self, layer: int, u: int, v: int, birth: int) -> None:
        records = self.by_layer[layer].setdefault(u, [])
        self._pos[(layer, u, v)] = len(records)
        records.append([v, birth, self._ALIVE])

    def on_remove(self, layer: int, u: int, v: int, death: int) -> None:
        idx = self._pos.pop((layer, u, v))
        rec = self.by_layer[layer][u][idx]
        rec[2] = death

    def alive_edges(self, layer: int, u: int, bound: int) -> list[int]:
        """Neighbors of u whose validity interval contains bound."""
        out = []
        for v, birth, death in self.by_layer[layer].get(u, ()):
            if birth <= bound and (death == self._ALIVE or death > bound):
                out.append(v)
        return out

    def finalize(self, n: int) -> list[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]:
        """Per-layer CSR arrays (indptr, neighbor, birth, death) with nodes
        in id order and edges in creation order; death sentinel n+1."""
        layers = []
        for by_node in self.by_layer:
            counts = np.zeros(n + 1, dtype=np.int64)
            for u, records in by_node.items():
                counts[u + 1] = sum(1 for r in records if r[1] != r[2])
            indptr = np.cumsum(counts)
            total = int(indptr[-1])
            nbr = np.empty(total, dtype=np.int32)
            birth = np.empty(total, dtype=np.int32)
            death = np.empty(total, dtype=np.int32)
            for u, records in by_node.items():
                at = indptr[u]
                for v, b, dth in records:
                    if b == dth:
                        continue
                    nbr[at] = v
                    birth[at] = b
                    death[at] = n + 1 if dth == self._ALIVE else dth
                    at += 1
            layers.append((indptr, nbr, birth, death))
        return layers


class HnswGraph:
    """Core layered graph over a fixed vector matrix.

    Vectors are referenced, not copied; node ids are row indices. Build is
    sequential and deterministic: level draws consume one RNG sample per
    insertion, in insertion order.
    """

    def __init__(self, vectors: np.ndarray, params: HnswParams,
                 recorder: EdgeRecorder | None = None):
        self.vectors = np.ascontiguousarray(vectors, dtype=np.float32)
        if self.vectors.ndim != 2 or self.vectors.shape[0] < 1:
            raise ValueError("vectors must be a non-empty (n, d) matrix")
        self.params = params
        n = self.vectors.shape[0]
        self.levels = np.full(n, -1, dtype=np.int32)
        self.layers: list[tuple[np.ndarray, np.ndarray]] = []
        self.entry_point = -1
        self.max_level = -1
        self.count = 0
        self.entry_history: list[tuple[int, int]] = []
        self.recorder = recorder
        self._rng = np.random.default_rng(params.seed)
        self._mult = 1.0 / math.log(params.M)
        self._visited = np.zeros(n, dtype=np.int64)
        self._stamp = 0

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    def _next_stamp(self) -> int:
        self._stamp += 1
        return self._stamp

    def _ensure_layer(self, level: int) -> None:
        while len(self.layers) <= level:
            cap = self.params.cap(len(self.layers))
            adj = np.zeros((self.n, cap + 1), dtype=np.int32)
            deg = np.zeros(self.n, dtype=np.int32)
            self.layers.append((adj, deg))
            if self.recorder is not None:
                self.recorder.ensure_layer(len(self.layers) - 1)

    def _draw_level(self) -> int:
        u = 1.0 - self._rng.random()
        return int(-math.log(u) * self._mult)

    def _beam(self, layer: int, q: np.ndarray, eps: np.ndarray, ef: int,
              expand_mask: np.ndarray = _NO_MASK,
              result_mask: np.ndarray = _NO_MASK,
              two_hop_m: int = 0,
              visited: np.ndarray | None = None,
              stamp: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        if visited is None:
            visited = self._visited
            stamp = self._next_stamp()
        adj, deg = self.layers[layer]
        return K.beam_dense(self.vectors, adj, deg, q, eps, ef,
                            expand_mask, result_mask, two_hop_m,
                            visited, stamp)

    def _descend(self, q: np.ndarray, to_level: int,
                 visited: np.ndarray | None = None,
                 stamp_base: int | None = None) -> int:
        """Greedy descent from the entry point down to to_level (exclusive
        of layers <= to_level); returns the best node seen."""
        ep = self.entry_point
        eps = np.empty(1, dtype=np.int64)
        for layer in range(self.max_level, to_level, -1):
            eps[0] = ep
            stamp = None if stamp_base is None else stamp_base + (self.max_level - layer)
            ids, _ = self._beam(layer, q, eps, 1, visited=visited, stamp=stamp)
            ep = int(ids[0])
        return ep

    def insert(self, node_id: int) -> None:
        """Insert the node for row node_id; rows must arrive exactly once,
        in whatever order the caller defines as insertion order."""
        level = self._draw_level()
        self.levels[node_id] = level
        self._ensure_layer(level)
        self.count += 1
        rank = self.count
        if self.entry_point < 0:
            self.entry_point = node_id
            self.max_level = level
            self.entry_history.append((rank, node_id))
            return

        q = self.vectors[node_id].astype(np.float64)
        ep = self._descend(q, to_level=level)
        eps = np.array([ep], dtype=np.int64)
        for layer in range(min(level, self.max_level), -1, -1):
            cand_ids, cand_d = self._beam(layer, q, eps,
                                          self.params.ef_construction)
            cap = self.params.cap(layer)
            sel = K.select_neighbors(self.vectors, cand_ids, cand_d,
                                     np.int64(cap), True, 1.0)
            adj, deg = self.layers[layer]
            adj[node_id, :sel.shape[0]] = sel
            deg[node_id] = sel.shape[0]
            if self.recorder is not None:
                for v in sel:
                    self.recorder.on_add(layer, node_id, int(v), rank)
            for v in sel:
                v = int(v)
                adj[v, deg[v]] = node_id
                deg[v] += 1
                if self.recorder is not None:
                    self.recorder.on_add(layer, v, node_id, rank)
                if deg[v] > cap:
                    self._reprune(layer, v, cap, rank)
            eps = cand_ids
        if level > self.max_level:
            self.entry_point = node_id
            self.max_level = level
            self.entry_history.append((rank, node_id))

    def _reprune(self, layer: int, v: int, cap: int, rank: int) -> None:
        adj, deg = self.layers[layer]
        row = adj[v, :deg[v]].astype(np.int64)
        dists = K.dists_to_point(self.vectors, row, np.int64(v))
        order = np.lexsort((row, dists))
        kept = K.select_neighbors(self.vectors, row[order], dists[order],
                                  np.int64(cap), True, 1.0)
        keep_mask = np.isin(row, kept)
        new_row = row[keep_mask]
        adj[v, :new_row.shape[0]] = new_row
        deg[v] = new_row.shape[0]
        if self.recorder is not None:
            for u in row[~keep_mask]:
                self.recorder.on_remove(layer, v, int(u), rank)

    # -- queries ----------------------------------------------------------

    def search(self, q: np.ndarray, k: int, ef: int,
               expand_mask: np.ndarray = _NO_MASK,
               result_mask: np.ndarray = _NO_MASK,
               two_hop_m: int = 0,
               seeds: np.ndarray | None = None) -> KnnResult:
        if ef < k:
            raise ValueError(f"ef={ef} must be >= k={k}")
        if self.count == 0:
            return KnnResult.empty()
        q = np.asarray(q, dtype=np.float64)
        visited = np.zeros(self.n, dtype=np.int64)
        if seeds is None:
            ep = self._descend(q, to_level=0, visited=visited, stamp_base=1)
            seeds = np.array([ep], dtype=np.int64)
        ids, dists = self._beam(0, q, seeds, ef, expand_mask, result_mask,
                                two_hop_m, visited=visited,
                                stamp=self.max_level + 2)
        return KnnResult(tuple(int(i) for i in ids[:k]),
                         tuple(float(x) for x in dists[:k]))

    def descend_to_layer0(self, q: np.ndarray) -> int:
        q = np.asarray(q, dtype=np.float64)
        visited = np.zeros(self.n, dtype=np.int64)
        return self._descend(q, to_level=0, visited=visited, stamp_base=1)

    def adjacency(self, layer: int, node: int) -> list[int]:
        adj, deg = self.layers[layer]
        return [int(x) for x in adj[node, :deg[node]]]

    def num_layers(self) -> int:
        return len(self.layers)


@dataclass
class HnswIndex:
    """HnswGraph bound to the dataset it indexes."""

    dataset: Dataset
    graph: HnswGraph
    params: HnswParams

    @property
    def n(self) -> int:
        return self.dataset.n


def build_hnsw(dataset: Dataset, params: HnswParams,
               recorder: EdgeRecorder | None = None) -> HnswIndex:
    if dataset.n < 1:
        raise ValueError("cannot build an index over an empty dataset")
    graph = HnswGraph(dataset.vectors, params, recorder=recorder)
    for i in range(dataset.n):
        graph.insert(i)
    return HnswIndex(dataset=dataset, graph=graph, params=params)


def search_unfiltered(index: HnswIndex, q: np.ndarray, k: int,
                      ef: int) -> KnnResult:
    """Approximate top-k with attributes ignored."""
    return index.graph.search(q, k, ef)


def search_visit_all(index: HnswIndex, query: Query, ef: int) -> KnnResult:
    """Traversal ranges over the whole graph; only vertices satisfying the
    query filter may enter the result set."""
    if query.filter is None:
        raise ValueError("search_visit_all requires a filter")
    validate_filter(query.filter, index.dataset.schema)
    mask = matching_mask(query.filter, index.dataset)
    if not mask.any():
        return KnnResult.empty()
    return index.graph.search(query.vector, query.k, ef,
                              result_mask=mask.astype(np.uint8))


def search_induced(index: HnswIndex, query: Query, ef: int) -> KnnResult:
    """Traversal expands only vertices satisfying the filter, with two-hop
    supplementation where the induced neighbor lists drop below M.

    If the descended entry point fails the filter, an unrestricted beam
    locates the nearest matching vertex, which then seeds the induced
    traversal.
    """
    if query.filter is None:
        raise ValueError("search_induced requires a filter")
    validate_filter(query.filter, index.dataset.schema)
    mask = matching_mask(query.filter, index.dataset)
    if not mask.any():
        return KnnResult.empty()
    graph = index.graph
    if graph.count == 0:
        return KnnResult.empty()
    mask8 = mask.astype(np.uint8)
    q = np.asarray(query.vector, dtype=np.float64)
    ep = graph.descend_to_layer0(q)
    if mask8[ep]:
        seeds = np.array([ep], dtype=np.int64)
    else:
        found = graph.search(q, 1, ef, result_mask=mask8,
                             seeds=np.array([ep], dtype=np.int64))
        if len(found) == 0:
            return KnnResult.empty()
        seeds = np.array([found.ids[0]], dtype=np.int64)
    return graph.search(q, query.k, ef, expand_mask=mask8,
                        two_hop_m=index.params.M, seeds=seeds)
