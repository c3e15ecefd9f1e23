"""Range-filter indexes over one ordered attribute.

Two structures:
  * :class:`SegmentTreeIndex`: a beta-branching tree over the items sorted
    by attribute value, with one proximity-graph sub-index per tree node.
    A range query searches a minimal node cover and merges the candidates.
  * :class:`SegmentGraphIndex`: a single layered graph built by inserting
    items in ascending attribute order, where every directed edge carries
    the validity interval [birth_rank, death_rank). Restricting traversal
    to edges whose interval contains a prefix length b reproduces the graph
    that plain incremental construction over the first b items would have
    produced, so one structure answers every upper-bounded range exactly as
    n separately built indexes would.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .data import ORDERED, Dataset, Query, SchemaError
from .filters import Range
from .hnsw import EdgeRecorder, HnswGraph, HnswParams
from .oracle import KnnResult, knn_over_ids


def _rank_order(dataset: Dataset, column: str) -> tuple[int, np.ndarray, np.ndarray]:
    col = dataset.schema.index_of(column)
    if dataset.schema.columns[col].kind != ORDERED:
        raise SchemaError(f"range indexes require an ordered column, "
                          f"got {dataset.schema.columns[col].kind!r}")
    values = dataset.ordered_values(col)
    ids = np.arange(dataset.n, dtype=np.int64)
    order = np.lexsort((ids, values))
    return col, order, values[order]


# -- segment tree ----------------------------------------------------------

@dataclass
class TreeNode:
    id: int
    level: int
    lo: int
    hi: int  # rank interval [lo, hi)
    graph: HnswGraph
    children: list["TreeNode"] = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.hi - self.lo


@dataclass
class SegmentTreeIndex:
    dataset: Dataset
    column: str
    beta: int
    params: HnswParams
    order: np.ndarray          # rank -> item id
    sorted_values: np.ndarray  # attribute values in rank order
    rank_vectors: np.ndarray   # vectors in rank order (shared by all nodes)
    root: TreeNode
    levels: list[list[TreeNode]]
    nodes: list[TreeNode]

    @property
    def depth(self) -> int:
        return len(self.levels) - 1


def build_segment_tree(dataset: Dataset, column: str, beta: int,
                       params: HnswParams) -> SegmentTreeIndex:
    """Tree of depth ceil(log_beta n); level l splits the sorted order into
    min(beta**l, n) near-equal contiguous segments, each carrying its own
    proximity graph over a view of the rank-ordered vector matrix."""
    if beta < 2:
        raise ValueError("beta must be >= 2")
    col, order, sorted_values = _rank_order(dataset, column)
    n = dataset.n
    rank_vectors = np.ascontiguousarray(dataset.vectors[order])

    depth = max(0, math.ceil(math.log(n) / math.log(beta))) if n > 1 else 0
    levels: list[list[TreeNode]] = []
    nodes: list[TreeNode] = []
    for level in range(depth + 1):
        segments = min(beta ** level, n)
        row: list[TreeNode] = []
        for j in range(segments):
            lo = (j * n) // segments
            hi = ((j + 1) * n) // segments
            if hi <= lo:
                continue
            graph = HnswGraph(rank_vectors[lo:hi], params)
            for i in range(hi - lo):
                graph.insert(i)
            node = TreeNode(id=len(nodes), level=level, lo=lo, hi=hi, graph=graph)
            nodes.append(node)
            row.append(node)
        levels.append(row)
    # children = next-level nodes nested inside the parent interval
    for level in range(depth):
        child_iter = iter(levels[level + 1])
        child = next(child_iter, None)
        for parent in levels[level]:
            while child is not None and child.hi <= parent.hi:
                if child.lo >= parent.lo:
                    parent.children.append(child)
                child = next(child_iter, None)
    return SegmentTreeIndex(dataset=dataset, column=column, beta=beta,
                            params=params, order=order,
                            sorted_values=sorted_values,
                            rank_vectors=rank_vectors, root=levels[0][0],
                            levels=levels, nodes=nodes)


def minimal_cover(index: SegmentTreeIndex, lo_rank: int,
                  hi_rank: int) -> list[TreeNode]:
    """Disjoint tree nodes whose intervals union to [lo_rank, hi_rank],
    using the deepest fully-contained ancestors."""
    n = index.dataset.n
    if not (0 <= lo_rank <= hi_rank < n):
        raise ValueError(f"rank range [{lo_rank}, {hi_rank}] out of [0, {n})")
    out: list[TreeNode] = []
    stack = [index.root]
    while stack:
        node = stack.pop()
        if node.lo >= lo_rank and node.hi <= hi_rank + 1:
            out.append(node)
            continue
        for child in node.children:
            if child.lo <= hi_rank and child.hi > lo_rank:
                stack.append(child)
    out.sort(key=lambda nd: nd.lo)
    return out


def segment_tree_query(index: SegmentTreeIndex, query: Query,
                       ef: int) -> KnnResult:
    """Search every cover node's graph and merge by (distance, item id)."""
    flt = query.filter
    if not isinstance(flt, Range) or flt.column != index.column:
        raise ValueError("segment_tree_query requires a single range filter "
                         f"on column {index.column!r}")
    if ef < query.k:
        raise ValueError(f"ef={ef} must be >= k={query.k}")
    lo = int(np.searchsorted(index.sorted_values, flt.low, side="left"))
    hi = int(np.searchsorted(index.sorted_values, flt.high, side="right")) - 1
    if lo > hi:
        return KnnResult.empty()
    ids: list[int] = []
    dists: list[float] = []
    for node in minimal_cover(index, lo, hi):
        res = node.graph.search(query.vector, query.k, ef)
        for local, dist in res.entries:
            ids.append(int(index.order[node.lo + local]))
            dists.append(dist)
    return KnnResult.from_arrays(np.asarray(ids, dtype=np.int64),
                                 np.asarray(dists, dtype=np.float64), query.k)


# -- segment graph ---------------------------------------------------------

@dataclass
class SegmentGraphIndex:
    dataset: Dataset
    column: str
    params: HnswParams
    order: np.ndarray          # rank -> item id
    sorted_values: np.ndarray
    rank_vectors: np.ndarray
    graph: HnswGraph           # final live graph (prefix n)
    csr_layers: list[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]
    entry_history: list[tuple[int, int]]

    @property
    def n(self) -> int:
        return self.dataset.n

    def prefix_size(self, upper_value: float) -> int:
        """Number of items with attribute value <= upper_value."""
        return int(np.searchsorted(self.sorted_values, upper_value, side="right"))

    def entry_for_prefix(self, b: int) -> int:
        ep = -1
        for rank, node in self.entry_history:
            if rank <= b:
                ep = node
            else:
                break
        return ep

    def restricted_adjacency(self, layer: int, node: int, b: int) -> list[int]:
        """Live neighbor list of a rank-node under prefix bound b, in edge
        creation order."""
        indptr, nbr, birth, death = self.csr_layers[layer]
        out = []
        for s in range(indptr[node], indptr[node + 1]):
            if birth[s] <= b < death[s]:
                out.append(int(nbr[s]))
        return out

    def archived_edge_count(self) -> int:
        return int(sum(layer[1].shape[0] for layer in self.csr_layers))

    def live_edge_count(self) -> int:
        return int(sum(deg.sum() for _, deg in self.graph.layers))


def build_segment_graph(dataset: Dataset, column: str,
                        params: HnswParams) -> SegmentGraphIndex:
    """Insert items in ascending (value, id) order, recording for every
    directed edge the insertion rank at which it appeared and, if pruned,
    the rank at which it disappeared. No edge is physically discarded."""
    col, order, sorted_values = _rank_order(dataset, column)
    rank_vectors = np.ascontiguousarray(dataset.vectors[order])
    recorder = EdgeRecorder()
    graph = HnswGraph(rank_vectors, params, recorder=recorder)
    for rank in range(dataset.n):
        graph.insert(rank)
    return SegmentGraphIndex(dataset=dataset, column=column, params=params,
                             order=order, sorted_values=sorted_values,
                             rank_vectors=rank_vectors, graph=graph,
                             csr_layers=recorder.finalize(dataset.n),
                             entry_history=list(graph.entry_history))


def segment_graph_query_leq(index: SegmentGraphIndex, q: np.ndarray, k: int,
                            ef: int, upper_value: float) -> KnnResult:
    """Top-k among items with attribute <= upper_value, traversing only
    edges whose validity interval contains the prefix length."""
    if ef < k:
        raise ValueError(f"ef={ef} must be >= k={k}")
    b = index.prefix_size(upper_value)
    if b == 0:
        return KnnResult.empty()
    q = np.asarray(q, dtype=np.float64)
    ep = index.entry_for_prefix(b)
    max_level = int(index.graph.levels[ep])
    visited = np.zeros(index.n, dtype=np.int64)
    eps = np.array([ep], dtype=np.int64)
    stamp = 1
    for layer in range(max_level, 0, -1):
        indptr, nbr, birth, death = index.csr_layers[layer]
        ids, _ = K.beam_csr(index.rank_vectors, indptr, nbr, birth, death,
                            q, eps, 1, b, visited, stamp)
        eps = ids[:1]
        stamp += 1
    indptr, nbr, birth, death = index.csr_layers[0]
    ids, dists = K.beam_csr(index.rank_vectors, indptr, nbr, birth, death,
                            q, eps, ef, b, visited, stamp)
    item_ids = index.order[ids]
    return KnnResult.from_arrays(item_ids, dists, k)


def segment_graph_query_range(index: SegmentGraphIndex, q: np.ndarray, k: int,
                              ef: int, low: float, high: float) -> KnnResult:
    """Serve an arbitrary range: the half-bounded path covers ranges with
    no effective lower bound; otherwise fall back to an exact scan of the
    rank window (two-sided segment graphs are out of scope)."""
    if low <= index.sorted_values[0]:
        return segment_graph_query_leq(index, q, k, ef, high)
    lo = int(np.searchsorted(index.sorted_values, low, side="left"))
    hi = int(np.searchsorted(index.sorted_values, high, side="right"))
    if hi <= lo:
        return KnnResult.empty()
    ids = index.order[lo:hi]
    return knn_over_ids(index.dataset, np.asarray(q, dtype=np.float64), k, ids)
