"""Label-constrained flat proximity graph for set-membership filters.

One bounded-degree graph covers all items. Every label occurring in the
dataset gets a medoid entry point carrying that label, and query traversal
expands only vertices whose label set intersects the queried labels, so
results satisfy the filter by construction.

Construction inserts items one by one with a beam search for candidates
and a label-aware pruning rule: neighbors sharing at least one label with
the node are preferred, with nearest non-sharing candidates admitted only
to reach half the degree bound, and alpha-pruning applied for diversity.
An optional repair pass then stitches together any label whose members are
not mutually reachable through label-carrying vertices; residual
violations are reported by :func:`label_reachability_report`.

Exact-match filters on unordered columns are served by the same structure
by treating each token as a singleton label set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .data import SET, UNORDERED, Dataset, SchemaError
from .oracle import KnnResult

_NO_MASK = np.empty(0, dtype=np.uint8)


def _item_labels(dataset: Dataset, col: int) -> list[frozenset]:
    kind = dataset.schema.columns[col].kind
    if kind == SET:
        return [v if isinstance(v, frozenset) else frozenset(v)
                for v in dataset.attributes[col]]
    if kind == UNORDERED:
        # singleton-label device: an exact-match filter is a set filter
        # over one-element label sets
        return [frozenset((v,)) for v in dataset.attributes[col]]
    raise SchemaError(f"label graph requires a set or unordered column, "
                      f"got {kind!r}")


def _medoid(vectors: np.ndarray, ids: np.ndarray, rng: np.random.Generator,
            exact_limit: int = 4096) -> int:
    """Item minimizing the summed distance to the group; groups larger than
    exact_limit are reduced to a seeded sample first."""
    if ids.shape[0] == 1:
        return int(ids[0])
    if ids.shape[0] > exact_limit:
        ids = np.sort(rng.choice(ids, size=exact_limit, replace=False))
    pts = vectors[ids].astype(np.float64)
    sq = np.einsum("ij,ij->i", pts, pts)
    sums = np.empty(ids.shape[0], dtype=np.float64)
    chunk = max(1, (1 << 22) // max(1, ids.shape[0]))
    for s in range(0, ids.shape[0], chunk):
        block = pts[s:s + chunk]
        d2 = sq[s:s + chunk, None] + sq[None, :] - 2.0 * (block @ pts.T)
        np.maximum(d2, 0.0, out=d2)
        sums[s:s + chunk] = np.sqrt(d2).sum(axis=1)
    best = np.lexsort((ids, sums))[0]
    return int(ids[best])


@dataclass
class LabelGraphIndex:
    dataset: Dataset
    column: str
    R: int
    L_build: int
    alpha: float
    seed: int
    adj: np.ndarray                    # int32 (n, R+1)
    deg: np.ndarray                    # int32 (n,)
    labels: list[frozenset]
    postings: dict[str, np.ndarray]    # label -> sorted id array
    entry_points: dict[str, int]       # label -> medoid id

    @property
    def n(self) -> int:
        return self.dataset.n

    def neighbors(self, u: int) -> list[int]:
        return [int(v) for v in self.adj[u, :self.deg[u]]]


class _Builder:
    def __init__(self, dataset: Dataset, col: int, R: int, L_build: int,
                 alpha: float, seed: int):
        self.vectors = dataset.vectors
        self.labels = _item_labels(dataset, col)
        self.R = R
        self.L_build = L_build
        self.alpha = alpha
        self.n = dataset.n
        self.adj = np.zeros((self.n, R + 1), dtype=np.int32)
        self.deg = np.zeros(self.n, dtype=np.int32)
        self._visited = np.zeros(self.n, dtype=np.int64)
        self._stamp = 0

    def _beam(self, q: np.ndarray, eps: np.ndarray, ef: int):
        self._stamp += 1
        return K.beam_dense(self.vectors, self.adj, self.deg, q, eps, ef,
                            _NO_MASK, _NO_MASK, 0, self._visited, self._stamp)

    def _select(self, node: int, cand_ids: np.ndarray,
                cand_d: np.ndarray) -> np.ndarray:
        """Label-preference split, then alpha-pruning within the kept set."""
        node_labels = self.labels[node]
        shared = np.array([not node_labels.isdisjoint(self.labels[int(c)])
                           for c in cand_ids], dtype=bool)
        eligible = cand_ids[shared]
        elig_d = cand_d[shared]
        need = self.R // 2 - eligible.shape[0]
        if need > 0:
            extra = cand_ids[~shared][:need]
            extra_d = cand_d[~shared][:need]
            merged = np.concatenate([eligible, extra])
            merged_d = np.concatenate([elig_d, extra_d])
            order = np.lexsort((merged, merged_d))
            eligible, elig_d = merged[order], merged_d[order]
        return K.select_neighbors(self.vectors, eligible, elig_d,
                                  np.int64(self.R), False, self.alpha)

    def insert(self, node: int) -> None:
        if node == 0:
            return
        q = self.vectors[node].astype(np.float64)
        eps = np.array([0], dtype=np.int64)
        cand_ids, cand_d = self._beam(q, eps, self.L_build)
        sel = self._select(node, cand_ids, cand_d)
        self.adj[node, :sel.shape[0]] = sel
        self.deg[node] = sel.shape[0]
        for v in sel:
            v = int(v)
            self.adj[v, self.deg[v]] = node
            self.deg[v] += 1
            if self.deg[v] > self.R:
                self._reprune(v)

    def _reprune(self, v: int) -> None:
        row = self.adj[v, :self.deg[v]].astype(np.int64)
        dists = K.dists_to_point(self.vectors, row, np.int64(v))
        order = np.lexsort((row, dists))
        kept = self._select(v, row[order], dists[order])
        self.adj[v, :kept.shape[0]] = kept
        self.deg[v] = kept.shape[0]

    def add_edge(self, u: int, v: int, protect: set[int]) -> None:
        """Repair edge; evicts the farthest neighbor that shares no label
        with u when the list is full (such edges sit in no label subgraph)."""
        row = self.adj[u, :self.deg[u]]
        if v in row:
            return
        if self.deg[u] <= self.R - 1:
            self.adj[u, self.deg[u]] = v
            self.deg[u] += 1
            return
        row = row.astype(np.int64)
        dists = K.dists_to_point(self.vectors, row, np.int64(u))
        u_labels = self.labels[u]
        unshared = np.array([u_labels.isdisjoint(self.labels[int(x)])
                             for x in row], dtype=bool)
        protected = np.array([int(x) in protect for x in row], dtype=bool)
        pool = unshared & ~protected
        if not pool.any():
            pool = ~protected
        if not pool.any():
            return
        sub = np.nonzero(pool)[0]
        victim = sub[np.lexsort((row[sub], dists[sub]))[-1]]
        self.adj[u, victim] = v


def _label_components(index_adj: np.ndarray, index_deg: np.ndarray,
                      member_set: set[int], start: int) -> set[int]:
    """Members reachable from start through member-only vertices."""
    seen = {start}
    stack = [start]
    while stack:
        u = stack.pop()
        for s in range(index_deg[u]):
            v = int(index_adj[u, s])
            if v in member_set and v not in seen:
                seen.add(v)
                stack.append(v)
    return seen


def build_label_graph(dataset: Dataset, column: str, R: int = 32,
                      L_build: int = 64, alpha: float = 1.2, seed: int = 0,
                      connect_labels: bool = True) -> LabelGraphIndex:
    if R < 4:
        raise ValueError("R must be >= 4")
    col = dataset.schema.index_of(column)
    builder = _Builder(dataset, col, R, L_build, alpha, seed)
    for i in range(dataset.n):
        builder.insert(i)

    postings: dict[str, list[int]] = {}
    for i, labs in enumerate(builder.labels):
        for lab in labs:
            postings.setdefault(lab, []).append(i)
    posting_arrays = {lab: np.asarray(ids, dtype=np.int64)
                      for lab, ids in postings.items()}

    rng = np.random.default_rng(seed)
    entry_points = {}
    for lab in sorted(posting_arrays):
        entry_points[lab] = _medoid(dataset.vectors, posting_arrays[lab], rng)

    index = LabelGraphIndex(dataset=dataset, column=column, R=R,
                            L_build=L_build, alpha=alpha, seed=seed,
                            adj=builder.adj, deg=builder.deg,
                            labels=builder.labels, postings=posting_arrays,
                            entry_points=entry_points)
    if connect_labels:
        _stitch_labels(index, builder)
    return index


def _stitch_labels(index: LabelGraphIndex, builder: _Builder,
                   max_rounds: int = 20) -> None:
    """Add nearest cross-component edges until every label's members are
    reachable from the label's entry point through label-carrying vertices."""
    vectors = index.dataset.vectors
    for _ in range(max_rounds):
        report = label_reachability_report(index)
        if not report:
            return
        for lab in sorted(report):
            members = index.postings[lab]
            member_set = set(int(x) for x in members)
            entry = index.entry_points[lab]
            reached = _label_components(index.adj, index.deg, member_set, entry)
            missing = sorted(member_set - reached)
            while missing:
                comp = _label_components(index.adj, index.deg, member_set,
                                         missing[0])
                comp_ids = np.asarray(sorted(comp), dtype=np.int64)
                reach_ids = np.asarray(sorted(reached), dtype=np.int64)
                diff = (vectors[comp_ids][:, None, :].astype(np.float64)
                        - vectors[reach_ids][None, :, :])
                d2 = np.einsum("ijk,ijk->ij", diff, diff)
                flat = int(np.argmin(d2))
                u = int(comp_ids[flat // reach_ids.shape[0]])
                v = int(reach_ids[flat % reach_ids.shape[0]])
                builder.add_edge(u, v, protect={v})
                builder.add_edge(v, u, protect={u})
                reached |= comp
                missing = sorted(member_set - reached)


def label_reachability_report(index: LabelGraphIndex) -> dict[str, list[int]]:
    """Labels whose members are not all reachable from the label's entry
    point via label-carrying vertices; empty when the invariant holds."""
    report: dict[str, list[int]] = {}
    for lab, members in index.postings.items():
        member_set = set(int(x) for x in members)
        reached = _label_components(index.adj, index.deg, member_set,
                                    index.entry_points[lab])
        missing = sorted(member_set - reached)
        if missing:
            report[lab] = missing
    return report


def _masked_query(index: LabelGraphIndex, q: np.ndarray, k: int, ef: int,
                  mask: np.ndarray, seeds: np.ndarray) -> KnnResult:
    visited = np.zeros(index.n, dtype=np.int64)
    ids, dists = K.beam_dense(index.dataset.vectors, index.adj, index.deg,
                              np.asarray(q, dtype=np.float64), seeds, ef,
                              mask, _NO_MASK, 0, visited, 1)
    return KnnResult(tuple(int(i) for i in ids[:k]),
                     tuple(float(x) for x in dists[:k]))


def label_query(index: LabelGraphIndex, q: np.ndarray, k: int, ef: int,
                label: str) -> KnnResult:
    """Beam search from the label's entry point, expanding only vertices
    carrying the label. An unknown label yields an empty result."""
    if ef < k:
        raise ValueError(f"ef={ef} must be >= k={k}")
    members = index.postings.get(label)
    if members is None:
        return KnnResult.empty()
    mask = np.zeros(index.n, dtype=np.uint8)
    mask[members] = 1
    seeds = np.array([index.entry_points[label]], dtype=np.int64)
    return _masked_query(index, q, k, ef, mask, seeds)


def label_multi_query(index: LabelGraphIndex, q: np.ndarray, k: int, ef: int,
                      labels: list[str]) -> KnnResult:
    """Match items carrying at least one of the given labels, starting from
    all their entry points."""
    if ef < k:
        raise ValueError(f"ef={ef} must be >= k={k}")
    if not labels:
        raise ValueError("labels must be non-empty")
    known = [lab for lab in labels if lab in index.postings]
    if not known:
        return KnnResult.empty()
    mask = np.zeros(index.n, dtype=np.uint8)
    for lab in known:
        mask[index.postings[lab]] = 1
    seeds = np.array(sorted({index.entry_points[lab] for lab in known}),
                     dtype=np.int64)
    return _masked_query(index, q, k, ef, mask, seeds)
