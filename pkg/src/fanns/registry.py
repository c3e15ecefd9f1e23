"""Uniform construction and query dispatch for every index method.

Each method builds a :class:`BuiltIndex` whose ``search(query, width)``
runs one query at the given search width. Width semantics depend on
``width_kind``: "ef" widths are beam widths (must be >= k), "probe"
widths are cluster counts (clamped to [1, c]), "none" methods ignore the
width entirely.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import quantization as Q
from .bench import peak_rss_bytes
from .data import SET, UNORDERED, Dataset, Query
from .filters import ExactMatch, Or, Range, SetContains
from .hnsw import (HnswParams, build_hnsw, search_induced, search_unfiltered,
                   search_visit_all)
from .labelgraph import build_label_graph, label_multi_query, label_query
from .oracle import KnnResult
from .rangeindex import (build_segment_graph, build_segment_tree,
                         segment_graph_query_range, segment_tree_query)
from .strategies import (RouterConfig, afanns_query_fused,
                         build_attribute_indexes, matching_ids,
                         post_filter_query, pre_filter_query, route_and_query)

EM_F, RANGE_F, EMIS_F, NONE_F = "em", "range", "emis", "none"


@dataclass
class BuiltIndex:
    method: str
    width_kind: str
    params: dict
    search: Callable[[Query, int], KnnResult]
    index_bytes: int = 0
    build_seconds: float = 0.0
    peak_rss: int = 0
    name: str = ""

    def __post_init__(self) -> None:
        if not self.name:
            self.name = self.method


@dataclass(frozen=True)
class MethodSpec:
    name: str
    families: tuple[str, ...]
    width_kind: str
    defaults: dict
    builder: Callable[[Dataset, dict], tuple[Callable, int]]


def _hnsw_params(params: dict) -> HnswParams:
    return HnswParams(M=int(params.get("M", 16)),
                      ef_construction=int(params.get("ef_construction", 100)),
                      gamma=float(params.get("gamma", 1.0)),
                      m_beta=params.get("m_beta"),
                      seed=int(params.get("seed", 0)))


def _graph_bytes(graph) -> int:
    total = graph.levels.nbytes
    for adj, deg in graph.layers:
        total += adj.nbytes + deg.nbytes
    return total


def _column_of_kind(dataset: Dataset, kind: str, params: dict) -> str:
    name = params.get("column")
    if name:
        return name
    for col in dataset.schema:
        if col.kind == kind:
            return col.name
    raise ValueError(f"dataset has no {kind} column")


# -- builders ----------------------------------------------------------------

def _build_pre(dataset: Dataset, params: dict):
    indexes = build_attribute_indexes(dataset)

    def search(query: Query, width: int) -> KnnResult:
        return pre_filter_query(dataset, indexes, query)

    size = sum(ids.nbytes for post in
               (*indexes.unordered.values(), *indexes.sets.values())
               for ids in post.values())
    size += sum(v.nbytes + i.nbytes for v, i in indexes.ordered.values())
    return search, size


def _build_hnsw_mode(mode: str):
    def build(dataset: Dataset, params: dict):
        index = build_hnsw(dataset, _hnsw_params(params))
        multiplier = int(params.get("initial_multiplier", 2))

        def search(query: Query, width: int) -> KnnResult:
            if mode == "plain":
                return search_unfiltered(index, query.vector, query.k, width)
            if mode == "visit-all":
                return search_visit_all(index, query, width)
            if mode == "induced":
                return search_induced(index, query, width)
            return post_filter_query(index, query, width, multiplier)

        return search, _graph_bytes(index.graph)
    return build


def _build_segment_tree(dataset: Dataset, params: dict):
    column = _column_of_kind(dataset, "ordered", params)
    index = build_segment_tree(dataset, column, int(params.get("beta", 2)),
                               _hnsw_params(params))

    def search(query: Query, width: int) -> KnnResult:
        return segment_tree_query(index, query, width)

    size = sum(_graph_bytes(node.graph) for node in index.nodes)
    return search, size


def _build_segment_graph(dataset: Dataset, params: dict):
    column = _column_of_kind(dataset, "ordered", params)
    index = build_segment_graph(dataset, column, _hnsw_params(params))

    def search(query: Query, width: int) -> KnnResult:
        flt = query.filter
        if not isinstance(flt, Range) or flt.column != column:
            raise ValueError("segment-graph serves single range filters "
                             f"on column {column!r}")
        return segment_graph_query_range(index, query.vector, query.k,
                                         width, flt.low, flt.high)

    size = sum(ip.nbytes + nb.nbytes + b.nbytes + d.nbytes
               for ip, nb, b, d in index.csr_layers)
    return search, size


def _build_label_graph(dataset: Dataset, params: dict):
    name = params.get("column")
    if not name:
        for col in dataset.schema:
            if col.kind in (SET, UNORDERED):
                name = col.name
                break
    if not name:
        raise ValueError("dataset has no set or unordered column")
    index = build_label_graph(
        dataset, name, R=int(params.get("R", 32)),
        L_build=int(params.get("L_build", 64)),
        alpha=float(params.get("alpha", 1.2)),
        seed=int(params.get("seed", 0)),
        connect_labels=bool(params.get("connect_labels", True)))

    def search(query: Query, width: int) -> KnnResult:
        flt = query.filter
        if isinstance(flt, SetContains) and flt.column == name:
            return label_query(index, query.vector, query.k, width, flt.token)
        if isinstance(flt, ExactMatch) and flt.column == name:
            return label_query(index, query.vector, query.k, width,
                               str(flt.value))
        if isinstance(flt, Or) and all(
                isinstance(p, SetContains) and p.column == name
                for p in flt.parts):
            return label_multi_query(index, query.vector, query.k, width,
                                     [p.token for p in flt.parts])
        raise ValueError("label-graph serves set-contains filters (or "
                         f"disjunctions of them) on column {name!r}")

    return search, index.adj.nbytes + index.deg.nbytes


def _build_ivf(dataset: Dataset, params: dict):
    pq = None
    if params.get("pq"):
        raw = params["pq"]
        pq = Q.PqSpec(s=int(raw.get("s", 8)), c_sub=int(raw.get("c_sub", 256)),
                      iters=int(raw.get("iters", 25)))
    index = Q.build_ivf(dataset, c=int(params.get("c", 64)),
                        iters=int(params.get("iters", 25)),
                        seed=int(params.get("seed", 0)), pq=pq,
                        store_raw=bool(params.get("store_raw", True)))

    def search(query: Query, width: int) -> KnnResult:
        w = min(max(1, width), index.c)
        return Q.ivf_query(index, query.vector, query.k, w)

    size = index.model.centroids.nbytes + sum(l.nbytes for l in index.lists)
    if index.codes is not None:
        size += index.codes.nbytes + index.codebook.codebooks.nbytes
    return search, size


def _build_rii(dataset: Dataset, params: dict):
    pq = Q.PqSpec(s=int(params.get("s", 8)),
                  c_sub=int(params.get("c_sub", 256)),
                  iters=int(params.get("iters", 25)))
    c = int(params.get("c", 64))
    index = Q.build_ivf(dataset, c=c, iters=int(params.get("iters", 25)),
                        seed=int(params.get("seed", 0)), pq=pq)
    indexes = build_attribute_indexes(dataset)
    threshold = params.get("threshold")
    threshold = 1.0 / c if threshold is None else float(threshold)
    rerank = params.get("rerank")

    def search(query: Query, width: int) -> KnnResult:
        if query.filter is None:
            ids = np.arange(dataset.n, dtype=np.int64)
        else:
            ids = matching_ids(indexes, query.filter)
        w = min(max(1, width), index.c)
        return Q.rii_query(index, query.vector, query.k, ids, threshold, w,
                           rerank=rerank)

    size = (index.model.centroids.nbytes + index.codes.nbytes
            + index.codebook.codebooks.nbytes
            + sum(l.nbytes for l in index.lists))
    return search, size


def _build_caps(dataset: Dataset, params: dict):
    column = _column_of_kind(dataset, "unordered", params)
    index = Q.build_caps(dataset, column, B=int(params.get("B", 64)),
                         max_depth=int(params.get("max_depth", 8)),
                         iters=int(params.get("iters", 25)),
                         seed=int(params.get("seed", 0)))

    def search(query: Query, width: int) -> KnnResult:
        w = min(max(1, width), index.B)
        return Q.caps_query(index, query, w)

    size = index.model.centroids.nbytes
    size += sum(l.nbytes for l in index.lists)
    for aft in index.afts:
        size += aft.terminal.nbytes + sum(lv.ids.nbytes for lv in aft.levels)
    return search, size


def _build_fused(dataset: Dataset, params: dict):
    weight = float(params.get("weight", 1.0))

    def search(query: Query, width: int) -> KnnResult:
        return afanns_query_fused(dataset, query, query.k, weight)

    return search, 0


def _build_router(dataset: Dataset, params: dict):
    indexes = build_attribute_indexes(dataset)
    index = build_hnsw(dataset, _hnsw_params(params))
    config = RouterConfig(
        low_threshold=float(params.get("low_threshold", 0.01)),
        high_threshold=float(params.get("high_threshold", 0.5)))

    def search(query: Query, width: int) -> KnnResult:
        result, _ = route_and_query(dataset, indexes, index, query, width,
                                    config)
        return result

    return search, _graph_bytes(index.graph)


_HNSW_DEFAULTS = {"M": 16, "ef_construction": 100, "gamma": 1.0,
                  "m_beta": None, "seed": 0}

METHODS: dict[str, MethodSpec] = {
    "pre": MethodSpec("pre", (EM_F, RANGE_F, EMIS_F), "none", {}, _build_pre),
    "post": MethodSpec("post", (EM_F, RANGE_F, EMIS_F), "ef",
                       {**_HNSW_DEFAULTS, "initial_multiplier": 2},
                       _build_hnsw_mode("post")),
    "hnsw": MethodSpec("hnsw", (NONE_F,), "ef", dict(_HNSW_DEFAULTS),
                       _build_hnsw_mode("plain")),
    "hnsw-visit-all": MethodSpec("hnsw-visit-all", (EM_F, RANGE_F, EMIS_F),
                                 "ef", dict(_HNSW_DEFAULTS),
                                 _build_hnsw_mode("visit-all")),
    "hnsw-induced": MethodSpec("hnsw-induced", (EM_F, RANGE_F, EMIS_F), "ef",
                               {**_HNSW_DEFAULTS, "gamma": 2.0},
                               _build_hnsw_mode("induced")),
    "segment-tree": MethodSpec("segment-tree", (RANGE_F,), "ef",
                               {**_HNSW_DEFAULTS, "beta": 2, "column": None},
                               _build_segment_tree),
    "segment-graph": MethodSpec("segment-graph", (RANGE_F,), "ef",
                                {**_HNSW_DEFAULTS, "column": None},
                                _build_segment_graph),
    "label-graph": MethodSpec("label-graph", (EMIS_F, EM_F), "ef",
                              {"column": None, "R": 32, "L_build": 64,
                               "alpha": 1.2, "seed": 0},
                              _build_label_graph),
    "ivf": MethodSpec("ivf", (NONE_F,), "probe",
                      {"c": 64, "iters": 25, "seed": 0, "pq": None},
                      _build_ivf),
    "rii": MethodSpec("rii", (EM_F, RANGE_F, EMIS_F, NONE_F), "probe",
                      {"c": 64, "iters": 25, "seed": 0, "s": 8,
                       "c_sub": 256, "threshold": None, "rerank": None},
                      _build_rii),
    "caps": MethodSpec("caps", (EM_F,), "probe",
                       {"column": None, "B": 64, "max_depth": 8, "iters": 25,
                        "seed": 0}, _build_caps),
    "fused": MethodSpec("fused", (EM_F,), "none", {"weight": 1.0},
                        _build_fused),
    "router": MethodSpec("router", (EM_F, RANGE_F, EMIS_F), "ef",
                         {**_HNSW_DEFAULTS, "low_threshold": 0.01,
                          "high_threshold": 0.5}, _build_router),
}


def build_index(dataset: Dataset, method: str, params: dict | None = None,
                ) -> BuiltIndex:
    """Build one method over the dataset, measuring build time and the
    process RSS high-water mark around construction."""
    spec = METHODS.get(method)
    if spec is None:
        raise ValueError(f"unknown method {method!r}; "
                         f"known: {sorted(METHODS)}")
    merged = dict(spec.defaults)
    merged.update(params or {})
    t0 = time.perf_counter()
    search, size = spec.builder(dataset, merged)
    build_seconds = time.perf_counter() - t0
    return BuiltIndex(method=method, width_kind=spec.width_kind,
                      params=merged, search=search, index_bytes=size,
                      build_seconds=build_seconds, peak_rss=peak_rss_bytes())
