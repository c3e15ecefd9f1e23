"""File formats.

All binary formats are little-endian.

Vector file (fvecs-compatible): per record [int32 d][d x float32].

Attribute file: one JSON object per line, keys are schema column names,
set attributes as sorted JSON arrays of strings; the line number is the
item id.

Schema file: JSON list of {"name": ..., "kind": ...} objects; extra keys
(generator distribution knobs) are preserved but ignored here.

Ground-truth file: per query [int32 c][c x int32 ids][c x float32 dists],
where c is the result length.

Query file: one JSON object per line with "k", optional "filter" (the
filter grammar of :mod:`fanns.filters`), and either an inline "vector"
or a "vector_id" referencing a dataset item.

Index snapshots are versioned binary containers; the exact layouts are
documented next to their writers below.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .data import AttributeColumn, AttributeSchema, Dataset, Query
from .filters import filter_from_dict
from .hnsw import HnswGraph, HnswIndex, HnswParams
from .labelgraph import LabelGraphIndex
from .oracle import KnnResult
from .quantization import PqCodebook
from .rangeindex import SegmentGraphIndex

SET_KIND = "set"

HNSW_MAGIC = b"FXH1"
SEGGRAPH_MAGIC = b"FXS1"
LABEL_MAGIC = b"FXL1"
PQ_MAGIC = b"FXQ1"
SNAPSHOT_VERSION = 1


# -- vectors ----------------------------------------------------------------

def write_fvecs(path: str | Path, vectors: np.ndarray) -> None:
    vectors = np.asarray(vectors, dtype="<f4")
    n, d = vectors.shape
    out = np.empty((n, d + 1), dtype="<i4")
    out[:, 0] = d
    out[:, 1:] = vectors.view("<i4")
    out.tofile(path)


def read_fvecs(path: str | Path) -> np.ndarray:
    raw = np.fromfile(path, dtype="<i4")
    if raw.size == 0:
        return np.empty((0, 0), dtype=np.float32)
    d = int(raw[0])
    if d <= 0 or raw.size % (d + 1) != 0:
        raise ValueError(f"{path}: malformed fvecs file (d={d}, words={raw.size})")
    mat = raw.reshape(-1, d + 1)
    if not np.all(mat[:, 0] == d):
        raise ValueError(f"{path}: inconsistent record dimensions")
    return mat[:, 1:].copy().view("<f4")


# -- schema and attributes ----------------------------------------------------

def write_schema(path: str | Path, columns: list[dict]) -> None:
    Path(path).write_text(
        json.dumps(columns, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_schema(path: str | Path) -> tuple[AttributeSchema, list[dict]]:
    """Returns the core schema plus the raw per-column dicts (which may
    carry generator settings)."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    schema = AttributeSchema(tuple(
        AttributeColumn(c["name"], c["kind"]) for c in raw))
    return schema, raw


def write_attributes(path: str | Path, dataset: Dataset) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(dataset.n):
            row = {}
            for c, col in enumerate(dataset.schema):
                v = dataset.attributes[c][i]
                row[col.name] = sorted(v) if col.kind == SET_KIND else v
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_attributes(path: str | Path,
                    schema: AttributeSchema) -> list[list]:
    cols: list[list] = [[] for _ in schema]
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            for c, col in enumerate(schema):
                v = row[col.name]
                cols[c].append(frozenset(v) if col.kind == SET_KIND else v)
    return cols


def save_dataset(dirpath: str | Path, dataset: Dataset,
                 schema_raw: list[dict] | None = None) -> None:
    """Write vectors.fvecs, attributes.jsonl, and schema.json into a
    directory."""
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    write_fvecs(dirpath / "vectors.fvecs", dataset.vectors)
    write_attributes(dirpath / "attributes.jsonl", dataset)
    if schema_raw is None:
        schema_raw = [{"name": c.name, "kind": c.kind} for c in dataset.schema]
    write_schema(dirpath / "schema.json", schema_raw)


def load_dataset(dirpath: str | Path) -> Dataset:
    dirpath = Path(dirpath)
    schema, _ = read_schema(dirpath / "schema.json")
    vectors = read_fvecs(dirpath / "vectors.fvecs")
    attributes = read_attributes(dirpath / "attributes.jsonl", schema)
    return Dataset(schema, vectors, attributes)


# -- queries ------------------------------------------------------------------

def write_queries(path: str | Path, queries: list[Query]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for q in queries:
            row: dict = {"k": q.k, "vector": [float(x) for x in q.vector]}
            if q.filter is not None:
                row["filter"] = q.filter.to_dict()
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_queries(path: str | Path,
                 dataset: Dataset | None = None) -> list[Query]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            if "vector" in row:
                vec = np.asarray(row["vector"], dtype=np.float64)
            elif "vector_id" in row:
                if dataset is None:
                    raise ValueError("query uses vector_id but no dataset given")
                vec = dataset.vectors[int(row["vector_id"])].astype(np.float64)
            else:
                raise ValueError("query needs either vector or vector_id")
            flt = filter_from_dict(row["filter"]) if "filter" in row else None
            out.append(Query(vec, int(row["k"]), flt))
    return out


# -- ground truth -------------------------------------------------------------

def write_ground_truth(path: str | Path, results: list[KnnResult]) -> None:
    with open(path, "wb") as fh:
        for res in results:
            c = len(res)
            fh.write(struct.pack("<i", c))
            fh.write(np.asarray(res.ids, dtype="<i4").tobytes())
            fh.write(np.asarray(res.distances, dtype="<f4").tobytes())


def read_ground_truth(path: str | Path) -> list[KnnResult]:
    out = []
    data = Path(path).read_bytes()
    at = 0
    while at < len(data):
        (c,) = struct.unpack_from("<i", data, at)
        at += 4
        ids = np.frombuffer(data, dtype="<i4", count=c, offset=at)
        at += 4 * c
        dists = np.frombuffer(data, dtype="<f4", count=c, offset=at)
        at += 4 * c
        out.append(KnnResult(tuple(int(i) for i in ids),
                             tuple(float(x) for x in dists)))
    return out


# -- index snapshots ----------------------------------------------------------

def _write_arr(fh, arr: np.ndarray, dtype: str) -> None:
    arr = np.asarray(arr, dtype=dtype)
    fh.write(struct.pack("<q", arr.size))
    fh.write(arr.tobytes())


def _read_arr(fh, dtype: str) -> np.ndarray:
    (size,) = struct.unpack("<q", fh.read(8))
    itemsize = np.dtype(dtype).itemsize
    return np.frombuffer(fh.read(size * itemsize), dtype=dtype).copy()


def _write_params(fh, params: HnswParams) -> None:
    m_beta = -1 if params.m_beta is None else params.m_beta
    fh.write(struct.pack("<iiidq", params.M, params.ef_construction,
                         m_beta, params.gamma, params.seed))


def _read_params(fh) -> HnswParams:
    M, ef_c, m_beta, gamma, seed = struct.unpack("<iiidq", fh.read(28))
    return HnswParams(M=M, ef_construction=ef_c, gamma=gamma,
                      m_beta=None if m_beta < 0 else m_beta, seed=seed)


def _write_graph_body(fh, graph: HnswGraph) -> None:
    """Layout: params, n, d, entry, max_level, count, levels[n] i32,
    history pairs i64, num_layers i32, then per layer deg[n] i32 and the
    flattened live adjacency i32."""
    _write_params(fh, graph.params)
    fh.write(struct.pack("<iiiiq", graph.n, graph.vectors.shape[1],
                         graph.entry_point, graph.max_level, graph.count))
    _write_arr(fh, graph.levels, "<i4")
    history = np.asarray(graph.entry_history, dtype="<i8").reshape(-1)
    _write_arr(fh, history, "<i8")
    fh.write(struct.pack("<i", graph.num_layers()))
    for adj, deg in graph.layers:
        _write_arr(fh, deg, "<i4")
        flat = np.concatenate([adj[u, :deg[u]] for u in range(graph.n)]) \
            if deg.sum() else np.empty(0, dtype=np.int32)
        _write_arr(fh, flat, "<i4")


def _read_graph_body(fh, vectors: np.ndarray) -> HnswGraph:
    params = _read_params(fh)
    n, d, entry, max_level, count = struct.unpack("<iiiiq", fh.read(24))
    if vectors.shape != (n, d):
        raise ValueError(f"snapshot expects vectors ({n}, {d}), "
                         f"got {vectors.shape}")
    graph = HnswGraph(vectors, params)
    graph.levels = _read_arr(fh, "<i4").astype(np.int32)
    graph.entry_point = entry
    graph.max_level = max_level
    graph.count = count
    history = _read_arr(fh, "<i8")
    graph.entry_history = [(int(a), int(b))
                           for a, b in history.reshape(-1, 2)]
    (num_layers,) = struct.unpack("<i", fh.read(4))
    graph.layers = []
    for layer in range(num_layers):
        deg = _read_arr(fh, "<i4").astype(np.int32)
        flat = _read_arr(fh, "<i4").astype(np.int32)
        cap = graph.params.cap(layer)
        adj = np.zeros((n, cap + 1), dtype=np.int32)
        at = 0
        for u in range(n):
            adj[u, :deg[u]] = flat[at:at + deg[u]]
            at += deg[u]
        graph.layers.append((adj, deg))
    return graph


def save_hnsw(path: str | Path, index: HnswIndex) -> None:
    with open(path, "wb") as fh:
        fh.write(HNSW_MAGIC)
        fh.write(struct.pack("<i", SNAPSHOT_VERSION))
        _write_graph_body(fh, index.graph)


def load_hnsw(path: str | Path, dataset: Dataset) -> HnswIndex:
    with open(path, "rb") as fh:
        if fh.read(4) != HNSW_MAGIC:
            raise ValueError(f"{path}: not an hnsw snapshot")
        (version,) = struct.unpack("<i", fh.read(4))
        if version != SNAPSHOT_VERSION:
            raise ValueError(f"{path}: unsupported snapshot version {version}")
        graph = _read_graph_body(fh, dataset.vectors)
    return HnswIndex(dataset=dataset, graph=graph, params=graph.params)


def save_segment_graph(path: str | Path, index: SegmentGraphIndex) -> None:
    """HNSW container extended with the rank order, sorted attribute
    values, and per-layer edge archives carrying [birth][death] arrays."""
    with open(path, "wb") as fh:
        fh.write(SEGGRAPH_MAGIC)
        fh.write(struct.pack("<i", SNAPSHOT_VERSION))
        col = index.column.encode("utf-8")
        fh.write(struct.pack("<i", len(col)))
        fh.write(col)
        _write_arr(fh, index.order, "<i8")
        _write_arr(fh, index.sorted_values, "<f8")
        _write_graph_body(fh, index.graph)
        fh.write(struct.pack("<i", len(index.csr_layers)))
        for indptr, nbr, birth, death in index.csr_layers:
            _write_arr(fh, indptr, "<i8")
            _write_arr(fh, nbr, "<i4")
            _write_arr(fh, birth, "<i4")
            _write_arr(fh, death, "<i4")


def load_segment_graph(path: str | Path, dataset: Dataset) -> SegmentGraphIndex:
    with open(path, "rb") as fh:
        if fh.read(4) != SEGGRAPH_MAGIC:
            raise ValueError(f"{path}: not a segment-graph snapshot")
        (version,) = struct.unpack("<i", fh.read(4))
        if version != SNAPSHOT_VERSION:
            raise ValueError(f"{path}: unsupported snapshot version {version}")
        (clen,) = struct.unpack("<i", fh.read(4))
        column = fh.read(clen).decode("utf-8")
        order = _read_arr(fh, "<i8")
        sorted_values = _read_arr(fh, "<f8")
        rank_vectors = np.ascontiguousarray(dataset.vectors[order])
        graph = _read_graph_body(fh, rank_vectors)
        (num_layers,) = struct.unpack("<i", fh.read(4))
        csr_layers = []
        for _ in range(num_layers):
            indptr = _read_arr(fh, "<i8")
            nbr = _read_arr(fh, "<i4")
            birth = _read_arr(fh, "<i4")
            death = _read_arr(fh, "<i4")
            csr_layers.append((indptr, nbr, birth, death))
    return SegmentGraphIndex(dataset=dataset, column=column,
                             params=graph.params, order=order,
                             sorted_values=sorted_values,
                             rank_vectors=rank_vectors, graph=graph,
                             csr_layers=csr_layers,
                             entry_history=list(graph.entry_history))


def save_label_graph(path: str | Path, index: LabelGraphIndex) -> None:
    """Adjacency container plus the label dictionary (token -> int32 id)
    and the entry-point table aligned with it."""
    tokens = sorted(index.postings)
    with open(path, "wb") as fh:
        fh.write(LABEL_MAGIC)
        fh.write(struct.pack("<i", SNAPSHOT_VERSION))
        col = index.column.encode("utf-8")
        fh.write(struct.pack("<i", len(col)))
        fh.write(col)
        fh.write(struct.pack("<iiidq", index.n, index.R, index.L_build,
                             index.alpha, index.seed))
        _write_arr(fh, index.deg, "<i4")
        flat = np.concatenate([index.adj[u, :index.deg[u]]
                               for u in range(index.n)]) \
            if index.deg.sum() else np.empty(0, dtype=np.int32)
        _write_arr(fh, flat, "<i4")
        blob = json.dumps(tokens, sort_keys=True).encode("utf-8")
        fh.write(struct.pack("<q", len(blob)))
        fh.write(blob)
        entries = np.asarray([index.entry_points[t] for t in tokens])
        _write_arr(fh, entries, "<i4")


def load_label_graph(path: str | Path, dataset: Dataset) -> LabelGraphIndex:
    from .labelgraph import _item_labels

    with open(path, "rb") as fh:
        if fh.read(4) != LABEL_MAGIC:
            raise ValueError(f"{path}: not a label-graph snapshot")
        (version,) = struct.unpack("<i", fh.read(4))
        if version != SNAPSHOT_VERSION:
            raise ValueError(f"{path}: unsupported snapshot version {version}")
        (clen,) = struct.unpack("<i", fh.read(4))
        column = fh.read(clen).decode("utf-8")
        n, R, L_build, alpha, seed = struct.unpack("<iiidq", fh.read(28))
        deg = _read_arr(fh, "<i4").astype(np.int32)
        flat = _read_arr(fh, "<i4").astype(np.int32)
        (blob_len,) = struct.unpack("<q", fh.read(8))
        tokens = json.loads(fh.read(blob_len).decode("utf-8"))
        entries = _read_arr(fh, "<i4")
    adj = np.zeros((n, R + 1), dtype=np.int32)
    at = 0
    for u in range(n):
        adj[u, :deg[u]] = flat[at:at + deg[u]]
        at += deg[u]
    col = dataset.schema.index_of(column)
    labels = _item_labels(dataset, col)
    postings: dict[str, list[int]] = {}
    for i, labs in enumerate(labels):
        for lab in labs:
            postings.setdefault(lab, []).append(i)
    return LabelGraphIndex(
        dataset=dataset, column=column, R=R, L_build=L_build, alpha=alpha,
        seed=seed, adj=adj, deg=deg, labels=labels,
        postings={t: np.asarray(ids, dtype=np.int64)
                  for t, ids in postings.items()},
        entry_points={t: int(e) for t, e in zip(tokens, entries)})


def save_pq(path: str | Path, codebook: PqCodebook,
            codes: np.ndarray | None = None) -> None:
    """Codebook tensor plus the optional id-ordered contiguous code array."""
    with open(path, "wb") as fh:
        fh.write(PQ_MAGIC)
        fh.write(struct.pack("<i", SNAPSHOT_VERSION))
        s, c_sub, sub_d = codebook.codebooks.shape
        fh.write(struct.pack("<iiiq", s, c_sub, sub_d, codebook.seed))
        _write_arr(fh, codebook.codebooks.reshape(-1), "<f8")
        if codes is None:
            fh.write(struct.pack("<q", -1))
        else:
            fh.write(struct.pack("<q", codes.shape[0]))
            _write_arr(fh, codes.reshape(-1), "u1")


def load_pq(path: str | Path) -> tuple[PqCodebook, np.ndarray | None]:
    with open(path, "rb") as fh:
        if fh.read(4) != PQ_MAGIC:
            raise ValueError(f"{path}: not a pq snapshot")
        (version,) = struct.unpack("<i", fh.read(4))
        if version != SNAPSHOT_VERSION:
            raise ValueError(f"{path}: unsupported snapshot version {version}")
        s, c_sub, sub_d, seed = struct.unpack("<iiiq", fh.read(20))
        books = _read_arr(fh, "<f8").reshape(s, c_sub, sub_d)
        (n,) = struct.unpack("<q", fh.read(8))
        codes = None
        if n >= 0:
            codes = _read_arr(fh, "u1").reshape(n, s)
    return PqCodebook(codebooks=books, seed=seed), codes
