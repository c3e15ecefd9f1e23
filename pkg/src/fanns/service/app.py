"""FastAPI service exposing dataset management, index construction, single
queries, benchmark sweeps, and greedy parameter tuning over the core
package. Indexes live in process memory; datasets and benchmark inputs
round-trip through the file formats in :mod:`fanns.io`."""

from __future__ import annotations

import csv
import io as _io
import json

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__
from ..bench import (Reward, SweepPoint, TuneSpec, get_reward,
                     greedy_parameter_search, recall_at_k, run_sweep)
from ..data import Dataset, Query
from ..filters import filter_from_dict, matching_mask, validate_filter
from ..io import (load_dataset, read_ground_truth, read_queries, save_dataset,
                  write_ground_truth, write_queries)
from ..oracle import batch_ground_truth
from ..registry import METHODS, build_index
from ..synth import ColumnSpec, QuerySet, gen_dataset, gen_queries
from . import schemas as S
from .state import AppState, resolve_path

CSV_COLUMNS = ["method", "filter_family", "params_json", "width", "run",
               "recall", "qps", "build_seconds", "peak_rss_bytes",
               "index_bytes"]


def sweep_rows(method: str, family: str, params: dict,
               points: list[SweepPoint], build_seconds: float,
               peak_rss: int, index_bytes: int) -> list[dict]:
    """One row per (width, run) plus mean/std aggregate rows per width."""
    params_json = json.dumps(params, sort_keys=True, default=str)
    rows = []
    for pt in points:
        for run, (rec, qps) in enumerate(zip(pt.recall_runs, pt.qps_runs), 1):
            rows.append({"method": method, "filter_family": family,
                         "params_json": params_json, "width": pt.width,
                         "run": run, "recall": rec, "qps": qps,
                         "build_seconds": build_seconds,
                         "peak_rss_bytes": peak_rss,
                         "index_bytes": index_bytes})
        for run, rec, qps in (("mean", pt.recall_mean, pt.qps_mean),
                              ("std", pt.recall_std, pt.qps_std)):
            rows.append({"method": method, "filter_family": family,
                         "params_json": params_json, "width": pt.width,
                         "run": run, "recall": rec, "qps": qps,
                         "build_seconds": build_seconds,
                         "peak_rss_bytes": peak_rss,
                         "index_bytes": index_bytes})
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    buf = _io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def create_app(state: AppState | None = None) -> FastAPI:
    app = FastAPI(title="fanns index service", version=__version__)
    st = state or AppState()
    app.state.registry = st

    def _dataset(name: str) -> Dataset:
        ds = st.datasets.get(name)
        if ds is None:
            raise HTTPException(404, f"unknown dataset {name!r}")
        return ds

    def _index(index_id: str):
        built = st.indexes.get(index_id)
        if built is None:
            raise HTTPException(404, f"unknown index {index_id!r}")
        return built

    def _dataset_info(name: str) -> S.DatasetInfo:
        ds = st.datasets[name]
        return S.DatasetInfo(
            name=name, n=ds.n, d=ds.d,
            columns=[{"name": c.name, "kind": c.kind} for c in ds.schema],
            path=st.dataset_paths.get(name))

    @app.get("/health", response_model=S.HealthResponse)
    def health():
        return S.HealthResponse(status="ok", version=__version__)

    @app.get("/methods")
    def methods():
        return {name: {"families": spec.families,
                       "width_kind": spec.width_kind,
                       "defaults": {k: v for k, v in spec.defaults.items()}}
                for name, spec in METHODS.items()}

    @app.post("/datasets/generate", response_model=S.DatasetInfo)
    def datasets_generate(req: S.GenerateDatasetRequest):
        specs = [ColumnSpec.from_dict(c.model_dump()) for c in req.columns]
        try:
            ds = gen_dataset(req.n, req.d, req.seed, specs,
                             req.mixture_components)
        except ValueError as exc:
            raise HTTPException(422, str(exc))
        with st.lock:
            st.datasets[req.name] = ds
            if req.out_dir:
                out = resolve_path(req.out_dir)
                save_dataset(out, ds, [s.to_dict() for s in specs])
                st.dataset_paths[req.name] = str(out)
        return _dataset_info(req.name)

    @app.post("/datasets/load", response_model=S.DatasetInfo)
    def datasets_load(req: S.LoadDatasetRequest):
        path = resolve_path(req.path)
        name = req.name or path.name
        if not (path / "schema.json").exists():
            raise HTTPException(404, f"no dataset at {path}")
        with st.lock:
            ds = load_dataset(path)
            st.datasets[name] = ds
            st.dataset_paths[name] = str(path)
        return _dataset_info(name)

    @app.get("/datasets", response_model=list[S.DatasetInfo])
    def datasets_list():
        return [_dataset_info(name) for name in sorted(st.datasets)]

    @app.get("/datasets/{name}", response_model=S.DatasetInfo)
    def datasets_get(name: str):
        _dataset(name)
        return _dataset_info(name)

    @app.post("/datasets/{name}/queries", response_model=S.QuerySetInfo)
    def queries_generate(name: str, req: S.GenerateQueriesRequest):
        ds = _dataset(name)
        try:
            qs = gen_queries(ds, req.family, req.p, req.k, req.seed,
                             tuple(req.band), req.perturbation)
        except ValueError as exc:
            raise HTTPException(422, str(exc))
        out_path = None
        if req.out_path:
            out = resolve_path(req.out_path)
            out.parent.mkdir(parents=True, exist_ok=True)
            write_queries(out, qs.queries)
            out_path = str(out)
        return S.QuerySetInfo(
            dataset=name, family=qs.family, p=qs.p, k=qs.k, path=out_path,
            mean_selectivity=float(np.mean(qs.selectivities)))

    @app.post("/datasets/{name}/ground-truth", response_model=S.GroundTruthInfo)
    def ground_truth(name: str, req: S.GroundTruthRequest):
        ds = _dataset(name)
        queries = read_queries(resolve_path(req.queries_path), ds)
        results = batch_ground_truth(ds, queries, req.k)
        out = resolve_path(req.out_path)
        out.parent.mkdir(parents=True, exist_ok=True)
        write_ground_truth(out, results)
        return S.GroundTruthInfo(path=str(out), queries=len(queries), k=req.k)

    @app.post("/datasets/{name}/selectivity", response_model=S.SelectivityResponse)
    def dataset_selectivity(name: str, req: S.SelectivityRequest):
        ds = _dataset(name)
        try:
            flt = filter_from_dict(req.filter)
            validate_filter(flt, ds.schema)
        except ValueError as exc:
            raise HTTPException(422, str(exc))
        matches = int(np.count_nonzero(matching_mask(flt, ds)))
        return S.SelectivityResponse(selectivity=matches / ds.n,
                                     matches=matches)

    @app.post("/indexes", response_model=S.IndexInfo)
    def indexes_build(req: S.BuildIndexRequest):
        ds = _dataset(req.dataset)
        if req.method not in METHODS:
            raise HTTPException(422, f"unknown method {req.method!r}")
        try:
            built = build_index(ds, req.method, req.params)
        except ValueError as exc:
            raise HTTPException(422, str(exc))
        with st.lock:
            index_id = st.next_index_id(req.method)
            st.indexes[index_id] = built
            st.index_datasets[index_id] = req.dataset
        return S.IndexInfo(index_id=index_id, dataset=req.dataset,
                           method=req.method, params=_clean(built.params),
                           build_seconds=built.build_seconds,
                           index_bytes=built.index_bytes,
                           peak_rss_bytes=built.peak_rss)

    @app.get("/indexes", response_model=list[S.IndexInfo])
    def indexes_list():
        out = []
        for index_id in sorted(st.indexes):
            built = st.indexes[index_id]
            out.append(S.IndexInfo(
                index_id=index_id, dataset=st.index_datasets[index_id],
                method=built.method, params=_clean(built.params),
                build_seconds=built.build_seconds,
                index_bytes=built.index_bytes,
                peak_rss_bytes=built.peak_rss))
        return out

    @app.delete("/indexes/{index_id}")
    def indexes_delete(index_id: str):
        _index(index_id)
        with st.lock:
            st.indexes.pop(index_id, None)
            st.index_datasets.pop(index_id, None)
        return {"deleted": index_id}

    @app.post("/indexes/{index_id}/query", response_model=S.QueryResponse)
    def indexes_query(index_id: str, req: S.QueryRequest):
        built = _index(index_id)
        ds = _dataset(st.index_datasets[index_id])
        if req.vector is not None:
            vec = np.asarray(req.vector, dtype=np.float64)
        elif req.vector_id is not None:
            if not (0 <= req.vector_id < ds.n):
                raise HTTPException(422, f"vector_id out of range [0, {ds.n})")
            vec = ds.vectors[req.vector_id].astype(np.float64)
        else:
            raise HTTPException(422, "provide vector or vector_id")
        if vec.shape[0] != ds.d:
            raise HTTPException(422, f"vector must have {ds.d} coordinates")
        flt = None
        if req.filter is not None:
            try:
                flt = filter_from_dict(req.filter)
                validate_filter(flt, ds.schema)
            except ValueError as exc:
                raise HTTPException(422, str(exc))
        try:
            res = built.search(Query(vec, req.k, flt), req.width)
        except ValueError as exc:
            raise HTTPException(422, str(exc))
        return S.QueryResponse(ids=list(res.ids), distances=list(res.distances))

    @app.post("/indexes/{index_id}/sweep", response_model=S.BenchResponse)
    def indexes_sweep(index_id: str, req: S.SweepRequest):
        built = _index(index_id)
        ds = _dataset(st.index_datasets[index_id])
        return _sweep(built, ds, req.queries_path, req.gt_path, req.widths,
                      req.runs)

    @app.post("/bench", response_model=S.BenchResponse)
    def bench(req: S.BenchRequest):
        ds = _dataset(req.dataset)
        if req.method not in METHODS:
            raise HTTPException(422, f"unknown method {req.method!r}")
        try:
            built = build_index(ds, req.method, req.params)
        except ValueError as exc:
            raise HTTPException(422, str(exc))
        return _sweep(built, ds, req.queries_path, req.gt_path, req.widths,
                      req.runs)

    def _sweep(built, ds: Dataset, queries_path: str, gt_path: str,
               widths: list[int], runs: int) -> S.BenchResponse:
        queries = read_queries(resolve_path(queries_path), ds)
        truth = read_ground_truth(resolve_path(gt_path))
        if len(truth) != len(queries):
            raise HTTPException(422, "ground truth does not match queries")
        family = _family_of(queries)
        qs = QuerySet(family=family, queries=queries,
                      k=max(q.k for q in queries), seed=0, band=(0.0, 1.0))
        try:
            points = run_sweep(built, qs, truth, widths, runs)
        except ValueError as exc:
            raise HTTPException(422, str(exc))
        rows = sweep_rows(built.method, family, _clean(built.params), points,
                          built.build_seconds, built.peak_rss,
                          built.index_bytes)
        return S.BenchResponse(
            method=built.method, filter_family=family,
            points=[S.SweepPointModel(width=p.width,
                                      recall_mean=p.recall_mean,
                                      recall_std=p.recall_std,
                                      qps_mean=p.qps_mean, qps_std=p.qps_std,
                                      runs=p.runs) for p in points],
            rows=rows, csv=rows_to_csv(rows),
            build_seconds=built.build_seconds,
            index_bytes=built.index_bytes, peak_rss_bytes=built.peak_rss)

    @app.post("/tune", response_model=S.TuneResponse)
    def tune(req: S.TuneRequest):
        ds = _dataset(req.dataset)
        if req.method not in METHODS:
            raise HTTPException(422, f"unknown method {req.method!r}")
        params = tuple(req.value_lists.keys())
        try:
            spec = TuneSpec(params=params, value_lists=req.value_lists,
                            default_indices=req.default_indices)
            qs = gen_queries(ds, req.family, req.p, req.k,
                             seed=_derive_seed(req.seed, req.method,
                                               req.family))
        except ValueError as exc:
            raise HTTPException(422, str(exc))
        truth = batch_ground_truth(ds, qs.queries, req.k)
        evaluations = 0

        def build_and_query(assignment: dict):
            built = build_index(ds, req.method, assignment)
            points = run_sweep(built, qs, truth, req.widths, runs=1)
            return [(p.width, p.recall_mean, p.qps_mean) for p in points]

        def reward_fn(assignment: dict) -> Reward:
            nonlocal evaluations
            evaluations += 1
            return get_reward(build_and_query, assignment)

        best = greedy_parameter_search(spec, reward_fn)
        final = reward_fn(best)
        return S.TuneResponse(best_params=_clean(best),
                              evaluations=evaluations,
                              best_reached=final.reached,
                              best_value=final.value)

    return app


def _family_of(queries: list[Query]) -> str:
    from ..filters import ExactMatch, Range, SetContains

    kinds = set()
    for q in queries:
        if q.filter is None:
            kinds.add("none")
        elif isinstance(q.filter, ExactMatch):
            kinds.add("em")
        elif isinstance(q.filter, Range):
            kinds.add("range")
        elif isinstance(q.filter, SetContains):
            kinds.add("emis")
        else:
            kinds.add("composite")
    return kinds.pop() if len(kinds) == 1 else "mixed"


def _derive_seed(seed: int, method: str, family: str) -> int:
    import zlib

    return zlib.crc32(f"{seed}:{method}:{family}".encode()) & 0x7FFFFFFF


def _clean(params: dict) -> dict:
    return {k: v for k, v in params.items() if v is not None}


app = create_app()
