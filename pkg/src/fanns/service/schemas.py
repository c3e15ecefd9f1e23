"""Pydantic request/response models for the index service."""

from __future__ import annotations

from typing import Any, Optional

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class ColumnSpecModel(BaseModel):
    name: str
    kind: str
    tokens: int = 20
    zipf: float = 1.1
    low: int = 0
    high: int = 100
    lam: float = 3.0


class GenerateDatasetRequest(BaseModel):
    name: str
    n: int = Field(ge=1)
    d: int = Field(ge=1)
    seed: int = 0
    columns: list[ColumnSpecModel]
    mixture_components: int = 8
    out_dir: Optional[str] = None


class LoadDatasetRequest(BaseModel):
    path: str
    name: Optional[str] = None


class DatasetInfo(BaseModel):
    name: str
    n: int
    d: int
    columns: list[dict]
    path: Optional[str] = None


class GenerateQueriesRequest(BaseModel):
    family: str
    p: int = Field(ge=1)
    k: int = 10
    seed: int = 0
    band: tuple[float, float] = (0.0, 1.0)
    perturbation: float = 0.25
    out_path: Optional[str] = None


class QuerySetInfo(BaseModel):
    dataset: str
    family: str
    p: int
    k: int
    path: Optional[str] = None
    mean_selectivity: float


class GroundTruthRequest(BaseModel):
    queries_path: str
    k: int = 10
    out_path: str


class GroundTruthInfo(BaseModel):
    path: str
    queries: int
    k: int


class SelectivityRequest(BaseModel):
    filter: dict


class SelectivityResponse(BaseModel):
    selectivity: float
    matches: int


class BuildIndexRequest(BaseModel):
    dataset: str
    method: str
    params: dict = Field(default_factory=dict)


class IndexInfo(BaseModel):
    index_id: str
    dataset: str
    method: str
    params: dict
    build_seconds: float
    index_bytes: int
    peak_rss_bytes: int


class QueryRequest(BaseModel):
    vector: Optional[list[float]] = None
    vector_id: Optional[int] = None
    k: int = 10
    filter: Optional[dict] = None
    width: int = 100


class QueryResponse(BaseModel):
    ids: list[int]
    distances: list[float]


class SweepRequest(BaseModel):
    queries_path: str
    gt_path: str
    widths: list[int]
    runs: int = 5


class SweepPointModel(BaseModel):
    width: int
    recall_mean: float
    recall_std: float
    qps_mean: float
    qps_std: float
    runs: int


class BenchRequest(BaseModel):
    dataset: str
    method: str
    params: dict = Field(default_factory=dict)
    queries_path: str
    gt_path: str
    widths: list[int]
    runs: int = 5


class BenchResponse(BaseModel):
    method: str
    filter_family: str
    points: list[SweepPointModel]
    rows: list[dict]
    csv: str
    build_seconds: float
    index_bytes: int
    peak_rss_bytes: int


class TuneRequest(BaseModel):
    dataset: str
    method: str
    family: str
    value_lists: dict[str, list[Any]]
    default_indices: dict[str, int]
    widths: list[int]
    k: int = 10
    p: int = 50
    seed: int = 0


class TuneResponse(BaseModel):
    best_params: dict
    evaluations: int
    best_reached: bool
    best_value: float
