"""Seeded synthetic dataset and query generation.

Vectors come from a Gaussian mixture and are normalized to unit length.
Attribute columns draw from per-kind distributions: categorical tokens
with Zipf-like weights, uniform integer ranges, and Poisson-sized token
sets. Everything is deterministic under the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import ORDERED, SET, UNORDERED, AttributeColumn, AttributeSchema, \
    Dataset, Query
from .filters import ExactMatch, Filter, Range, SetContains, matching_mask

EM_FAMILY = "em"
RANGE_FAMILY = "range"
EMIS_FAMILY = "emis"
NONE_FAMILY = "none"
FAMILIES = (EM_FAMILY, RANGE_FAMILY, EMIS_FAMILY, NONE_FAMILY)


@dataclass(frozen=True)
class ColumnSpec:
    """Schema column plus the distribution knobs used for generation."""

    name: str
    kind: str
    tokens: int = 20        # token pool size (unordered / set)
    zipf: float = 1.1       # weight skew: weight(rank) ~ rank**-zipf
    low: int = 0            # ordered uniform range, inclusive
    high: int = 100
    lam: float = 3.0        # set size Poisson mean

    @classmethod
    def from_dict(cls, raw: dict) -> "ColumnSpec":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in raw.items() if k in known})

    def to_dict(self) -> dict:
        base = {"name": self.name, "kind": self.kind}
        if self.kind in (UNORDERED, SET):
            base["tokens"] = self.tokens
            base["zipf"] = self.zipf
        if self.kind == ORDERED:
            base["low"] = self.low
            base["high"] = self.high
        if self.kind == SET:
            base["lam"] = self.lam
        return base


def _zipf_weights(count: int, a: float) -> np.ndarray:
    w = (np.arange(1, count + 1, dtype=np.float64)) ** (-a)
    return w / w.sum()


def gen_dataset(n: int, d: int, seed: int, columns: list[ColumnSpec],
                mixture_components: int = 8) -> Dataset:
    if n < 1 or d < 1:
        raise ValueError("need n >= 1 and d >= 1")
    rng = np.random.default_rng(seed)
    means = rng.normal(size=(mixture_components, d))
    comp = rng.integers(0, mixture_components, size=n)
    vectors = means[comp] + rng.normal(scale=0.5, size=(n, d))
    vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)

    attributes: list[list] = []
    for spec in columns:
        if spec.kind == UNORDERED:
            pool = [f"{spec.name}_{i:03d}" for i in range(spec.tokens)]
            draws = rng.choice(spec.tokens, size=n,
                               p=_zipf_weights(spec.tokens, spec.zipf))
            attributes.append([pool[int(x)] for x in draws])
        elif spec.kind == ORDERED:
            values = rng.integers(spec.low, spec.high + 1, size=n)
            attributes.append([int(x) for x in values])
        elif spec.kind == SET:
            pool = [f"{spec.name}_{i:03d}" for i in range(spec.tokens)]
            weights = _zipf_weights(spec.tokens, spec.zipf)
            sizes = np.minimum(rng.poisson(spec.lam, size=n), spec.tokens)
            col = []
            for size in sizes:
                picks = rng.choice(spec.tokens, size=int(size), replace=False,
                                   p=weights)
                col.append(frozenset(pool[int(x)] for x in picks))
            attributes.append(col)
        else:
            raise ValueError(f"unknown column kind {spec.kind!r}")
    schema = AttributeSchema(tuple(AttributeColumn(s.name, s.kind)
                                   for s in columns))
    return Dataset(schema, vectors.astype(np.float32), attributes)


@dataclass
class QuerySet:
    """Queries sharing one filter family and a target selectivity band."""

    family: str
    queries: list[Query]
    k: int
    seed: int
    band: tuple[float, float]
    selectivities: list[float] = field(default_factory=list)

    @property
    def p(self) -> int:
        return len(self.queries)


def _columns_of_kind(dataset: Dataset, kind: str) -> list[tuple[int, str]]:
    return [(c, col.name) for c, col in enumerate(dataset.schema)
            if col.kind == kind]


def gen_queries(dataset: Dataset, family: str, p: int, k: int, seed: int,
                band: tuple[float, float] = (0.0, 1.0),
                perturbation: float = 0.25,
                max_attempts: int = 200) -> QuerySet:
    """Query vectors are perturbed, renormalized copies of dataset vectors;
    filter values are sampled from the empirical attribute distribution and
    resampled until the realized selectivity lies in the band and at least
    k items match."""
    if family not in FAMILIES:
        raise ValueError(f"family must be one of {FAMILIES}")
    if p < 1:
        raise ValueError("p must be >= 1")
    rng = np.random.default_rng(seed)
    n = dataset.n
    queries: list[Query] = []
    sels: list[float] = []
    for _ in range(p):
        base = dataset.vectors[int(rng.integers(n))].astype(np.float64)
        vec = base + rng.normal(scale=perturbation, size=dataset.d)
        vec /= np.linalg.norm(vec)
        if family == NONE_FAMILY:
            queries.append(Query(vec, k, None))
            sels.append(1.0)
            continue
        flt, sel = _sample_filter(dataset, family, k, band, rng, max_attempts)
        queries.append(Query(vec, k, flt))
        sels.append(sel)
    return QuerySet(family=family, queries=queries, k=k, seed=seed,
                    band=band, selectivities=sels)


def _sample_filter(dataset: Dataset, family: str, k: int,
                   band: tuple[float, float], rng: np.random.Generator,
                   max_attempts: int) -> tuple[Filter, float]:
    n = dataset.n
    for _ in range(max_attempts):
        if family == EM_FAMILY:
            cols = _columns_of_kind(dataset, UNORDERED)
            if not cols:
                raise ValueError("dataset has no unordered column")
            c, name = cols[int(rng.integers(len(cols)))]
            value = dataset.attributes[c][int(rng.integers(n))]
            flt: Filter = ExactMatch(name, value)
        elif family == RANGE_FAMILY:
            cols = _columns_of_kind(dataset, ORDERED)
            if not cols:
                raise ValueError("dataset has no ordered column")
            c, name = cols[int(rng.integers(len(cols)))]
            values = np.sort(dataset.ordered_values(c))
            target = rng.uniform(max(band[0], 1.0 / n), band[1])
            span = min(n, max(1, int(round(target * n))))
            start = int(rng.integers(0, n - span + 1))
            flt = Range(name, float(values[start]),
                        float(values[start + span - 1]))
        else:
            cols = _columns_of_kind(dataset, SET)
            if not cols:
                raise ValueError("dataset has no set column")
            c, name = cols[int(rng.integers(len(cols)))]
            toks = dataset.attributes[c][int(rng.integers(n))]
            if not toks:
                continue
            token = sorted(toks)[int(rng.integers(len(toks)))]
            flt = SetContains(name, token)
        matches = int(np.count_nonzero(matching_mask(flt, dataset)))
        sel = matches / n
        if matches >= k and band[0] <= sel <= band[1]:
            return flt, sel
    raise ValueError(
        f"could not sample a {family} filter with selectivity in "
        f"{band} matching >= {k} items after {max_attempts} attempts")
