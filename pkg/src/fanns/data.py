"""Dataset model: typed attribute columns plus one embedding vector per item.

Attribute kinds:
  * ``unordered``: a single string token, compared by equality only.
  * ``ordered``: a single 64-bit integer or finite float from a totally
    ordered domain.
  * ``set``: a finite set of string tokens.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Union

import numpy as np

UNORDERED = "unordered"
ORDERED = "ordered"
SET = "set"
ATTRIBUTE_KINDS = (UNORDERED, ORDERED, SET)

# Sentinels for half-bounded ranges on ordered columns: -inf compares below
# every int64/float value, +inf above.
ORDERED_MIN = -math.inf
ORDERED_MAX = math.inf

AttributeValue = Union[str, int, float, frozenset]


class SchemaError(ValueError):
    """A filter or attribute value does not fit the dataset schema."""


@dataclass(frozen=True)
class AttributeColumn:
    name: str
    kind: str

    def __post_init__(self) -> None:
        if self.kind not in ATTRIBUTE_KINDS:
            raise SchemaError(f"unknown attribute kind {self.kind!r}")


@dataclass(frozen=True)
class AttributeSchema:
    """Ordered list of named, typed attribute columns."""

    columns: tuple[AttributeColumn, ...]

    def __post_init__(self) -> None:
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate column names in schema")

    def __len__(self) -> int:
        return len(self.columns)

    def __iter__(self) -> Iterator[AttributeColumn]:
        return iter(self.columns)

    def index_of(self, name: str) -> int:
        for i, col in enumerate(self.columns):
            if col.name == name:
                return i
        raise SchemaError(f"unknown column {name!r}")

    def kind_of(self, name: str) -> str:
        return self.columns[self.index_of(name)].kind

    @classmethod
    def of(cls, *cols: tuple[str, str]) -> "AttributeSchema":
        return cls(tuple(AttributeColumn(n, k) for n, k in cols))


def check_attribute(value: AttributeValue, kind: str) -> str | None:
    """Return a violation message if ``value`` does not match ``kind``."""
    if kind == UNORDERED:
        if not isinstance(value, str):
            return f"unordered value must be str, got {type(value).__name__}"
    elif kind == ORDERED:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return f"ordered value must be int or float, got {type(value).__name__}"
        if isinstance(value, float) and not math.isfinite(value):
            return "ordered value must be finite"
    elif kind == SET:
        if not isinstance(value, frozenset):
            return f"set value must be frozenset, got {type(value).__name__}"
        if not all(isinstance(t, str) for t in value):
            return "set value must contain only str tokens"
    return None


@dataclass(frozen=True)
class Item:
    """One database item: integer id, embedding vector, attribute values."""

    id: int
    vector: np.ndarray
    attributes: tuple[AttributeValue, ...]


class Dataset:
    """Immutable collection of n items sharing one schema and dimensionality.

    Vectors are held in a contiguous float32 matrix; attributes are stored
    per column. Per-column lookup structures (token codes, sorted views)
    are built lazily and cached, which keeps repeated filter evaluation
    cheap without mutating observable state.
    """

    def __init__(self, schema: AttributeSchema, vectors: np.ndarray,
                 attributes: list[list[AttributeValue]],
                 ids: np.ndarray | None = None):
        vectors = np.ascontiguousarray(vectors, dtype=np.float32)
        if vectors.ndim != 2:
            raise ValueError("vectors must be a (n, d) matrix")
        self.schema = schema
        self.vectors = vectors
        self.vectors.setflags(write=False)
        # attributes[c][i] = value of column c for item i
        self.attributes = attributes
        n = vectors.shape[0]
        if ids is None:
            ids = np.arange(n, dtype=np.int64)
        self.ids = np.asarray(ids, dtype=np.int64)
        self._column_cache: dict[int, object] = {}

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.n

    def item(self, i: int) -> Item:
        return Item(
            id=int(self.ids[i]),
            vector=self.vectors[i],
            attributes=tuple(self.attributes[c][i] for c in range(len(self.schema))),
        )

    def iter_items(self) -> Iterator[Item]:
        for i in range(self.n):
            yield self.item(i)

    @classmethod
    def from_items(cls, schema: AttributeSchema, items: list[Item]) -> "Dataset":
        if not items:
            raise ValueError("cannot build a dataset from zero items")
        vectors = np.stack([np.asarray(it.vector, dtype=np.float32) for it in items])
        cols: list[list[AttributeValue]] = [[] for _ in schema]
        for it in items:
            for c in range(len(schema)):
                cols[c].append(it.attributes[c])
        ids = np.array([it.id for it in items], dtype=np.int64)
        return cls(schema, vectors, cols, ids)

    # -- cached per-column views -----------------------------------------

    def ordered_values(self, col: int) -> np.ndarray:
        """Ordered column as a float64 array (int64 values fit losslessly
        only up to 2**53; ingest keeps desk-scale values well below that)."""
        key = ("ord", col)
        if key not in self._column_cache:
            self._column_cache[key] = np.asarray(self.attributes[col], dtype=np.float64)
        return self._column_cache[key]  # type: ignore[return-value]

    def token_codes(self, col: int) -> tuple[np.ndarray, dict[str, int]]:
        """Unordered column factorized into int32 codes plus token table."""
        key = ("tok", col)
        if key not in self._column_cache:
            table: dict[str, int] = {}
            codes = np.empty(self.n, dtype=np.int32)
            for i, tok in enumerate(self.attributes[col]):
                code = table.setdefault(tok, len(table))
                codes[i] = code
            self._column_cache[key] = (codes, table)
        return self._column_cache[key]  # type: ignore[return-value]

    def set_postings(self, col: int) -> dict[str, np.ndarray]:
        """Set column as token -> sorted int64 id array."""
        key = ("post", col)
        if key not in self._column_cache:
            lists: dict[str, list[int]] = {}
            for i, toks in enumerate(self.attributes[col]):
                for t in toks:
                    lists.setdefault(t, []).append(i)
            self._column_cache[key] = {
                t: np.asarray(ids, dtype=np.int64) for t, ids in lists.items()
            }
        return self._column_cache[key]  # type: ignore[return-value]


def validate_items(schema: AttributeSchema, items: list[Item],
                   dimensionality: int | None = None) -> list[str]:
    """Validate raw items before they are packed into a Dataset.

    Catches violations a packed Dataset cannot even represent, such as an
    item whose vector length differs from the rest.
    """
    violations: list[str] = []
    if not items:
        return ["no items"]
    d = dimensionality if dimensionality is not None else len(items[0].vector)
    seen: set[int] = set()
    for it in items:
        if it.id in seen:
            violations.append(f"duplicate id {it.id}")
        seen.add(it.id)
        vec = np.asarray(it.vector)
        if vec.shape != (d,):
            violations.append(f"item {it.id}: vector has {vec.size} coordinates, expected {d}")
        elif not np.all(np.isfinite(vec)):
            violations.append(f"item {it.id}: non-finite vector coordinates")
        if len(it.attributes) != len(schema):
            violations.append(
                f"item {it.id}: {len(it.attributes)} attribute values for "
                f"{len(schema)} columns"
            )
            continue
        for col, value in zip(schema, it.attributes):
            msg = check_attribute(value, col.kind)
            if msg is not None:
                violations.append(f"item {it.id} column {col.name!r}: {msg}")
    missing = set(range(len(items))) - seen
    if missing:
        violations.append(f"id gaps: missing {sorted(missing)[:10]}")
    return violations


def validate_dataset(dataset: Dataset) -> list[str]:
    """Check every dataset invariant; returns one message per violation.

    An empty list means the dataset is well formed.
    """
    violations: list[str] = []
    n = dataset.n
    ids = dataset.ids
    if len(ids) != n:
        violations.append(f"id array length {len(ids)} != item count {n}")
    seen = set()
    for i, item_id in enumerate(ids):
        if item_id in seen:
            violations.append(f"duplicate id {int(item_id)}")
        seen.add(int(item_id))
    missing = set(range(n)) - seen
    if missing:
        violations.append(f"id gaps: missing {sorted(missing)[:10]}")
    if not np.all(np.isfinite(dataset.vectors)):
        bad = np.nonzero(~np.isfinite(dataset.vectors).all(axis=1))[0]
        violations.append(f"non-finite vector coordinates at items {bad[:10].tolist()}")
    for c, col in enumerate(dataset.schema):
        values = dataset.attributes[c]
        if len(values) != n:
            violations.append(
                f"column {col.name!r} has {len(values)} values for {n} items"
            )
            continue
        for i, v in enumerate(values):
            msg = check_attribute(v, col.kind)
            if msg is not None:
                violations.append(f"item {i} column {col.name!r}: {msg}")
    return violations


@dataclass(frozen=True)
class Query:
    """A search request: query vector, result count k, optional filter."""

    vector: np.ndarray
    k: int
    filter: object | None = field(default=None)

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        object.__setattr__(self, "vector", np.asarray(self.vector, dtype=np.float64))
