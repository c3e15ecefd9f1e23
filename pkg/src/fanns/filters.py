"""Attribute filter expressions and their evaluation.

Three leaf predicates cover the three attribute kinds:
  * ``ExactMatch`` on unordered or ordered columns,
  * ``Range`` (inclusive on both ends) on ordered columns,
  * ``SetContains`` on set columns.
Leaves combine under ``And`` / ``Or`` / ``Not`` into arbitrary trees.

Two evaluators are provided: :func:`eval_filter` is the per-item reference
semantics, :func:`matching_mask` the vectorized equivalent over a whole
dataset. They are checked against each other in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import (ORDERED, SET, UNORDERED, AttributeSchema, Dataset, Item,
                   SchemaError)


class Filter:
    """Base class for filter expression nodes."""

    def columns(self) -> set[str]:
        raise NotImplementedError

    @property
    def arity(self) -> int:
        """Number of distinct columns the expression depends on."""
        return len(self.columns())

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ExactMatch(Filter):
    column: str
    value: str | int | float

    def columns(self) -> set[str]:
        return {self.column}

    def to_dict(self) -> dict:
        return {"type": "em", "column": self.column, "value": self.value}


@dataclass(frozen=True)
class Range(Filter):
    """Inclusive range predicate; use -inf/+inf for half-bounded queries."""

    column: str
    low: int | float
    high: int | float

    def __post_init__(self) -> None:
        if self.low > self.high:
            raise ValueError(f"range low {self.low} > high {self.high}")

    def columns(self) -> set[str]:
        return {self.column}

    def to_dict(self) -> dict:
        return {"type": "range", "column": self.column,
                "low": self.low, "high": self.high}


@dataclass(frozen=True)
class SetContains(Filter):
    column: str
    token: str

    def columns(self) -> set[str]:
        return {self.column}

    def to_dict(self) -> dict:
        return {"type": "emis", "column": self.column, "token": self.token}


@dataclass(frozen=True)
class And(Filter):
    parts: tuple[Filter, ...]

    def __init__(self, *parts: Filter):
        object.__setattr__(self, "parts", tuple(parts))

    def columns(self) -> set[str]:
        return set().union(*(p.columns() for p in self.parts))

    def to_dict(self) -> dict:
        return {"type": "and", "parts": [p.to_dict() for p in self.parts]}


@dataclass(frozen=True)
class Or(Filter):
    parts: tuple[Filter, ...]

    def __init__(self, *parts: Filter):
        object.__setattr__(self, "parts", tuple(parts))

    def columns(self) -> set[str]:
        return set().union(*(p.columns() for p in self.parts))

    def to_dict(self) -> dict:
        return {"type": "or", "parts": [p.to_dict() for p in self.parts]}


@dataclass(frozen=True)
class Not(Filter):
    inner: Filter

    def columns(self) -> set[str]:
        return self.inner.columns()

    def to_dict(self) -> dict:
        return {"type": "not", "inner": self.inner.to_dict()}


def filter_from_dict(obj: dict) -> Filter:
    """Parse the JSON filter grammar used in query files and the service."""
    kind = obj.get("type")
    if kind == "em":
        return ExactMatch(obj["column"], obj["value"])
    if kind == "range":
        return Range(obj["column"], obj["low"], obj["high"])
    if kind == "emis":
        return SetContains(obj["column"], obj["token"])
    if kind == "and":
        return And(*(filter_from_dict(p) for p in obj["parts"]))
    if kind == "or":
        return Or(*(filter_from_dict(p) for p in obj["parts"]))
    if kind == "not":
        return Not(filter_from_dict(obj["inner"]))
    raise ValueError(f"unknown filter type {kind!r}")


def validate_filter(flt: Filter, schema: AttributeSchema) -> None:
    """Raise SchemaError unless every leaf fits its column's kind."""
    if isinstance(flt, ExactMatch):
        kind = schema.kind_of(flt.column)
        if kind not in (UNORDERED, ORDERED):
            raise SchemaError(
                f"exact-match filter on {kind} column {flt.column!r}")
        if kind == UNORDERED and not isinstance(flt.value, str):
            raise SchemaError(f"exact-match on {flt.column!r} needs a string value")
        if kind == ORDERED and isinstance(flt.value, str):
            raise SchemaError(f"exact-match on {flt.column!r} needs a numeric value")
    elif isinstance(flt, Range):
        kind = schema.kind_of(flt.column)
        if kind != ORDERED:
            raise SchemaError(f"range filter on {kind} column {flt.column!r}")
    elif isinstance(flt, SetContains):
        kind = schema.kind_of(flt.column)
        if kind != SET:
            raise SchemaError(f"set-contains filter on {kind} column {flt.column!r}")
    elif isinstance(flt, (And, Or)):
        for p in flt.parts:
            validate_filter(p, schema)
    elif isinstance(flt, Not):
        validate_filter(flt.inner, schema)
    else:
        raise SchemaError(f"unknown filter node {type(flt).__name__}")


def eval_filter(flt: Filter, item: Item, schema: AttributeSchema) -> bool:
    """Reference per-item semantics of a filter expression."""
    if isinstance(flt, ExactMatch):
        col = schema.index_of(flt.column)
        if schema.columns[col].kind not in (UNORDERED, ORDERED):
            raise SchemaError(f"exact-match filter on set column {flt.column!r}")
        return item.attributes[col] == flt.value
    if isinstance(flt, Range):
        col = schema.index_of(flt.column)
        if schema.columns[col].kind != ORDERED:
            raise SchemaError(f"range filter on non-ordered column {flt.column!r}")
        return flt.low <= item.attributes[col] <= flt.high
    if isinstance(flt, SetContains):
        col = schema.index_of(flt.column)
        if schema.columns[col].kind != SET:
            raise SchemaError(f"set-contains filter on non-set column {flt.column!r}")
        return flt.token in item.attributes[col]
    if isinstance(flt, And):
        return all(eval_filter(p, item, schema) for p in flt.parts)
    if isinstance(flt, Or):
        return any(eval_filter(p, item, schema) for p in flt.parts)
    if isinstance(flt, Not):
        return not eval_filter(flt.inner, item, schema)
    raise SchemaError(f"unknown filter node {type(flt).__name__}")


def matching_mask(flt: Filter, dataset: Dataset) -> np.ndarray:
    """Boolean mask over item ids, equivalent to eval_filter per item."""
    schema = dataset.schema
    if isinstance(flt, ExactMatch):
        col = schema.index_of(flt.column)
        kind = schema.columns[col].kind
        if kind == UNORDERED:
            codes, table = dataset.token_codes(col)
            code = table.get(flt.value, -1)
            return codes == code
        if kind == ORDERED:
            return dataset.ordered_values(col) == float(flt.value)
        raise SchemaError(f"exact-match filter on set column {flt.column!r}")
    if isinstance(flt, Range):
        col = schema.index_of(flt.column)
        if schema.columns[col].kind != ORDERED:
            raise SchemaError(f"range filter on non-ordered column {flt.column!r}")
        values = dataset.ordered_values(col)
        return (values >= flt.low) & (values <= flt.high)
    if isinstance(flt, SetContains):
        col = schema.index_of(flt.column)
        if schema.columns[col].kind != SET:
            raise SchemaError(f"set-contains filter on non-set column {flt.column!r}")
        mask = np.zeros(dataset.n, dtype=bool)
        ids = dataset.set_postings(col).get(flt.token)
        if ids is not None:
            mask[ids] = True
        return mask
    if isinstance(flt, And):
        mask = np.ones(dataset.n, dtype=bool)
        for p in flt.parts:
            mask &= matching_mask(p, dataset)
        return mask
    if isinstance(flt, Or):
        mask = np.zeros(dataset.n, dtype=bool)
        for p in flt.parts:
            mask |= matching_mask(p, dataset)
        return mask
    if isinstance(flt, Not):
        return ~matching_mask(flt.inner, dataset)
    raise SchemaError(f"unknown filter node {type(flt).__name__}")


def selectivity(flt: Filter, dataset: Dataset) -> float:
    """Fraction of dataset items matching the filter."""
    if dataset.n == 0:
        raise ValueError("selectivity is undefined on an empty dataset")
    return float(np.count_nonzero(matching_mask(flt, dataset))) / dataset.n
