"""Benchmark harness: recall scoring, recall-vs-QPS sweeps with repetition
statistics, and greedy coordinate-wise parameter search.

The measurement protocol is fixed: queries run sequentially on one worker,
each sweep point is repeated ``runs`` times without warm-up, and mean plus
standard deviation are reported per point. Build time and any reusable
per-batch preprocessing stay outside the timed region.
"""

from __future__ import annotations

import resource
import time
from dataclasses import dataclass
from typing import Callable, NamedTuple, Protocol

import numpy as np

from .data import Query
from .oracle import KnnResult
from .synth import QuerySet


def recall_at_k(result: KnnResult, truth: KnnResult, k: int) -> float:
    """Fraction of the true top-k found among the returned top-k.

    The denominator is min(k, len(truth)): it degrades below k only when
    the filter matches fewer than k items, so exact methods score 1.0 on
    under-full results instead of being penalized for missing items that
    do not exist.
    """
    if len(truth) == 0:
        return 1.0 if len(result) == 0 else 0.0
    denom = min(k, len(truth))
    hits = len(set(result.ids[:k]) & set(truth.ids[:k]))
    return hits / denom


class SearchHandle(Protocol):
    """A built index bound to one query mode, searchable at a given width."""

    name: str
    width_kind: str  # "ef" | "probe" | "none"

    def search(self, query: Query, width: int) -> KnnResult: ...


@dataclass
class SweepPoint:
    width: int
    recall_mean: float
    recall_std: float
    qps_mean: float
    qps_std: float
    runs: int
    recall_runs: tuple[float, ...] = ()
    qps_runs: tuple[float, ...] = ()


def run_sweep(handle: SearchHandle, queries: QuerySet,
              truth: list[KnnResult], widths: list[int],
              runs: int = 5) -> list[SweepPoint]:
    """Measure recall and QPS at each search width.

    Each run executes every query once, sequentially, on the calling
    thread; QPS is p / wall-clock seconds. Recall is scored after the
    timed loop.
    """
    if len(truth) != len(queries.queries):
        raise ValueError("ground truth is not aligned with the query set")
    max_k = max(q.k for q in queries.queries)
    points = []
    for width in widths:
        if handle.width_kind == "ef" and width < max_k:
            raise ValueError(f"width {width} below k={max_k}")
        recalls = []
        qpss = []
        for _ in range(runs):
            results = []
            t0 = time.perf_counter()
            for q in queries.queries:
                results.append(handle.search(q, width))
            elapsed = time.perf_counter() - t0
            qpss.append(len(queries.queries) / max(elapsed, 1e-12))
            recalls.append(float(np.mean([
                recall_at_k(res, gt, q.k)
                for res, gt, q in zip(results, truth, queries.queries)])))
        points.append(SweepPoint(
            width=width,
            recall_mean=float(np.mean(recalls)),
            recall_std=float(np.std(recalls)),
            qps_mean=float(np.mean(qpss)),
            qps_std=float(np.std(qpss)),
            runs=runs,
            recall_runs=tuple(recalls),
            qps_runs=tuple(qpss),
        ))
    return points


# -- reward and greedy parameter search ------------------------------------

class Reward(NamedTuple):
    """Comparable lexicographically: any configuration reaching the recall
    floor beats any that does not; among equals, higher value wins."""

    reached: bool
    value: float


RECALL_FLOOR = 0.95


def get_reward(build_and_query: Callable[[dict], list[tuple[int, float, float]]],
               assignment: dict) -> Reward:
    """Score one parameter assignment.

    ``build_and_query`` builds the index and returns one (width, recall,
    qps) triple per sweep width; it runs twice and the two curves are
    averaged pointwise by width. The reward is the best QPS among points
    with recall >= 0.95, or the best recall when no point qualifies.
    Build failures score (False, 0).
    """
    try:
        curves = [build_and_query(assignment) for _ in range(2)]
    except Exception:
        return Reward(False, 0.0)
    by_width: dict[int, list[tuple[float, float]]] = {}
    for curve in curves:
        for width, rec, qps in curve:
            by_width.setdefault(width, []).append((rec, qps))
    best_qps = None
    best_recall = 0.0
    for width, samples in by_width.items():
        rec = float(np.mean([s[0] for s in samples]))
        qps = float(np.mean([s[1] for s in samples]))
        best_recall = max(best_recall, rec)
        if rec >= RECALL_FLOOR and (best_qps is None or qps > best_qps):
            best_qps = qps
    if best_qps is not None:
        return Reward(True, best_qps)
    return Reward(False, best_recall)


@dataclass(frozen=True)
class TuneSpec:
    params: tuple[str, ...]
    value_lists: dict[str, list]
    default_indices: dict[str, int]

    def __post_init__(self) -> None:
        for p in self.params:
            values = self.value_lists.get(p)
            if not values:
                raise ValueError(f"no candidate values for parameter {p!r}")
            idx = self.default_indices.get(p)
            if idx is None or not (0 <= idx < len(values)):
                raise ValueError(f"default index for {p!r} out of bounds")

    def assignment(self, indices: dict[str, int]) -> dict:
        return {p: self.value_lists[p][indices[p]] for p in self.params}


def greedy_parameter_search(spec: TuneSpec,
                            reward_fn: Callable[[dict], Reward],
                            ) -> dict:
    """Coordinate-wise hill climbing over the candidate grids.

    Starting from the default indices, every parameter is nudged one step
    down and up; any strict improvement moves the index, and the outer
    loop repeats only while some improvement exceeded 1 percent. Moves
    that would leave a value list are skipped.
    """
    indices = dict(spec.default_indices)
    best = reward_fn(spec.assignment(indices))
    do_repeat = True
    while do_repeat:
        do_repeat = False
        for par in spec.params:
            for change in (-1, 1):
                j = indices[par] + change
                if j < 0 or j >= len(spec.value_lists[par]):
                    continue
                candidate = spec.assignment(indices)
                candidate[par] = spec.value_lists[par][j]
                r = reward_fn(candidate)
                if r > best:
                    if r > Reward(best.reached, best.value * 1.01):
                        do_repeat = True
                    best = r
                    indices[par] = j
    return spec.assignment(indices)


def peak_rss_bytes() -> int:
    """Best-effort resident-set high-water mark of this process."""
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024
