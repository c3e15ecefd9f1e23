"""In-memory registry of datasets and built indexes held by the service."""

from __future__ import annotations

import os
import threading
from dataclasses import dataclass, field
from pathlib import Path

from ..data import Dataset
from ..registry import BuiltIndex

DATA_ROOT_ENV = "FANNS_DATA_ROOT"


def resolve_path(path: str | Path) -> Path:
    """Relative paths resolve under the data-root environment variable."""
    path = Path(path)
    if path.is_absolute():
        return path
    root = os.environ.get(DATA_ROOT_ENV)
    return (Path(root) / path) if root else path.resolve()


@dataclass
class AppState:
    datasets: dict[str, Dataset] = field(default_factory=dict)
    dataset_paths: dict[str, str] = field(default_factory=dict)
    indexes: dict[str, BuiltIndex] = field(default_factory=dict)
    index_datasets: dict[str, str] = field(default_factory=dict)
    lock: threading.RLock = field(default_factory=threading.RLock)
    _counter: int = 0

    def next_index_id(self, method: str) -> str:
        with self.lock:
            self._counter += 1
            return f"{method}-{self._counter}"
