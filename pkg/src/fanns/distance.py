"""Distance kernels. All accumulation happens in float64 regardless of the
storage dtype so that ties resolve identically across platforms."""

from __future__ import annotations

import numpy as np


def distance_euclidean(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"length mismatch: {u.shape} vs {v.shape}")
    diff = u - v
    return float(np.sqrt(np.dot(diff, diff)))


def distance_cosine(u: np.ndarray, v: np.ndarray) -> float:
    """1 - cos(u, v); in [0, 2] for non-zero inputs."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"length mismatch: {u.shape} vs {v.shape}")
    nu = np.sqrt(np.dot(u, u))
    nv = np.sqrt(np.dot(v, v))
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine distance is undefined for zero-norm vectors")
    return float(1.0 - np.dot(u, v) / (nu * nv))


def euclidean_to_many(q: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """Distances from q to every row of matrix, float64, shape (rows,)."""
    q = np.asarray(q, dtype=np.float64)
    if matrix.shape[0] == 0:
        return np.empty(0, dtype=np.float64)
    if matrix.shape[1] != q.shape[0]:
        raise ValueError(f"length mismatch: {matrix.shape[1]} vs {q.shape[0]}")
    diff = matrix.astype(np.float64) - q[None, :]
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))
