"""Exact k-nearest-neighbor search and the MLE estimator of local
intrinsic dimensionality:

    lid(x) = -( (1/k) * sum_i log(r_i / r_k) )^{-1}

over the ascending neighbor distances r_1..r_k. High values flag points
outside dense low-dimensional structure. Log-ratio accumulation is f64;
duplicate-heavy inputs (all r_i equal after the epsilon clamp) diverge
and are reported as lid_cap.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import _kernels

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LidParams:
    k: int = 400
    distance_floor: float = 1e-12
    lid_cap: float = 1e6
    metric: str = "euclidean"  # "euclidean" or "cosine" (unit-normalized)

    def __post_init__(self):
        if self.k < 2:
            raise ValueError(f"k must be >= 2, got {self.k}")
        if self.distance_floor <= 0:
            raise ValueError("distance_floor must be positive")
        if self.lid_cap <= 0:
            raise ValueError("lid_cap must be positive")
        if self.metric not in ("euclidean", "cosine"):
            raise ValueError(f"unknown metric {self.metric!r}")


@dataclass(frozen=True)
class NeighborResult:
    distances: np.ndarray  # ascending, length min(k, pool size)
    indices: np.ndarray    # matching pool indices, distinct


def _maybe_normalize(x: np.ndarray, metric: str) -> np.ndarray:
    if metric != "cosine":
        return x
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    return x / np.maximum(norms, 1e-30)


def knn_search(query: np.ndarray, pool: np.ndarray, k: int) -> NeighborResult:
    """Exact k nearest pool rows by Euclidean distance.

    Ties broken by lower pool index; returns min(k, M) neighbors.
    """
    query = np.asarray(query, dtype=np.float64).reshape(-1)
    pool = np.asarray(pool, dtype=np.float64)
    if pool.ndim != 2 or pool.shape[0] < 1:
        raise ValueError(f"pool must be a non-empty [M, D] matrix, got shape {pool.shape}")
    if pool.shape[1] != query.shape[0]:
        raise ValueError(f"dimension mismatch: query D={query.shape[0]}, pool D={pool.shape[1]}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    m = pool.shape[0]
    kk = min(k, m)
    diff = pool - query[None, :]
    d2 = np.einsum("ij,ij->i", diff, diff)
    if kk < m:
        # gather every candidate tied with the kk-th smallest, then stable
        # sort so equal distances resolve to the lower pool index
        thresh = np.partition(d2, kk - 1)[kk - 1]
        cand = np.flatnonzero(d2 <= thresh)
    else:
        cand = np.arange(m)
    order = cand[np.argsort(d2[cand], kind="stable")][:kk]
    return NeighborResult(distances=np.sqrt(d2[order]), indices=order)


def lid_mle(distances: np.ndarray, params: LidParams = LidParams()) -> float:
    """MLE estimate from ascending neighbor distances; always in (0, lid_cap]."""
    r = np.asarray(distances, dtype=np.float64)
    if r.ndim != 1 or r.shape[0] < 2:
        raise ValueError(f"need at least 2 distances, got shape {r.shape}")
    if np.any(np.diff(r) < 0):
        raise ValueError("distances must be sorted ascending")
    if np.any(r < 0):
        raise ValueError("distances must be non-negative")
    r = np.maximum(r, params.distance_floor)
    mean_log = float(np.mean(np.log(r / r[-1])))
    if mean_log >= 0.0:
        return params.lid_cap
    return min(-1.0 / mean_log, params.lid_cap)


def _batch_lid_from_sq(d2: np.ndarray, params: LidParams) -> np.ndarray:
    r = np.sqrt(np.maximum(d2, 0.0))
    r = np.maximum(r, params.distance_floor)
    mean_log = np.mean(np.log(r / r[:, -1:]), axis=1)
    out = np.full(mean_log.shape, params.lid_cap)
    neg = mean_log < 0.0
    out[neg] = np.minimum(-1.0 / mean_log[neg], params.lid_cap)
    return out


def batch_lid(queries: np.ndarray, pool: np.ndarray,
              params: LidParams = LidParams(), exclude_self: bool = False) -> np.ndarray:
    """LID estimate per query row against the pool.

    exclude_self=True requires queries to be the pool itself (row-aligned);
    the zero self-distance is dropped. Effective k clamps to the available
    pool size with a warning.
    """
    queries = np.asarray(queries, dtype=np.float64)
    pool = np.asarray(pool, dtype=np.float64)
    if queries.ndim != 2 or pool.ndim != 2:
        raise ValueError("queries and pool must be [Q, D] and [M, D] matrices")
    if queries.shape[1] != pool.shape[1]:
        raise ValueError(f"dimension mismatch: {queries.shape[1]} vs {pool.shape[1]}")
    if exclude_self and queries.shape[0] != pool.shape[0]:
        raise ValueError("exclude_self requires queries to be the pool rows")
    queries = _maybe_normalize(queries, params.metric)
    pool = _maybe_normalize(pool, params.metric)
    avail = pool.shape[0] - (1 if exclude_self else 0)
    if avail < 2:
        raise ValueError(f"pool too small for LID: {avail} usable neighbors")
    k_eff = min(params.k, avail)
    if k_eff < params.k:
        log.warning("batch_lid: k clamped from %d to %d (pool size %d)",
                    params.k, k_eff, pool.shape[0])
    d2 = _kernels.knn_sq_topk(queries, pool, k_eff, exclude_self=exclude_self)
    return _batch_lid_from_sq(d2, params)
