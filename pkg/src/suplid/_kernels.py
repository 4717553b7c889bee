"""Hot inner loops: brute-force kNN top-k and SLIC pixel assignment.

Each kernel has a numba-jitted implementation and a pure-numpy fallback.
SUPLID_NO_NUMBA=1 (or a missing numba install) selects the fallbacks.
Both paths produce identical results; benchmarks/bench_kernels.py
compares their throughput.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("SUPLID_NO_NUMBA", "0").lower() in ("1", "true", "yes")

NUMBA_ENABLED = False
if not _DISABLED:
    try:
        from numba import njit, prange

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        pass


# ---------------------------------------------------------------------------
# kNN smallest-k squared distances (distances only, ascending per row)
# ---------------------------------------------------------------------------

def _knn_sq_topk_numpy(queries: np.ndarray, pool: np.ndarray, k: int,
                       exclude_self: bool = False) -> np.ndarray:
    q = np.asarray(queries, dtype=np.float64)
    p = np.asarray(pool, dtype=np.float64)
    m = p.shape[0]
    pn = np.einsum("ij,ij->i", p, p)
    out = np.empty((q.shape[0], k), dtype=np.float64)
    chunk = max(1, int(2**24 // max(1, m)))
    for s in range(0, q.shape[0], chunk):
        blk = q[s:s + chunk]
        d2 = np.einsum("ij,ij->i", blk, blk)[:, None] + pn[None, :] - 2.0 * (blk @ p.T)
        np.maximum(d2, 0.0, out=d2)
        if exclude_self:
            rows = np.arange(s, min(s + chunk, q.shape[0]))
            d2[np.arange(len(rows)), rows] = np.inf
        if k < m:
            part = np.partition(d2, k - 1, axis=1)[:, :k]
        else:
            part = d2
        part.sort(axis=1)
        out[s:s + chunk] = part
    return out


if NUMBA_ENABLED:

    @njit(cache=True, parallel=True)
    def _knn_sq_topk_numba(q, p, k, exclude_self):  # pragma: no cover - jitted
        nq, d = q.shape
        m = p.shape[0]
        out = np.empty((nq, k), dtype=np.float64)
        for i in prange(nq):
            best = np.full(k, np.inf)
            for j in range(m):
                if exclude_self and j == i:
                    continue
                acc = 0.0
                for t in range(d):
                    diff = q[i, t] - p[j, t]
                    acc += diff * diff
                if acc < best[k - 1]:
                    pos = k - 1
                    while pos > 0 and best[pos - 1] > acc:
                        best[pos] = best[pos - 1]
                        pos -= 1
                    best[pos] = acc
            for t in range(k):
                out[i, t] = best[t]
        return out


def knn_sq_topk(queries: np.ndarray, pool: np.ndarray, k: int,
                exclude_self: bool = False) -> np.ndarray:
    """Squared Euclidean distances to the k nearest pool rows, ascending.

    With exclude_self=True, row i of the queries is assumed to be row i of
    the pool and is skipped (requires queries aligned with pool rows).
    """
    # the insertion top-k costs O(m*k) per query, so BLAS + partition wins
    # once k grows past a few dozen
    if NUMBA_ENABLED and k <= 64:
        q = np.ascontiguousarray(queries, dtype=np.float64)
        p = np.ascontiguousarray(pool, dtype=np.float64)
        return _knn_sq_topk_numba(q, p, k, exclude_self)
    return _knn_sq_topk_numpy(queries, pool, k, exclude_self)


# ---------------------------------------------------------------------------
# SLIC assignment: each pixel -> nearest center within a 2S x 2S window
# ---------------------------------------------------------------------------
# Distance compared in squared form of D = sqrt(d_lab^2 + (d_xy/S)^2 m^2);
# strict < with an ascending center loop makes the lower index win on ties.

def _slic_assign_numpy(lab: np.ndarray, centers: np.ndarray, spacing: float,
                       compactness: float) -> np.ndarray:
    h, w, _ = lab.shape
    labels = np.full((h, w), -1, dtype=np.int32)
    dist = np.full((h, w), np.inf, dtype=np.float64)
    ratio = (compactness * compactness) / (spacing * spacing)
    yy, xx = np.mgrid[0:h, 0:w]
    for c in range(centers.shape[0]):
        cy, cx, cl, ca, cb = centers[c]
        y0 = max(0, int(cy - 2 * spacing))
        y1 = min(h, int(cy + 2 * spacing) + 1)
        x0 = max(0, int(cx - 2 * spacing))
        x1 = min(w, int(cx + 2 * spacing) + 1)
        sub = lab[y0:y1, x0:x1]
        dl = sub[..., 0] - cl
        da = sub[..., 1] - ca
        db = sub[..., 2] - cb
        dy = yy[y0:y1, x0:x1] - cy
        dx = xx[y0:y1, x0:x1] - cx
        d = dl * dl + da * da + db * db + (dy * dy + dx * dx) * ratio
        win_dist = dist[y0:y1, x0:x1]
        better = d < win_dist
        win_dist[better] = d[better]
        labels[y0:y1, x0:x1][better] = c
    return labels


if NUMBA_ENABLED:

    @njit(cache=True)
    def _slic_assign_numba(lab, centers, spacing, compactness):  # pragma: no cover
        h, w, _ = lab.shape
        labels = np.full((h, w), -1, dtype=np.int32)
        dist = np.full((h, w), np.inf, dtype=np.float64)
        ratio = (compactness * compactness) / (spacing * spacing)
        for c in range(centers.shape[0]):
            cy = centers[c, 0]
            cx = centers[c, 1]
            y0 = max(0, int(cy - 2 * spacing))
            y1 = min(h, int(cy + 2 * spacing) + 1)
            x0 = max(0, int(cx - 2 * spacing))
            x1 = min(w, int(cx + 2 * spacing) + 1)
            for y in range(y0, y1):
                dy = y - cy
                for x in range(x0, x1):
                    dl = lab[y, x, 0] - centers[c, 2]
                    da = lab[y, x, 1] - centers[c, 3]
                    db = lab[y, x, 2] - centers[c, 4]
                    dx = x - cx
                    d = dl * dl + da * da + db * db + (dy * dy + dx * dx) * ratio
                    if d < dist[y, x]:
                        dist[y, x] = d
                        labels[y, x] = c
        return labels


def slic_assign(lab: np.ndarray, centers: np.ndarray, spacing: float,
                compactness: float) -> np.ndarray:
    """One SLIC assignment sweep; returns i32 [H, W] labels (-1 = uncovered)."""
    if NUMBA_ENABLED:
        return _slic_assign_numba(
            np.ascontiguousarray(lab, dtype=np.float64),
            np.ascontiguousarray(centers, dtype=np.float64),
            float(spacing), float(compactness))
    return _slic_assign_numpy(np.asarray(lab, dtype=np.float64),
                              np.asarray(centers, dtype=np.float64),
                              float(spacing), float(compactness))


def warmup() -> None:
    """Trigger JIT compilation of both kernels on tiny inputs."""
    rng = np.random.default_rng(0)
    q = rng.standard_normal((3, 4))
    knn_sq_topk(q, q, 2, exclude_self=True)
    lab = rng.standard_normal((6, 6, 3))
    centers = np.array([[1.0, 1.0, 0.0, 0.0, 0.0], [4.0, 4.0, 0.0, 0.0, 0.0]])
    slic_assign(lab, centers, 3.0, 10.0)
