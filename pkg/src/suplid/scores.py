"""OOD score computation: classifier confidence from logits, superpixel
aggregation, LID-based guidance against the weighted coreset, fusion and
pixel broadcast, plus the kNN / NNGuide baselines.

Every score in this module is oriented higher = more in-distribution.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .coreset import Coreset
from .lid import LidParams, lid_mle
from .superpixel import SuperpixelPartition

log = logging.getLogger(__name__)

CONFIDENCE_METHODS = ("msp", "maxlogit", "energy", "entropy", "kl_match")
GUIDANCE_METHODS = ("weighted_lid", "unweighted_lid", "knn_distance", "none")


@dataclass(frozen=True)
class FusionConfig:
    confidence_method: str = "energy"
    guidance_method: str = "weighted_lid"
    rectify_floor: float = 1e-6
    calibration_min: float = 0.0
    k_guidance: int = 400

    def __post_init__(self):
        if self.confidence_method not in CONFIDENCE_METHODS:
            raise ValueError(f"unknown confidence method {self.confidence_method!r}")
        if self.guidance_method not in GUIDANCE_METHODS:
            raise ValueError(f"unknown guidance method {self.guidance_method!r}")
        if self.rectify_floor <= 0:
            raise ValueError("rectify_floor must be positive")


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _logsumexp(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=-1)
    return m + np.log(np.exp(logits - m[..., None]).sum(axis=-1))


def confidence_from_logits(logits: np.ndarray, method: str,
                           templates: Optional[np.ndarray] = None) -> np.ndarray:
    """Per-pixel confidence from [H, W, K] logits, higher = ID."""
    if logits.ndim != 3 or logits.shape[2] < 2:
        raise ValueError(f"logits must be [H, W, K>=2], got {logits.shape}")
    if not np.all(np.isfinite(logits)):
        raise ValueError("non-finite logits")
    x = logits.astype(np.float64)
    if method == "msp":
        return _softmax(x).max(axis=-1).astype(np.float32)
    if method == "maxlogit":
        return x.max(axis=-1).astype(np.float32)
    if method == "energy":
        return _logsumexp(x).astype(np.float32)
    if method == "entropy":
        p = _softmax(x)
        ent = -(p * np.log(np.maximum(p, 1e-300))).sum(axis=-1)
        return (np.log(x.shape[-1]) - ent).astype(np.float32)
    if method == "kl_match":
        if templates is None:
            raise ValueError("kl_match requires templates")
        k = x.shape[-1]
        if templates.shape != (k, k):
            raise ValueError(f"templates must be [K, K] = [{k}, {k}]")
        logp = np.log(np.maximum(_softmax(x), 1e-300))
        d = templates.astype(np.float64)
        const = (d * np.log(np.maximum(d, 1e-300))).sum(axis=1)  # per-template entropy term
        # KL(d_c || p) = sum_j d_cj (log d_cj - log p_j)
        kl = const[None, None, :] - np.einsum("hwk,ck->hwc", logp, d)
        return (-kl.min(axis=-1)).astype(np.float32)
    raise ValueError(f"unknown confidence method {method!r}")


def build_kl_templates(logit_maps, num_classes: int) -> np.ndarray:
    """Per-predicted-class mean softmax vectors over a stream of logit maps.

    Classes never predicted fall back to the uniform distribution.
    """
    sums = np.zeros((num_classes, num_classes), dtype=np.float64)
    counts = np.zeros(num_classes, dtype=np.int64)
    seen = 0
    for logits in logit_maps:
        if logits.shape[-1] != num_classes:
            raise ValueError("logit map class count mismatch")
        p = _softmax(logits.astype(np.float64)).reshape(-1, num_classes)
        pred = p.argmax(axis=1)
        np.add.at(sums, pred, p)
        counts += np.bincount(pred, minlength=num_classes)
        seen += p.shape[0]
    if seen == 0:
        raise ValueError("empty logit stream")
    out = np.empty_like(sums)
    for c in range(num_classes):
        if counts[c] == 0:
            log.warning("class %d never predicted; uniform KL template used", c)
            out[c] = 1.0 / num_classes
        else:
            out[c] = sums[c] / counts[c]
    return out.astype(np.float32)


def aggregate_confidence(pixel_conf: np.ndarray, partition: SuperpixelPartition) -> np.ndarray:
    """Mean confidence per superpixel (f64 accumulation)."""
    if pixel_conf.shape != partition.labels.shape:
        raise ValueError("confidence map shape must match the partition")
    n = partition.num_superpixels
    flat = partition.labels.ravel()
    sums = np.bincount(flat, weights=pixel_conf.ravel().astype(np.float64), minlength=n)
    return sums / partition.pixel_counts


def rectify(s: np.ndarray, config: FusionConfig) -> np.ndarray:
    """Shift by the training-pass minimum and floor at rectify_floor."""
    s = np.asarray(s, dtype=np.float64)
    return np.maximum(s - config.calibration_min, 0.0) + config.rectify_floor


def guidance_score(superpixel_embeddings: np.ndarray, cs: Coreset, method: str = "weighted_lid",
                   k: int = 400, lid_params: Optional[LidParams] = None,
                   floor: float = 1e-6) -> np.ndarray:
    """Geometry-based guidance per superpixel, higher = ID.

    weighted_lid: LID of each (unweighted) query against the coreset with
    every row scaled by its LID weight. unweighted_lid: same against the
    raw coreset. knn_distance: reciprocal mean k-NN distance in the
    weighted pool. none: all ones.
    """
    if method not in GUIDANCE_METHODS:
        raise ValueError(f"unknown guidance method {method!r}")
    q = np.asarray(superpixel_embeddings, dtype=np.float64)
    if q.ndim != 2:
        raise ValueError("superpixel embeddings must be [N', D]")
    if method == "none":
        return np.ones(q.shape[0], dtype=np.float64)
    if q.shape[1] != cs.embeddings.shape[1]:
        raise ValueError(f"dimension mismatch: queries D={q.shape[1]}, coreset D={cs.embeddings.shape[1]}")
    pool = cs.embeddings.astype(np.float64)
    if method in ("weighted_lid", "knn_distance"):
        pool = pool * cs.weights.astype(np.float64)[:, None]
    if pool.shape[0] < 2:
        raise ValueError("coreset pool smaller than 2")
    k_eff = min(k, pool.shape[0])
    if k_eff < k:
        log.warning("guidance k clamped from %d to pool size %d", k, pool.shape[0])
    if k_eff < 2 and method != "knn_distance":
        raise ValueError("need k >= 2 for LID guidance")
    d2 = _kernels.knn_sq_topk(q, pool, k_eff)
    if method == "knn_distance":
        return 1.0 / (floor + np.sqrt(np.maximum(d2, 0.0)).mean(axis=1))
    lp = lid_params or LidParams(k=k_eff)
    return np.array([lid_mle(np.sqrt(np.maximum(row, 0.0)), lp) for row in d2])


def fuse(s_conf: np.ndarray, d_guid: np.ndarray) -> np.ndarray:
    """Elementwise product of rectified confidence and guidance."""
    s_conf = np.asarray(s_conf, dtype=np.float64)
    d_guid = np.asarray(d_guid, dtype=np.float64)
    if s_conf.shape != d_guid.shape:
        raise ValueError("length mismatch between confidence and guidance")
    if np.any(s_conf < 0):
        raise ValueError("confidence must be rectified (>= 0)")
    if np.any(d_guid <= 0):
        raise ValueError("guidance must be positive")
    return s_conf * d_guid


def broadcast_to_pixels(per_superpixel: np.ndarray, partition: SuperpixelPartition) -> np.ndarray:
    """Spread superpixel scores back to an f32 [H, W] map."""
    per_superpixel = np.asarray(per_superpixel)
    if per_superpixel.shape[0] != partition.num_superpixels:
        raise ValueError("score vector length must equal the superpixel count")
    return per_superpixel[partition.labels].astype(np.float32)


def knn_baseline(superpixel_embeddings: np.ndarray, cs: Coreset, k: int = 400) -> np.ndarray:
    """Negative distance to the k-th nearest raw coreset embedding."""
    q = np.asarray(superpixel_embeddings, dtype=np.float64)
    pool = cs.embeddings.astype(np.float64)
    k_eff = min(k, pool.shape[0])
    d2 = _kernels.knn_sq_topk(q, pool, k_eff)
    return -np.sqrt(np.maximum(d2[:, -1], 0.0))


def nnguide_baseline(s_rectified: np.ndarray, superpixel_embeddings: np.ndarray,
                     cs: Coreset, k: int = 400) -> np.ndarray:
    """Rectified confidence scaled by the mean inner product with the k
    nearest raw coreset embeddings (nearest by Euclidean distance)."""
    q = np.asarray(superpixel_embeddings, dtype=np.float64)
    s = np.asarray(s_rectified, dtype=np.float64)
    if s.shape[0] != q.shape[0]:
        raise ValueError("confidence length must match query count")
    pool = cs.embeddings.astype(np.float64)
    k_eff = min(k, pool.shape[0])
    pn = np.einsum("ij,ij->i", pool, pool)
    g = np.empty(q.shape[0], dtype=np.float64)
    for s0 in range(0, q.shape[0], 1024):
        blk = q[s0:s0 + 1024]
        d2 = np.einsum("ij,ij->i", blk, blk)[:, None] + pn[None, :] - 2.0 * (blk @ pool.T)
        idx = np.argsort(d2, axis=1, kind="stable")[:, :k_eff]
        dots = (blk @ pool.T)
        g[s0:s0 + 1024] = np.take_along_axis(dots, idx, axis=1).mean(axis=1)
    return s * g


def threshold_map(score_map: np.ndarray, tau: float) -> np.ndarray:
    """0 = ID where score >= tau, else 1 = OOD."""
    return np.where(score_map >= tau, 0, 1).astype(np.uint8)
