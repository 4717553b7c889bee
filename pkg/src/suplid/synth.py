"""Synthetic fixtures with known intrinsic dimensionality.

Class manifolds are seeded Gaussians on random orthonormal subspaces, so
the local intrinsic dimension is the subspace dimension by construction.
Scenes tile the image into colored class regions with one OOD blob and
produce features, logits (a linear nearest-center probe) and masks that
exercise the full pipeline at desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

OOD_KINDS = ("far", "near", "high_dim")

# distinct, saturated colors per class region (cycled), plus the blob color
_PALETTE = np.array([
    [200, 40, 40], [40, 160, 40], [40, 80, 220], [220, 200, 40],
    [160, 40, 200], [40, 200, 200], [240, 130, 20], [120, 120, 120],
], dtype=np.uint8)
_BLOB_COLOR = np.array([255, 255, 255], dtype=np.uint8)


@dataclass(frozen=True)
class SynthSpec:
    num_classes: int = 4
    intrinsic_dims: tuple = (6, 6, 6, 6)
    ambient_dim: int = 64
    cluster_separation: float = 100.0
    noise_sigma: float = 0.01
    image_size: tuple = (64, 64)
    ood_kind: str = "far"
    seed: int = 0
    logit_temperature: float = field(default=0.0)  # 0 -> separation / 4

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("need at least 2 classes")
        if len(self.intrinsic_dims) != self.num_classes:
            raise ValueError("intrinsic_dims must have one entry per class")
        if any(not (1 <= d <= self.ambient_dim) for d in self.intrinsic_dims):
            raise ValueError("every intrinsic dim must be in [1, ambient_dim]")
        if self.cluster_separation <= 0:
            raise ValueError("cluster_separation must be positive")
        if self.ood_kind not in OOD_KINDS:
            raise ValueError(f"ood_kind must be one of {OOD_KINDS}")
        if self.ambient_dim <= self.num_classes:
            raise ValueError("ambient_dim must exceed num_classes (center placement)")


def _centers(spec: SynthSpec) -> np.ndarray:
    """Class centers on distinct axes at pairwise distance separation*sqrt(2)."""
    c = np.zeros((spec.num_classes, spec.ambient_dim))
    for y in range(spec.num_classes):
        c[y, y] = spec.cluster_separation
    return c


def _basis(spec: SynthSpec, y: int) -> np.ndarray:
    """Seeded orthonormal D x d_y basis for class y."""
    rng = np.random.default_rng((spec.seed, 9001, y))
    g = rng.standard_normal((spec.ambient_dim, spec.intrinsic_dims[y]))
    q, _ = np.linalg.qr(g)
    return q


def make_manifold_samples(spec: SynthSpec, class_y: int, n: int,
                          substream: int = 0) -> np.ndarray:
    """n samples on the class manifold: center + B @ g + isotropic noise."""
    if not (0 <= class_y < spec.num_classes):
        raise ValueError(f"class {class_y} outside [0, {spec.num_classes})")
    rng = np.random.default_rng((spec.seed, class_y, substream))
    d = spec.intrinsic_dims[class_y]
    g = rng.standard_normal((n, d))
    basis = _basis(spec, class_y)
    samples = _centers(spec)[class_y][None, :] + g @ basis.T
    if spec.noise_sigma > 0:
        samples += spec.noise_sigma * rng.standard_normal((n, spec.ambient_dim))
    return samples


def _ood_samples(spec: SynthSpec, n: int, substream: int = 0) -> np.ndarray:
    rng = np.random.default_rng((spec.seed, 7777, OOD_KINDS.index(spec.ood_kind), substream))
    d = spec.ambient_dim
    if spec.ood_kind == "far":
        center = np.zeros(d)
        center[spec.num_classes] = -3.0 * spec.cluster_separation
        return center[None, :] + rng.standard_normal((n, d))
    if spec.ood_kind == "near":
        centers = _centers(spec)
        mid = 0.5 * (centers[0] + centers[1])
        return mid[None, :] + rng.standard_normal((n, d))
    # high_dim: full-rank noise around an ID center
    return _centers(spec)[0][None, :] + 2.0 * rng.standard_normal((n, d))


def _region_map(spec: SynthSpec) -> tuple[np.ndarray, np.ndarray]:
    """Class id per pixel (vertical strips) and the OOD blob mask."""
    h, w = spec.image_size
    k = spec.num_classes
    cols = np.minimum((np.arange(w) * k) // w, k - 1)
    classes = np.broadcast_to(cols[None, :], (h, w)).copy()
    bh, bw = max(2, h // 4), max(2, w // 4)
    y0, x0 = (h - bh) // 2, (w - bw) // 2
    if bh > h or bw > w:
        raise ValueError("OOD blob larger than the image")
    blob = np.zeros((h, w), dtype=bool)
    blob[y0:y0 + bh, x0:x0 + bw] = True
    return classes, blob


def make_scene(spec: SynthSpec):
    """Full fixture: (image u8 [H,W,3], features f32 [H,W,D],
    logits f32 [H,W,K], train_labels u8 [H,W], ood_mask u8 [H,W]).

    The logit probe is retried over derived seeds until the ID argmax
    accuracy reaches 0.95.
    """
    h, w = spec.image_size
    k = spec.num_classes
    classes, blob = _region_map(spec)

    image = _PALETTE[classes % len(_PALETTE)]
    image = image.copy()
    image[blob] = _BLOB_COLOR

    features = np.empty((h, w, spec.ambient_dim), dtype=np.float64)
    for y in range(k):
        sel = (classes == y) & ~blob
        features[sel] = make_manifold_samples(spec, y, int(sel.sum()), substream=1)
    features[blob] = _ood_samples(spec, int(blob.sum()), substream=1)

    centers = _centers(spec)
    tau = spec.logit_temperature or spec.cluster_separation / 4.0
    for attempt in range(16):
        rng = np.random.default_rng((spec.seed, 31337, attempt))
        jitter = 0.01 * rng.standard_normal((spec.ambient_dim, k))
        weight = centers.T / tau + jitter
        bias = -np.einsum("ij,ij->i", centers, centers) / (2.0 * tau)
        logits = features @ weight + bias[None, None, :]
        pred = logits.argmax(axis=-1)
        acc = float((pred[~blob] == classes[~blob]).mean())
        if acc >= 0.95:
            break
    else:
        raise RuntimeError(f"could not reach 0.95 ID logit accuracy (last {acc:.3f})")

    train_labels = classes.astype(np.uint8)
    train_labels[blob] = 255
    ood_mask = blob.astype(np.uint8)
    return (image, features.astype(np.float32), logits.astype(np.float32),
            train_labels, ood_mask)
