"""SLIC superpixel segmentation in CIELAB with 4-connectivity enforcement.

The distance compared during assignment is
D = sqrt(d_lab^2 + (d_xy / S)^2 * compactness^2) with S the initial grid
spacing, kept fixed across iterations. Assignment ties go to the lower
center index, which makes the whole procedure deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import _kernels

# sRGB -> XYZ (D65), IEC 61966-2-1
_RGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
_WHITE_D65 = np.array([0.95047, 1.0, 1.08883])


@dataclass(frozen=True)
class SlicParams:
    pixels_per_superpixel: int = 200
    compactness: float = 10.0
    max_iterations: int = 10
    min_region_fraction: float = 0.25

    def __post_init__(self):
        if self.pixels_per_superpixel < 1:
            raise ValueError("pixels_per_superpixel must be positive")
        if self.compactness <= 0:
            raise ValueError("compactness must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if not (0 < self.min_region_fraction <= 1):
            raise ValueError("min_region_fraction must be in (0, 1]")


@dataclass
class SuperpixelPartition:
    labels: np.ndarray            # i32 [H, W], values in [0, N')
    num_superpixels: int
    pixel_counts: np.ndarray = field(default=None)
    centroids: np.ndarray = field(default=None)  # [N', 2] (row, col)

    def __post_init__(self):
        if self.pixel_counts is None or self.centroids is None:
            n = self.num_superpixels
            flat = self.labels.ravel()
            self.pixel_counts = np.bincount(flat, minlength=n)
            h, w = self.labels.shape
            yy, xx = np.mgrid[0:h, 0:w]
            cy = np.bincount(flat, weights=yy.ravel(), minlength=n)
            cx = np.bincount(flat, weights=xx.ravel(), minlength=n)
            self.centroids = np.stack(
                [cy / self.pixel_counts, cx / self.pixel_counts], axis=1)
        self.validate()

    def validate(self):
        if self.labels.dtype != np.int32 or self.labels.ndim != 2:
            raise ValueError("labels must be i32 [H, W]")
        n = self.num_superpixels
        if n < 1:
            raise ValueError("num_superpixels must be positive")
        lmin, lmax = int(self.labels.min()), int(self.labels.max())
        if lmin < 0 or lmax >= n:
            raise ValueError(f"labels outside [0, {n}): [{lmin}, {lmax}]")
        if np.any(self.pixel_counts < 1):
            raise ValueError("every label must own at least one pixel")
        if int(self.pixel_counts.sum()) != self.labels.size:
            raise ValueError("pixel counts do not sum to H*W")


def rgb_to_lab(image: np.ndarray) -> np.ndarray:
    """u8 RGB [H,W,3] -> CIELAB f32 [H,W,3] (D65, standard sRGB linearization)."""
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected [H,W,3] RGB image, got shape {image.shape}")
    srgb = image.astype(np.float64) / 255.0
    lin = np.where(srgb <= 0.04045, srgb / 12.92, ((srgb + 0.055) / 1.055) ** 2.4)
    xyz = lin @ _RGB_TO_XYZ.T
    t = xyz / _WHITE_D65
    eps = (6.0 / 29.0) ** 3
    f = np.where(t > eps, np.cbrt(t), t / (3 * (6.0 / 29.0) ** 2) + 4.0 / 29.0)
    lab = np.empty_like(xyz)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab.astype(np.float32)


def _init_centers(lab: np.ndarray, n: int) -> np.ndarray:
    """Grid-spaced centers perturbed to the lowest-gradient 3x3 position."""
    h, w, _ = lab.shape
    spacing = np.sqrt(h * w / n)
    gy = max(1, int(round(h / spacing)))
    gx = max(1, int(round(w / spacing)))
    # squared lab gradient magnitude
    grad = np.zeros((h, w), dtype=np.float64)
    d = np.diff(lab.astype(np.float64), axis=0)
    grad[:-1] += (d * d).sum(-1)
    d = np.diff(lab.astype(np.float64), axis=1)
    grad[:, :-1] += (d * d).sum(-1)
    centers = []
    for iy in range(gy):
        for ix in range(gx):
            cy = int(np.clip((iy + 0.5) * h / gy, 1, h - 2)) if h > 2 else h // 2
            cx = int(np.clip((ix + 0.5) * w / gx, 1, w - 2)) if w > 2 else w // 2
            best = (np.inf, cy, cx)
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    y, x = cy + dy, cx + dx
                    if 0 <= y < h and 0 <= x < w and grad[y, x] < best[0]:
                        best = (grad[y, x], y, x)
            y, x = best[1], best[2]
            centers.append([y, x, lab[y, x, 0], lab[y, x, 1], lab[y, x, 2]])
    return np.array(centers, dtype=np.float64)


def _update_centers(lab: np.ndarray, labels: np.ndarray, centers: np.ndarray) -> np.ndarray:
    c = centers.shape[0]
    flat = labels.ravel()
    counts = np.bincount(flat, minlength=c).astype(np.float64)
    h, w, _ = lab.shape
    yy, xx = np.mgrid[0:h, 0:w]
    new = centers.copy()
    fields = [yy.ravel(), xx.ravel(),
              lab[..., 0].ravel().astype(np.float64),
              lab[..., 1].ravel().astype(np.float64),
              lab[..., 2].ravel().astype(np.float64)]
    nonzero = counts > 0
    for i, f in enumerate(fields):
        acc = np.bincount(flat, weights=f, minlength=c)
        new[nonzero, i] = acc[nonzero] / counts[nonzero]
    return new


def enforce_connectivity(labels: np.ndarray, expected_area: float,
                         min_region_fraction: float) -> np.ndarray:
    """Merge small 4-connected components into their largest adjacent
    neighbor; relabel densely in scan order."""
    h, w = labels.shape
    # 4-connected components of the label map via a same-label pixel graph
    idx = np.arange(h * w).reshape(h, w)
    same_h = labels[:, :-1] == labels[:, 1:]
    same_v = labels[:-1, :] == labels[1:, :]
    rows = np.concatenate([idx[:, :-1][same_h].ravel(), idx[:-1, :][same_v].ravel()])
    cols = np.concatenate([idx[:, 1:][same_h].ravel(), idx[1:, :][same_v].ravel()])
    graph = sparse.coo_matrix(
        (np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(h * w, h * w))
    n_comp, comp_flat = sparse.csgraph.connected_components(graph, directed=False)
    comp = comp_flat.reshape(h, w).astype(np.int64)
    areas = np.bincount(comp.ravel(), minlength=n_comp).astype(np.int64)

    # deduplicated 4-adjacency between components
    diff_h = ~same_h
    diff_v = ~same_v
    u = np.concatenate([comp[:, :-1][diff_h].ravel(), comp[:-1, :][diff_v].ravel()])
    v = np.concatenate([comp[:, 1:][diff_h].ravel(), comp[1:, :][diff_v].ravel()])
    pairs = np.unique(np.stack([np.concatenate([u, v]), np.concatenate([v, u])], axis=1), axis=0)
    adj = [set() for _ in range(n_comp)]
    for a_, b_ in pairs:
        adj[a_].add(int(b_))

    parent = np.arange(n_comp)

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    threshold = min_region_fraction * expected_area
    radj = {i: set(adj[i]) for i in range(n_comp)}
    changed = True
    while changed:
        changed = False
        roots = sorted(radj)
        if len(roots) <= 1:
            break
        for r in roots:
            if find(r) != r or areas[r] >= threshold:
                continue
            # largest adjacent root, ties to the lower id
            neigh = {}
            for v in radj[r]:
                rv = find(v)
                if rv != r:
                    neigh[rv] = areas[rv]
            if not neigh:
                continue
            target = min(neigh, key=lambda x: (-neigh[x], x))
            parent[r] = target
            areas[target] += areas[r]
            radj[target].update(radj[r])
            del radj[r]
            changed = True

    roots = np.array([find(i) for i in range(n_comp)])
    merged = roots[comp]
    # densify in row-major first-appearance order
    _, first = np.unique(merged.ravel(), return_index=True)
    order = merged.ravel()[np.sort(first)]
    remap = np.full(n_comp, -1, dtype=np.int32)
    remap[order] = np.arange(len(order), dtype=np.int32)
    return remap[merged].astype(np.int32)


def slic_segment(image: np.ndarray, params: SlicParams = SlicParams()) -> SuperpixelPartition:
    """SLIC over a u8 RGB image; deterministic for fixed inputs."""
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected [H,W,3] RGB image, got shape {image.shape}")
    h, w = image.shape[:2]
    n = (h * w) // params.pixels_per_superpixel
    if n < 1:
        raise ValueError(
            f"image of {h}x{w} pixels smaller than one superpixel "
            f"({params.pixels_per_superpixel})")
    lab = rgb_to_lab(image).astype(np.float64)
    spacing = float(np.sqrt(h * w / n))
    centers = _init_centers(lab, n)
    labels = None
    for _ in range(params.max_iterations):
        labels = _kernels.slic_assign(lab, centers, spacing, params.compactness)
        if np.any(labels < 0):
            # windows missed a pixel (degenerate geometry): nearest center spatially
            yy, xx = np.nonzero(labels < 0)
            d = (yy[:, None] - centers[None, :, 0]) ** 2 + (xx[:, None] - centers[None, :, 1]) ** 2
            labels[yy, xx] = np.argmin(d, axis=1).astype(np.int32)
        centers = _update_centers(lab, labels, centers)
    final = enforce_connectivity(labels, h * w / n, params.min_region_fraction)
    return SuperpixelPartition(labels=final, num_superpixels=int(final.max()) + 1)
