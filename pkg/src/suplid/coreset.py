"""Per-class geometrical coreset: superpixel embeddings with the lowest
LID are selected per class and carry their LID estimate as a weight.
Ablation strategies (random / energy / diverse) share the same weight
semantics so they isolate selection, not weighting.

Persisted as the SLCR container (little-endian):
magic "SLCR", u16 version=1, u8 strategy code, u8 reserved, u32 K,
u32 rows R, u32 D, u32 k_used, R x u32 class labels, R x f32 weights,
R x D f32 embeddings, u32 template flag, optional K x K f32 templates.
"""

from __future__ import annotations

import io
import logging
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Optional, Sequence, Union

import numpy as np

from .lid import LidParams, batch_lid
from .superpixel import SuperpixelPartition
from .tensorio import TensorFormatError

log = logging.getLogger(__name__)

MAGIC = b"SLCR"
VERSION = 1

STRATEGIES = ("lid", "random", "energy", "diverse")
_STRATEGY_CODE = {name: i + 1 for i, name in enumerate(STRATEGIES)}
_CODE_STRATEGY = {v: k for k, v in _STRATEGY_CODE.items()}


@dataclass
class SuperpixelRecord:
    embedding: np.ndarray   # f32 [D]
    class_label: int        # -1 when unlabeled
    purity: float           # majority fraction in (0, 1]


@dataclass(frozen=True)
class CoresetParams:
    m: int = 400
    k: int = 400
    purity_threshold: float = 0.75
    strategy: str = "lid"
    seed: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if not (0 < self.purity_threshold <= 1):
            raise ValueError("purity_threshold must be in (0, 1]")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}, expected one of {STRATEGIES}")


@dataclass
class Coreset:
    embeddings: np.ndarray   # f32 [R, D], rows grouped by class
    weights: np.ndarray      # f32 [R], all > 0
    class_labels: np.ndarray # i64 [R]
    num_classes: int
    m: int
    k_used: int
    strategy: str
    metadata: dict = field(default_factory=dict)
    kl_templates: Optional[np.ndarray] = None  # f32 [K, K] row-stochastic

    def validate(self):
        r, d = self.embeddings.shape
        if self.weights.shape != (r,) or self.class_labels.shape != (r,):
            raise ValueError("weights/class_labels length must match embedding rows")
        if not np.all(np.isfinite(self.embeddings)):
            raise ValueError("non-finite embedding values")
        if np.any(self.weights <= 0) or not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite and > 0")
        if np.any(self.class_labels < 0) or np.any(self.class_labels >= self.num_classes):
            raise ValueError("class labels outside [0, K)")
        if np.any(np.diff(self.class_labels) < 0):
            raise ValueError("rows must be grouped by ascending class")
        if self.kl_templates is not None:
            k = self.num_classes
            if self.kl_templates.shape != (k, k):
                raise ValueError("templates must be K x K")
            if not np.allclose(self.kl_templates.sum(axis=1), 1.0, atol=1e-5):
                raise ValueError("templates must each sum to 1")


def superpixel_embed(features: np.ndarray, partition: SuperpixelPartition,
                     train_labels: Optional[np.ndarray] = None,
                     return_indices: bool = False):
    """Per-superpixel mean feature embedding plus majority-class bookkeeping.

    Superpixel labels are projected to the feature grid by nearest-neighbor
    coordinate scaling; superpixels covering no feature cell borrow the
    feature vector nearest their centroid.
    """
    if features.ndim != 3:
        raise ValueError(f"features must be [Hf, Wf, D], got {features.shape}")
    h, w = partition.labels.shape
    hf, wf, dim = features.shape
    if hf > h or wf > w:
        raise ValueError(f"features ({hf}x{wf}) must not exceed image resolution ({h}x{w})")
    n = partition.num_superpixels
    if n < 1:
        raise ValueError("empty partition")

    fy = np.minimum(np.round(np.arange(hf) * h / hf).astype(np.int64), h - 1)
    fx = np.minimum(np.round(np.arange(wf) * w / wf).astype(np.int64), w - 1)
    proj = partition.labels[np.ix_(fy, fx)]  # [Hf, Wf] superpixel ids

    flat_lbl = proj.ravel()
    flat_feat = features.reshape(-1, dim).astype(np.float64)
    counts = np.bincount(flat_lbl, minlength=n).astype(np.float64)
    sums = np.zeros((n, dim), dtype=np.float64)
    np.add.at(sums, flat_lbl, flat_feat)
    covered = counts > 0
    means = np.zeros((n, dim), dtype=np.float64)
    means[covered] = sums[covered] / counts[covered, None]
    if not np.all(covered):
        for sp in np.flatnonzero(~covered):
            cy, cx = partition.centroids[sp]
            i = int(np.clip(round(cy * hf / h), 0, hf - 1))
            j = int(np.clip(round(cx * wf / w), 0, wf - 1))
            means[sp] = features[i, j]

    if train_labels is not None:
        if train_labels.shape != (h, w):
            raise ValueError("train_labels shape must match the partition")
        valid = train_labels != 255
        lbls = partition.labels[valid].astype(np.int64)
        cls = train_labels[valid].astype(np.int64)
        n_cls = int(cls.max()) + 1 if cls.size else 1
        table = np.zeros((n, n_cls), dtype=np.int64)
        np.add.at(table, (lbls, cls), 1)

    records, kept = [], []
    for sp in range(n):
        if train_labels is None:
            records.append(SuperpixelRecord(
                embedding=means[sp].astype(np.float32), class_label=-1, purity=1.0))
            kept.append(sp)
            continue
        total = table[sp].sum()
        if total == 0:
            log.warning("superpixel %d has no labeled pixels; record dropped", sp)
            continue
        major = int(np.argmax(table[sp]))  # argmax ties -> lower class id
        records.append(SuperpixelRecord(
            embedding=means[sp].astype(np.float32),
            class_label=major,
            purity=float(table[sp, major] / total)))
        kept.append(sp)
    if return_indices:
        return records, np.array(kept, dtype=np.int64)
    return records


def _select_diverse(pool: np.ndarray, m_eff: int) -> np.ndarray:
    """Greedy farthest-point (k-center) selection starting at the medoid."""
    sq = np.einsum("ij,ij->i", pool, pool)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (pool @ pool.T), 0.0)
    start = int(np.argmin(np.sqrt(d2).sum(axis=1)))  # medoid, ties -> lower index
    chosen = [start]
    mind = d2[start].copy()
    for _ in range(m_eff - 1):
        mind[chosen] = -np.inf
        nxt = int(np.argmax(mind))
        chosen.append(nxt)
        np.minimum(mind, d2[nxt], out=mind)
    return np.array(sorted(chosen), dtype=np.int64)


def build_coreset(records: Sequence[SuperpixelRecord], params: CoresetParams = CoresetParams(),
                  confidences: Optional[Sequence[float]] = None,
                  lid_params: Optional[LidParams] = None) -> Coreset:
    """Select m embeddings per class and attach their LID estimates as weights.

    *confidences* is the per-record side channel required by the energy
    strategy (records with higher confidence are treated as more ID).
    """
    if params.strategy == "energy" and confidences is None:
        raise ValueError("strategy 'energy' requires per-record confidences")
    if confidences is not None and len(confidences) != len(records):
        raise ValueError("confidences must align with records")

    kept_idx = [i for i, r in enumerate(records)
                if r.class_label >= 0 and r.purity >= params.purity_threshold]
    if not kept_idx:
        raise ValueError("no labeled records above the purity threshold")
    classes = sorted({records[i].class_label for i in kept_idx})
    num_classes = max(classes) + 1
    rng = np.random.default_rng(params.seed)

    all_emb, all_w, all_cls = [], [], []
    k_used = 0
    for y in classes:
        idx = np.array([i for i in kept_idx if records[i].class_label == y], dtype=np.int64)
        pool = np.stack([records[i].embedding for i in idx]).astype(np.float64)
        n = pool.shape[0]
        if n < 2:
            log.warning("class %d has %d usable records; skipped", y, n)
            continue
        lp = lid_params or LidParams()
        k_eff = min(params.k, n - 1)
        k_used = max(k_used, k_eff)
        lids = batch_lid(pool, pool, LidParams(k=k_eff, distance_floor=lp.distance_floor,
                                               lid_cap=lp.lid_cap, metric=lp.metric),
                         exclude_self=True)
        m_eff = min(params.m, n)
        if m_eff < params.m:
            log.warning("class %d pool (%d) smaller than m=%d; taking all", y, n, params.m)
        if params.strategy == "lid":
            order = np.lexsort((np.arange(n), lids))
            sel = np.sort(order[:m_eff])
        elif params.strategy == "random":
            sel = np.sort(rng.choice(n, size=m_eff, replace=False))
        elif params.strategy == "energy":
            conf = np.asarray([confidences[i] for i in idx], dtype=np.float64)
            order = np.lexsort((np.arange(n), -conf))
            sel = np.sort(order[:m_eff])
        else:  # diverse
            sel = _select_diverse(pool, m_eff)
        all_emb.append(pool[sel].astype(np.float32))
        all_w.append(lids[sel].astype(np.float32))
        all_cls.append(np.full(m_eff, y, dtype=np.int64))

    if not all_emb:
        raise ValueError("no class had at least 2 usable records")
    cs = Coreset(
        embeddings=np.concatenate(all_emb),
        weights=np.concatenate(all_w),
        class_labels=np.concatenate(all_cls),
        num_classes=num_classes,
        m=params.m,
        k_used=k_used,
        strategy=params.strategy,
    )
    cs.validate()
    return cs


PathOrIO = Union[str, BinaryIO]


def save_coreset(cs: Coreset, dest: PathOrIO) -> int:
    cs.validate()
    if isinstance(dest, str):
        with open(dest, "wb") as f:
            return save_coreset(cs, f)
    r, d = cs.embeddings.shape
    n = 0
    n += dest.write(MAGIC)
    n += dest.write(struct.pack("<HBB", VERSION, _STRATEGY_CODE[cs.strategy], 0))
    n += dest.write(struct.pack("<4I", cs.num_classes, r, d, cs.k_used))
    n += dest.write(cs.class_labels.astype("<u4").tobytes())
    n += dest.write(cs.weights.astype("<f4").tobytes())
    n += dest.write(np.ascontiguousarray(cs.embeddings, dtype="<f4").tobytes())
    if cs.kl_templates is not None:
        n += dest.write(struct.pack("<I", 1))
        n += dest.write(np.ascontiguousarray(cs.kl_templates, dtype="<f4").tobytes())
    else:
        n += dest.write(struct.pack("<I", 0))
    return n


def _read_exact(f: BinaryIO, nbytes: int, what: str) -> bytes:
    buf = f.read(nbytes)
    if len(buf) != nbytes:
        raise TensorFormatError(f"truncated coreset file while reading {what}")
    return buf


def load_coreset(src: PathOrIO) -> Coreset:
    if isinstance(src, str):
        with open(src, "rb") as f:
            return load_coreset(f)
    if isinstance(src, (bytes, bytearray)):
        return load_coreset(io.BytesIO(src))
    if _read_exact(src, 4, "magic") != MAGIC:
        raise TensorFormatError("bad SLCR magic")
    version, strat_code, _ = struct.unpack("<HBB", _read_exact(src, 4, "header"))
    if version != VERSION:
        raise TensorFormatError(f"unsupported SLCR version {version}")
    if strat_code not in _CODE_STRATEGY:
        raise TensorFormatError(f"unknown strategy code {strat_code}")
    k, r, d, k_used = struct.unpack("<4I", _read_exact(src, 16, "sizes"))
    labels = np.frombuffer(_read_exact(src, 4 * r, "labels"), dtype="<u4").astype(np.int64)
    weights = np.frombuffer(_read_exact(src, 4 * r, "weights"), dtype="<f4").astype(np.float32)
    emb = np.frombuffer(_read_exact(src, 4 * r * d, "embeddings"),
                        dtype="<f4").astype(np.float32).reshape(r, d)
    (flag,) = struct.unpack("<I", _read_exact(src, 4, "template flag"))
    templates = None
    if flag == 1:
        templates = np.frombuffer(_read_exact(src, 4 * k * k, "templates"),
                                  dtype="<f4").astype(np.float32).reshape(k, k)
    elif flag != 0:
        raise TensorFormatError(f"bad template flag {flag}")
    cs = Coreset(embeddings=emb, weights=weights, class_labels=labels,
                 num_classes=int(k), m=0, k_used=int(k_used),
                 strategy=_CODE_STRATEGY[strat_code], kl_templates=templates)
    cs.validate()
    return cs
