"""Command-line pipeline: convert, superpixels, build-coreset, score,
eval, synth, ablate.

All file outputs are atomic (write to a temp name, then rename) and every
output gets a JSON run manifest beside it (config hash, input digests,
timings, worker count). SUPLID_THREADS overrides the per-image worker
count; results are independent of it.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import os
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import coreset as coreset_mod
from . import metrics as metrics_mod
from . import scores as scores_mod
from . import synth as synth_mod
from . import tensorio
from .superpixel import SlicParams, slic_segment

log = logging.getLogger("suplid")


@dataclass(frozen=True)
class Config:
    k: int = 400
    m: int = 400
    pixels_per_superpixel: int = 200
    compactness: float = 10.0
    slic_iterations: int = 10
    purity_threshold: float = 0.75
    confidence_method: str = "energy"
    guidance_method: str = "weighted_lid"
    coreset_strategy: str = "lid"
    rectify_floor: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.pixels_per_superpixel < 1:
            raise ValueError("pixels_per_superpixel must be positive")
        if self.compactness <= 0:
            raise ValueError("compactness must be positive")
        if self.slic_iterations < 1:
            raise ValueError("slic_iterations must be positive")
        if not (0 < self.purity_threshold <= 1):
            raise ValueError("purity_threshold must be in (0, 1]")
        if self.confidence_method not in scores_mod.CONFIDENCE_METHODS:
            raise ValueError(f"unknown confidence_method {self.confidence_method!r}")
        if self.guidance_method not in scores_mod.GUIDANCE_METHODS:
            raise ValueError(f"unknown guidance_method {self.guidance_method!r}")
        if self.coreset_strategy not in coreset_mod.STRATEGIES:
            raise ValueError(f"unknown coreset_strategy {self.coreset_strategy!r}")
        if self.rectify_floor <= 0:
            raise ValueError("rectify_floor must be positive")

    @classmethod
    def from_json(cls, path: str) -> "Config":
        with open(path) as f:
            data = json.load(f)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def slic_params(self) -> SlicParams:
        return SlicParams(pixels_per_superpixel=self.pixels_per_superpixel,
                          compactness=self.compactness,
                          max_iterations=self.slic_iterations)


def _n_workers() -> int:
    env = os.environ.get("SUPLID_THREADS", "")
    if env:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def atomic_write_bytes(path: str, payload: bytes) -> None:
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_manifest(out_path: str, config: Config, inputs: list[str],
                   timings: dict) -> None:
    cfg = dataclasses.asdict(config)
    manifest = {
        "config": cfg,
        "config_hash": hashlib.sha256(
            json.dumps(cfg, sort_keys=True).encode()).hexdigest(),
        "inputs": {p: _sha256(p) for p in inputs if os.path.exists(p)},
        "output": out_path,
        "output_digest": _sha256(out_path) if os.path.exists(out_path) else None,
        "timings_s": timings,
        "workers": _n_workers(),
    }
    atomic_write_bytes(out_path + ".manifest.json",
                       json.dumps(manifest, indent=2).encode())


def _read_mask(path: str) -> np.ndarray:
    if path.endswith(".pgm"):
        return tensorio.read_pgm(path)
    arr = tensorio.read_tensor(path)
    if arr.dtype != np.uint8 or arr.ndim != 2:
        raise ValueError(f"mask {path} must be u8 [H,W]")
    return arr


def _stems(directory: str, suffixes: tuple) -> dict[str, str]:
    out = {}
    for p in sorted(Path(directory).iterdir()):
        if p.suffix in suffixes:
            out[p.stem] = str(p)
    if not out:
        raise ValueError(f"no {suffixes} files found in {directory}")
    return out


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_convert(args, config: Config) -> int:
    t0 = time.perf_counter()
    src = args.input
    if src.endswith(".ppm"):
        arr = tensorio.read_ppm(src)
    elif src.endswith(".pgm"):
        arr = tensorio.read_pgm(src)
    else:
        arr = tensorio.read_tensor(src)
    buf = io.BytesIO()
    if args.out.endswith(".ppm"):
        tensorio.write_ppm(arr, buf)
    elif args.out.endswith(".pgm"):
        tensorio.write_pgm(arr, buf)
    else:
        tensorio.write_tensor(arr, buf)
    atomic_write_bytes(args.out, buf.getvalue())
    write_manifest(args.out, config, [src], {"total": time.perf_counter() - t0})
    return 0


def cmd_superpixels(args, config: Config) -> int:
    t0 = time.perf_counter()
    if args.pixels_per_sp:
        config = dataclasses.replace(config, pixels_per_superpixel=args.pixels_per_sp)
    image = tensorio.read_ppm(args.image)
    part = slic_segment(image, config.slic_params())
    buf = io.BytesIO()
    tensorio.write_tensor(part.labels, buf)
    atomic_write_bytes(args.out, buf.getvalue())
    write_manifest(args.out, config, [args.image], {"total": time.perf_counter() - t0})
    print(f"{part.num_superpixels} superpixels -> {args.out}")
    return 0


def _process_training_image(stem, image_path, feat_path, label_path, logit_path, config):
    image = tensorio.read_ppm(image_path)
    part = slic_segment(image, config.slic_params())
    features = tensorio.read_tensor(feat_path)
    labels = _read_mask(label_path)
    records, kept = coreset_mod.superpixel_embed(features, part, labels,
                                                 return_indices=True)
    confs = {}
    energy_side = None
    logits = None
    if logit_path:
        logits = tensorio.read_tensor(logit_path)
        for method in scores_mod.CONFIDENCE_METHODS:
            if method == "kl_match":
                continue
            pix = scores_mod.confidence_from_logits(logits, method)
            # calibration min observes every superpixel of the training pass
            confs[method] = scores_mod.aggregate_confidence(pix, part)
        energy_side = confs["energy"][kept]
    return stem, records, confs, energy_side, logits


def cmd_build_coreset(args, config: Config) -> int:
    t0 = time.perf_counter()
    if args.m:
        config = dataclasses.replace(config, m=args.m)
    if args.k:
        config = dataclasses.replace(config, k=args.k)
    if args.strategy:
        config = dataclasses.replace(config, coreset_strategy=args.strategy)

    images = _stems(args.images_dir, (".ppm",))
    feats = _stems(args.features_dir, (".slt",))
    labels = _stems(args.labels_dir, (".pgm", ".slt"))
    logits_dir = _stems(args.logits_dir, (".slt",)) if args.logits_dir else {}
    stems = sorted(images)
    missing = [s for s in stems if s not in feats or s not in labels]
    if missing:
        raise ValueError(f"missing features/labels for images: {missing}")

    jobs = [(s, images[s], feats[s], labels[s], logits_dir.get(s), config) for s in stems]
    with ThreadPoolExecutor(max_workers=_n_workers()) as pool:
        results = list(pool.map(lambda j: _process_training_image(*j), jobs))

    all_records, energy_confs = [], []
    calibration_min = {}
    logit_maps = []
    for _, records, confs, energy_side, logits in results:
        all_records.extend(records)
        if confs:
            energy_confs.extend(energy_side)
            for method, vals in confs.items():
                mn = float(np.min(vals))
                calibration_min[method] = min(calibration_min.get(method, mn), mn)
        if logits is not None:
            logit_maps.append(logits)

    params = coreset_mod.CoresetParams(
        m=config.m, k=config.k, purity_threshold=config.purity_threshold,
        strategy=config.coreset_strategy, seed=config.seed)
    confidences = energy_confs if energy_confs else None
    cs = coreset_mod.build_coreset(all_records, params, confidences=confidences)
    if logit_maps:
        num_classes = logit_maps[0].shape[-1]
        if cs.num_classes < num_classes:
            # class labels come from masks; widen K to the logit head size
            cs.num_classes = num_classes
        cs.kl_templates = scores_mod.build_kl_templates(logit_maps, num_classes)
        cs.validate()
        # kl_match calibration needs the templates, so it runs as a second pass
        kl_min = np.inf
        for logits in logit_maps:
            pix = scores_mod.confidence_from_logits(logits, "kl_match",
                                                    templates=cs.kl_templates)
            kl_min = min(kl_min, float(pix.min()))
        calibration_min["kl_match"] = kl_min

    buf = io.BytesIO()
    coreset_mod.save_coreset(cs, buf)
    atomic_write_bytes(args.out, buf.getvalue())
    sidecar = {"calibration_min": calibration_min,
               "m": config.m, "k": config.k, "strategy": config.coreset_strategy}
    atomic_write_bytes(args.out + ".json", json.dumps(sidecar, indent=2).encode())
    inputs = [images[s] for s in stems] + [feats[s] for s in stems]
    write_manifest(args.out, config, inputs, {"total": time.perf_counter() - t0})
    print(f"coreset: {cs.embeddings.shape[0]} rows, K={cs.num_classes}, "
          f"strategy={cs.strategy} -> {args.out}")
    return 0


def score_arrays(features: np.ndarray, logits: np.ndarray, image: np.ndarray,
                 cs: coreset_mod.Coreset, config: Config,
                 calibration_min: float = 0.0):
    """Library-level scoring of one image; returns (per_pixel, partition)."""
    part = slic_segment(image, config.slic_params())
    records = coreset_mod.superpixel_embed(features, part)
    emb = np.stack([r.embedding for r in records]).astype(np.float64)
    pix = scores_mod.confidence_from_logits(logits, config.confidence_method,
                                            templates=cs.kl_templates)
    s = scores_mod.aggregate_confidence(pix, part)
    fusion = scores_mod.FusionConfig(
        confidence_method=config.confidence_method,
        guidance_method=config.guidance_method,
        rectify_floor=config.rectify_floor,
        calibration_min=calibration_min,
        k_guidance=config.k)
    s_rect = scores_mod.rectify(s, fusion)
    d = scores_mod.guidance_score(emb, cs, method=config.guidance_method,
                                  k=config.k, floor=config.rectify_floor)
    fused = scores_mod.fuse(s_rect, d)
    return scores_mod.broadcast_to_pixels(fused, part), part


def _load_calibration(coreset_path: str, method: str) -> float:
    sidecar = coreset_path + ".json"
    if os.path.exists(sidecar):
        with open(sidecar) as f:
            data = json.load(f)
        return float(data.get("calibration_min", {}).get(method, 0.0))
    return 0.0


def cmd_score(args, config: Config) -> int:
    t0 = time.perf_counter()
    if args.confidence:
        config = dataclasses.replace(config, confidence_method=args.confidence.replace("-", "_"))
    if args.guidance:
        config = dataclasses.replace(config, guidance_method=args.guidance.replace("-", "_"))
    if args.k:
        config = dataclasses.replace(config, k=args.k)
    features = tensorio.read_tensor(args.features)
    logits = tensorio.read_tensor(args.logits)
    image = tensorio.read_ppm(args.image)
    cs = coreset_mod.load_coreset(args.coreset)
    cal = _load_calibration(args.coreset, config.confidence_method)
    per_pixel, _ = score_arrays(features, logits, image, cs, config, cal)
    buf = io.BytesIO()
    tensorio.write_tensor(per_pixel, buf)
    atomic_write_bytes(args.out, buf.getvalue())
    inputs = [args.features, args.logits, args.image, args.coreset]
    write_manifest(args.out, config, inputs, {"total": time.perf_counter() - t0})
    if args.threshold is not None:
        if not args.mask_out:
            raise ValueError("--threshold requires --mask-out")
        mask = scores_mod.threshold_map(per_pixel, args.threshold)
        mbuf = io.BytesIO()
        tensorio.write_tensor(mask, mbuf)
        atomic_write_bytes(args.mask_out, mbuf.getvalue())
        write_manifest(args.mask_out, config, inputs, {"total": time.perf_counter() - t0})
    return 0


def cmd_eval(args, config: Config) -> int:
    t0 = time.perf_counter()
    score_files = _stems(args.scores_dir, (".slt",))
    mask_files = _stems(args.masks_dir, (".pgm", ".slt"))
    stems = sorted(score_files)
    missing = [s for s in stems if s not in mask_files]
    if missing:
        raise ValueError(f"missing masks for score maps: {missing}")
    with ThreadPoolExecutor(max_workers=_n_workers()) as pool:
        maps = list(pool.map(tensorio.read_tensor, [score_files[s] for s in stems]))
        masks = list(pool.map(_read_mask, [mask_files[s] for s in stems]))
    report = metrics_mod.evaluate(maps, masks)
    atomic_write_bytes(args.out, report.to_json().encode())
    inputs = [score_files[s] for s in stems] + [mask_files[s] for s in stems]
    write_manifest(args.out, config, inputs, {"total": time.perf_counter() - t0})
    print(report.to_json())
    return 0


def cmd_synth(args, config: Config) -> int:
    t0 = time.perf_counter()
    with open(args.spec) as f:
        raw = json.load(f)
    known = {f.name for f in dataclasses.fields(synth_mod.SynthSpec)}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown synth spec keys: {sorted(unknown)}")
    for key in ("intrinsic_dims", "image_size"):
        if key in raw:
            raw[key] = tuple(raw[key])
    spec = synth_mod.SynthSpec(**raw)
    image, features, logits, train_labels, ood_mask = synth_mod.make_scene(spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    writers = [
        ("image.ppm", lambda b: tensorio.write_ppm(image, b)),
        ("features.slt", lambda b: tensorio.write_tensor(features, b)),
        ("logits.slt", lambda b: tensorio.write_tensor(logits, b)),
        ("train_labels.pgm", lambda b: tensorio.write_pgm(train_labels, b)),
        ("ood_mask.pgm", lambda b: tensorio.write_pgm(ood_mask, b)),
    ]
    for name, writer in writers:
        buf = io.BytesIO()
        writer(buf)
        atomic_write_bytes(str(out / name), buf.getvalue())
    write_manifest(str(out / "image.ppm"), config, [args.spec],
                   {"total": time.perf_counter() - t0})
    return 0


def _scene_paths(d: Path) -> dict:
    return {"image": str(d / "image.ppm"), "features": str(d / "features.slt"),
            "logits": str(d / "logits.slt"), "labels": str(d / "train_labels.pgm"),
            "mask": str(d / "ood_mask.pgm")}


def cmd_ablate(args, config: Config) -> int:
    t0 = time.perf_counter()
    train = _scene_paths(Path(args.train_dir))
    test_dirs = [Path(p) for p in args.test_dir]
    confidences = args.confidence or [config.confidence_method]
    guidances = args.guidance or ["none", "unweighted_lid", "weighted_lid", "knn_distance"]
    strategies = args.strategy or [config.coreset_strategy]

    image = tensorio.read_ppm(train["image"])
    part = slic_segment(image, config.slic_params())
    features = tensorio.read_tensor(train["features"])
    labels = _read_mask(train["labels"])
    logits = tensorio.read_tensor(train["logits"])
    records, kept = coreset_mod.superpixel_embed(features, part, labels,
                                                 return_indices=True)
    energy_conf = scores_mod.aggregate_confidence(
        scores_mod.confidence_from_logits(logits, "energy"), part)[kept]
    cal = {m: float(np.min(scores_mod.aggregate_confidence(
        scores_mod.confidence_from_logits(logits, m), part)))
        for m in scores_mod.CONFIDENCE_METHODS if m != "kl_match"}
    templates = scores_mod.build_kl_templates([logits], logits.shape[-1])
    cal["kl_match"] = float(np.min(scores_mod.aggregate_confidence(
        scores_mod.confidence_from_logits(logits, "kl_match", templates=templates), part)))

    tests = [{k: v for k, v in _scene_paths(d).items()} for d in test_dirs]
    for t in tests:
        t["image_arr"] = tensorio.read_ppm(t["image"])
        t["features_arr"] = tensorio.read_tensor(t["features"])
        t["logits_arr"] = tensorio.read_tensor(t["logits"])
        t["mask_arr"] = _read_mask(t["mask"])

    rows = []
    for strategy in strategies:
        params = coreset_mod.CoresetParams(
            m=config.m, k=config.k, purity_threshold=config.purity_threshold,
            strategy=strategy, seed=config.seed)
        cs = coreset_mod.build_coreset(records, params, confidences=energy_conf)
        cs.kl_templates = templates
        cs.num_classes = max(cs.num_classes, logits.shape[-1])
        for conf_m in confidences:
            for guid_m in guidances:
                combo = f"{strategy}/{conf_m}/{guid_m}"
                try:
                    cfg = dataclasses.replace(config, confidence_method=conf_m,
                                              guidance_method=guid_m,
                                              coreset_strategy=strategy)
                    maps, masks = [], []
                    for t in tests:
                        per_pixel, _ = score_arrays(
                            t["features_arr"], t["logits_arr"], t["image_arr"],
                            cs, cfg, cal.get(conf_m, 0.0))
                        maps.append(per_pixel)
                        masks.append(t["mask_arr"])
                    rep = metrics_mod.evaluate(maps, masks)
                except Exception as exc:
                    raise RuntimeError(f"ablation combination {combo} failed: {exc}") from exc
                rows.append({"coreset_strategy": strategy, "confidence": conf_m,
                             "guidance": guid_m, "auroc": rep.auroc, "aupr": rep.aupr,
                             "fpr_at_95tpr": rep.fpr_at_95tpr, "best_f1": rep.best_f1})

    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()))
    writer.writeheader()
    writer.writerows(rows)
    atomic_write_bytes(args.out, buf.getvalue().encode())
    inputs = list(train.values())
    write_manifest(args.out, config, inputs, {"total": time.perf_counter() - t0})
    print(f"{len(rows)} ablation rows -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="suplid",
                                description="Superpixel-LID OOD scoring pipeline")
    p.add_argument("--config", help="JSON config file (unknown keys rejected)")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("convert", help="convert between PPM/PGM and SLTF")
    c.add_argument("--in", dest="input", required=True)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_convert)

    c = sub.add_parser("superpixels", help="SLIC segmentation of a PPM image")
    c.add_argument("--image", required=True)
    c.add_argument("--pixels-per-sp", type=int, default=0)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_superpixels)

    c = sub.add_parser("build-coreset", help="build the per-class LID coreset")
    c.add_argument("--features-dir", required=True)
    c.add_argument("--labels-dir", required=True)
    c.add_argument("--images-dir", required=True)
    c.add_argument("--logits-dir", help="training logits (enables KL templates + calibration)")
    c.add_argument("--m", type=int, default=0)
    c.add_argument("--k", type=int, default=0)
    c.add_argument("--strategy", choices=coreset_mod.STRATEGIES)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_build_coreset)

    c = sub.add_parser("score", help="score one image against a coreset")
    c.add_argument("--features", required=True)
    c.add_argument("--logits", required=True)
    c.add_argument("--image", required=True)
    c.add_argument("--coreset", required=True)
    c.add_argument("--confidence", choices=[m.replace("_", "-") for m in scores_mod.CONFIDENCE_METHODS])
    c.add_argument("--guidance", choices=[m.replace("_", "-") for m in scores_mod.GUIDANCE_METHODS])
    c.add_argument("--k", type=int, default=0)
    c.add_argument("--out", required=True)
    c.add_argument("--threshold", type=float)
    c.add_argument("--mask-out")
    c.set_defaults(func=cmd_score)

    c = sub.add_parser("eval", help="pixel-pooled metrics over score maps")
    c.add_argument("--scores-dir", required=True)
    c.add_argument("--masks-dir", required=True)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_eval)

    c = sub.add_parser("synth", help="generate a synthetic fixture scene")
    c.add_argument("--spec", required=True)
    c.add_argument("--out-dir", required=True)
    c.set_defaults(func=cmd_synth)

    c = sub.add_parser("ablate", help="grid of strategy/confidence/guidance combos")
    c.add_argument("--train-dir", required=True)
    c.add_argument("--test-dir", action="append", required=True)
    c.add_argument("--confidence", action="append", choices=scores_mod.CONFIDENCE_METHODS)
    c.add_argument("--guidance", action="append", choices=scores_mod.GUIDANCE_METHODS)
    c.add_argument("--strategy", action="append", choices=coreset_mod.STRATEGIES)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_ablate)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 1
    try:
        config = Config.from_json(args.config) if args.config else Config()
        return args.func(args, config)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # internal invariant violation
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    logging.basicConfig(level=logging.WARNING)
    sys.exit(run())
