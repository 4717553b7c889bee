import json
import os

import numpy as np
import pytest

from suplid import tensorio
from suplid.cli import Config, run

SMALL_SPEC = {
    "num_classes": 3,
    "intrinsic_dims": [4, 4, 4],
    "ambient_dim": 32,
    "cluster_separation": 80.0,
    "image_size": [48, 48],
    "seed": 11,
}

SMALL_CONFIG = {
    "k": 20,
    "m": 40,
    "pixels_per_superpixel": 36,
    "slic_iterations": 5,
}


def write_json(path, data):
    path.write_text(json.dumps(data))
    return str(path)


def make_scene_dir(tmp_path, name, seed, **overrides):
    spec = dict(SMALL_SPEC, seed=seed, **overrides)
    spec_path = write_json(tmp_path / f"{name}_spec.json", spec)
    out_dir = tmp_path / name
    assert run(["synth", "--spec", spec_path, "--out-dir", str(out_dir)]) == 0
    return out_dir


@pytest.fixture()
def config_path(tmp_path):
    return write_json(tmp_path / "config.json", SMALL_CONFIG)


def test_config_defaults():
    cfg = Config()
    assert cfg.k == 400
    assert cfg.m == 400
    assert cfg.pixels_per_superpixel == 200
    assert cfg.compactness == 10.0
    assert cfg.slic_iterations == 10
    assert cfg.purity_threshold == 0.75
    assert cfg.confidence_method == "energy"
    assert cfg.guidance_method == "weighted_lid"
    assert cfg.coreset_strategy == "lid"
    assert cfg.rectify_floor == 1e-6
    assert cfg.seed == 0


def test_config_unknown_key_rejected(tmp_path, capsys):
    p = write_json(tmp_path / "bad.json", {"k": 20, "chunk_size": 4})
    assert run(["--config", p, "synth", "--spec", "x", "--out-dir", "y"]) == 1
    assert "unknown config keys" in capsys.readouterr().err


def test_config_invalid_value_exit_1(tmp_path, capsys):
    p = write_json(tmp_path / "bad.json", {"k": 1})
    assert run(["--config", p, "synth", "--spec", "x", "--out-dir", "y"]) == 1
    assert "k must be" in capsys.readouterr().err


def test_missing_required_flag_exit_1():
    assert run(["score", "--out", "x.slt"]) == 1


def test_synth_writes_scene_and_manifest(tmp_path):
    d = make_scene_dir(tmp_path, "scene", seed=1)
    for name in ("image.ppm", "features.slt", "logits.slt",
                 "train_labels.pgm", "ood_mask.pgm"):
        assert (d / name).exists()
    manifest = json.loads((d / "image.ppm.manifest.json").read_text())
    assert "config_hash" in manifest and "output_digest" in manifest


def test_synth_unknown_spec_key(tmp_path, capsys):
    p = write_json(tmp_path / "spec.json", dict(SMALL_SPEC, flavor="spicy"))
    assert run(["synth", "--spec", p, "--out-dir", str(tmp_path / "o")]) == 1
    assert "unknown synth spec keys" in capsys.readouterr().err


def test_convert_roundtrip(tmp_path):
    d = make_scene_dir(tmp_path, "scene", seed=2)
    slt = tmp_path / "image.slt"
    back = tmp_path / "back.ppm"
    assert run(["convert", "--in", str(d / "image.ppm"), "--out", str(slt)]) == 0
    assert run(["convert", "--in", str(slt), "--out", str(back)]) == 0
    orig = tensorio.read_ppm(str(d / "image.ppm"))
    np.testing.assert_array_equal(tensorio.read_ppm(str(back)), orig)


def test_superpixels_command(tmp_path, config_path):
    d = make_scene_dir(tmp_path, "scene", seed=3)
    out = tmp_path / "sp.slt"
    rc = run(["--config", config_path, "superpixels",
              "--image", str(d / "image.ppm"), "--out", str(out)])
    assert rc == 0
    labels = tensorio.read_tensor(str(out))
    assert labels.shape == (48, 48)
    assert labels.min() == 0


def stage_training_dirs(tmp_path, scene_dirs):
    dirs = {}
    for sub in ("images", "features", "labels", "logits"):
        d = tmp_path / sub
        d.mkdir(exist_ok=True)
        dirs[sub] = d
    for i, sd in enumerate(scene_dirs):
        stem = f"img{i}"
        os.link(sd / "image.ppm", dirs["images"] / f"{stem}.ppm")
        os.link(sd / "features.slt", dirs["features"] / f"{stem}.slt")
        os.link(sd / "train_labels.pgm", dirs["labels"] / f"{stem}.pgm")
        os.link(sd / "logits.slt", dirs["logits"] / f"{stem}.slt")
    return dirs


def test_full_pipeline_chain(tmp_path, config_path):
    train = make_scene_dir(tmp_path, "train", seed=4)
    test = make_scene_dir(tmp_path, "test", seed=5)
    dirs = stage_training_dirs(tmp_path, [train])

    coreset = tmp_path / "coreset.slcr"
    rc = run(["--config", config_path, "build-coreset",
              "--images-dir", str(dirs["images"]),
              "--features-dir", str(dirs["features"]),
              "--labels-dir", str(dirs["labels"]),
              "--logits-dir", str(dirs["logits"]),
              "--out", str(coreset)])
    assert rc == 0
    assert coreset.exists()
    sidecar = json.loads((tmp_path / "coreset.slcr.json").read_text())
    assert set(sidecar["calibration_min"]) == {"msp", "maxlogit", "energy",
                                               "entropy", "kl_match"}

    scores_dir = tmp_path / "scores"
    masks_dir = tmp_path / "masks"
    scores_dir.mkdir()
    masks_dir.mkdir()
    score_map = scores_dir / "t0.slt"
    rc = run(["--config", config_path, "score",
              "--features", str(test / "features.slt"),
              "--logits", str(test / "logits.slt"),
              "--image", str(test / "image.ppm"),
              "--coreset", str(coreset),
              "--out", str(score_map)])
    assert rc == 0
    per_pixel = tensorio.read_tensor(str(score_map))
    assert per_pixel.shape == (48, 48) and per_pixel.dtype == np.float32
    os.link(test / "ood_mask.pgm", masks_dir / "t0.pgm")

    report_path = tmp_path / "report.json"
    rc = run(["eval", "--scores-dir", str(scores_dir),
              "--masks-dir", str(masks_dir), "--out", str(report_path)])
    assert rc == 0
    report = json.loads(report_path.read_text())
    assert 0.9 <= report["auroc"] <= 1.0  # far OOD is easy
    assert report["n_ood"] > 0 and report["n_id"] > 0

    # threshold output path
    mask_out = tmp_path / "pred.slt"
    rc = run(["--config", config_path, "score",
              "--features", str(test / "features.slt"),
              "--logits", str(test / "logits.slt"),
              "--image", str(test / "image.ppm"),
              "--coreset", str(coreset),
              "--out", str(tmp_path / "s2.slt"),
              "--threshold", "0.5", "--mask-out", str(mask_out)])
    assert rc == 0
    pred = tensorio.read_tensor(str(mask_out))
    assert set(np.unique(pred)) <= {0, 1}


def test_score_threshold_without_mask_out(tmp_path, config_path, capsys):
    train = make_scene_dir(tmp_path, "train", seed=6)
    dirs = stage_training_dirs(tmp_path, [train])
    coreset = tmp_path / "c.slcr"
    assert run(["--config", config_path, "build-coreset",
                "--images-dir", str(dirs["images"]),
                "--features-dir", str(dirs["features"]),
                "--labels-dir", str(dirs["labels"]),
                "--out", str(coreset)]) == 0
    rc = run(["--config", config_path, "score",
              "--features", str(train / "features.slt"),
              "--logits", str(train / "logits.slt"),
              "--image", str(train / "image.ppm"),
              "--coreset", str(coreset),
              "--out", str(tmp_path / "s.slt"),
              "--threshold", "0.5"])
    assert rc == 1
    assert "--mask-out" in capsys.readouterr().err


def test_ablate_row_count(tmp_path, config_path):
    train = make_scene_dir(tmp_path, "train", seed=7)
    test = make_scene_dir(tmp_path, "test", seed=8)
    out = tmp_path / "ablation.csv"
    rc = run(["--config", config_path, "ablate",
              "--train-dir", str(train), "--test-dir", str(test),
              "--confidence", "energy", "--confidence", "msp",
              "--out", str(out)])
    assert rc == 0
    lines = out.read_text().strip().splitlines()
    # header + 2 confidences x 4 default guidance methods
    assert len(lines) == 1 + 2 * 4
    assert lines[0].startswith("coreset_strategy,confidence,guidance,auroc")


def test_manifest_has_input_digests(tmp_path, config_path):
    d = make_scene_dir(tmp_path, "scene", seed=9)
    out = tmp_path / "sp.slt"
    assert run(["--config", config_path, "superpixels",
                "--image", str(d / "image.ppm"), "--out", str(out)]) == 0
    manifest = json.loads((tmp_path / "sp.slt.manifest.json").read_text())
    img = str(d / "image.ppm")
    assert manifest["inputs"][img] == __import__("hashlib").sha256(
        (d / "image.ppm").read_bytes()).hexdigest()
    assert manifest["workers"] >= 1
