import json

import numpy as np
import pytest

from suplid.metrics import EvalReport, evaluate, sweep_thresholds


def eval_flat(scores, mask):
    scores = np.asarray(scores, dtype=np.float32).reshape(1, -1)
    mask = np.asarray(mask, dtype=np.uint8).reshape(1, -1)
    return evaluate([scores], [mask])


def auroc_oracle(anomaly, y):
    """O(n^2) pair counting with half credit for ties."""
    pos = anomaly[y == 1]
    neg = anomaly[y == 0]
    wins = sum((p > n) + 0.5 * (p == n) for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def test_worked_example():
    # scores are higher-for-ID: [4, 3, 2, 1], labels [0, 1, 0, 1]
    rep = eval_flat([4.0, 3.0, 2.0, 1.0], [0, 1, 0, 1])
    assert rep.auroc == pytest.approx(0.75)
    # descending anomaly: labels 1,0,1,0 -> AP = 0.5*1 + 0.5*(2/3)
    assert rep.aupr == pytest.approx(0.5 + 1 / 3, abs=1e-9)
    assert rep.fpr_at_95tpr == pytest.approx(0.5)
    assert rep.best_f1 == pytest.approx(0.8)
    assert rep.n_ood == 2 and rep.n_id == 2 and rep.n_ignored == 0


def test_perfect_separation():
    rep = eval_flat([5.0, 4.0, 1.0, 0.5], [0, 0, 1, 1])
    assert rep.auroc == 1.0
    assert rep.aupr == pytest.approx(1.0)
    assert rep.fpr_at_95tpr == 0.0
    assert rep.best_f1 == pytest.approx(1.0)


def test_inverted_scores():
    rep = eval_flat([0.5, 1.0, 4.0, 5.0], [0, 0, 1, 1])
    assert rep.auroc == 0.0


def test_all_tied_scores():
    rep = eval_flat([1.0, 1.0, 1.0, 1.0], [0, 1, 0, 1])
    assert rep.auroc == pytest.approx(0.5)


def test_auroc_matches_pair_counting_oracle():
    rng = np.random.default_rng(0)
    for _ in range(10):
        n = int(rng.integers(10, 60))
        scores = np.round(rng.standard_normal(n), 1)  # force some ties
        y = rng.integers(0, 2, n)
        if y.sum() in (0, n):
            continue
        rep = eval_flat(scores, y)
        assert rep.auroc == pytest.approx(auroc_oracle(-scores, y), rel=1e-9)


def test_monotone_transform_invariance():
    rng = np.random.default_rng(1)
    scores = rng.standard_normal(50)
    y = rng.integers(0, 2, 50)
    a = eval_flat(scores, y)
    b = eval_flat(np.exp(scores * 0.3), y)  # strictly increasing map
    assert a.auroc == pytest.approx(b.auroc)
    assert a.aupr == pytest.approx(b.aupr)
    assert a.fpr_at_95tpr == pytest.approx(b.fpr_at_95tpr)
    assert a.best_f1 == pytest.approx(b.best_f1)


def test_ignored_pixels_have_no_effect():
    rng = np.random.default_rng(2)
    scores = rng.standard_normal(40)
    y = rng.integers(0, 2, 40)
    extra = np.concatenate([scores, rng.standard_normal(10)])
    y_extra = np.concatenate([y, np.full(10, 255)])
    a = eval_flat(scores, y)
    b = eval_flat(extra, y_extra)
    assert a.auroc == b.auroc and a.aupr == b.aupr
    assert b.n_ignored == 10


def test_auroc_complement_symmetry():
    rng = np.random.default_rng(3)
    scores = rng.standard_normal(30)
    y = rng.integers(0, 2, 30)
    a = eval_flat(scores, y)
    b = eval_flat(-scores, 1 - y)
    assert a.auroc == pytest.approx(b.auroc)


def test_multiple_maps_pool_pixels():
    a = eval_flat([4.0, 3.0, 2.0, 1.0], [0, 1, 0, 1])
    b = evaluate(
        [np.array([[4.0, 3.0]], dtype=np.float32),
         np.array([[2.0, 1.0]], dtype=np.float32)],
        [np.array([[0, 1]], dtype=np.uint8),
         np.array([[0, 1]], dtype=np.uint8)])
    assert a.auroc == b.auroc and a.aupr == b.aupr


def test_validation_errors():
    with pytest.raises(ValueError):
        eval_flat([1.0, 2.0], [0, 0])  # no OOD
    with pytest.raises(ValueError):
        eval_flat([1.0, 2.0], [1, 1])  # no ID
    with pytest.raises(ValueError):
        eval_flat([1.0, 2.0], [0, 3])  # bad mask value
    with pytest.raises(ValueError):
        evaluate([np.zeros((2, 2))], [np.zeros((2, 3), dtype=np.uint8)])
    with pytest.raises(ValueError):
        evaluate([np.zeros((2, 2))], [])


def test_sweep_thresholds_quadratic_oracle():
    rng = np.random.default_rng(4)
    a = np.round(rng.standard_normal(40), 1)
    y = rng.integers(0, 2, 40).astype(bool)
    th, tp, fp, fn, tn = sweep_thresholds(a, y)
    assert np.all(np.diff(th) < 0)
    for t, tpi, fpi, fni, tni in zip(th, tp, fp, fn, tn):
        pred = a >= t
        assert tpi == np.sum(pred & y)
        assert fpi == np.sum(pred & ~y)
        assert fni == np.sum(~pred & y)
        assert tni == np.sum(~pred & ~y)


def test_report_json_round_trip():
    rep = eval_flat([4.0, 3.0, 2.0, 1.0], [0, 1, 0, 1])
    d = json.loads(rep.to_json())
    assert d["auroc"] == pytest.approx(0.75)
    assert set(d) >= {"auroc", "aupr", "fpr_at_95tpr", "best_f1",
                      "n_ood", "n_id", "n_ignored"}
