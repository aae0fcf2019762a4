"""Metric tests: worked examples, brute-force oracles, curve consistency."""

import json

import numpy as np
import pytest

from posecast.errors import ConfigurationError
from posecast.metrics import (
    EvalReport,
    ade,
    default_pck_delta,
    evaluate,
    fde,
    hardness_scores,
    pck,
    per_timestamp_report,
    rmse,
    select_hardest,
)


def brute_rmse(pred, gt):
    t, two_n = pred.shape
    total = 0.0
    for f in range(t):
        for n in range(two_n // 2):
            dx = pred[f, 2 * n] - gt[f, 2 * n]
            dy = pred[f, 2 * n + 1] - gt[f, 2 * n + 1]
            total += dx * dx + dy * dy
    return np.sqrt(total / (t * (two_n // 2)))


def brute_pck(pred, gt, delta):
    t, two_n = pred.shape
    hits = 0
    for f in range(t):
        for n in range(two_n // 2):
            d = np.hypot(pred[f, 2 * n] - gt[f, 2 * n], pred[f, 2 * n + 1] - gt[f, 2 * n + 1])
            hits += d < delta
    return hits / (t * (two_n // 2))


def brute_ade(pred, gt):
    return np.mean([np.sqrt(((pred[f] - gt[f]) ** 2).sum()) for f in range(pred.shape[0])])


def brute_fde(pred, gt):
    return np.sqrt(((pred[-1] - gt[-1]) ** 2).sum())


def random_pair(rng, t=6, joints=13):
    gt = rng.uniform(0, 1, size=(t, 2 * joints))
    pred = gt + rng.normal(0, 0.05, size=gt.shape)
    return pred, gt


def test_zero_error_values():
    rng = np.random.default_rng(0)
    _, gt = random_pair(rng)
    assert rmse(gt, gt) == 0.0
    assert pck(gt, gt, 0.05) == 1.0
    assert ade(gt, gt) == 0.0
    assert fde(gt, gt) == 0.0


def test_rmse_per_joint_distance_convention():
    # every joint off by (0.3, 0.4): per-joint distance 0.5 -> rmse 0.5
    gt = np.zeros((4, 26))
    pred = gt + np.tile([0.3, 0.4], 13)
    assert rmse(pred, gt) == pytest.approx(0.5)


def test_metrics_match_brute_force():
    rng = np.random.default_rng(1)
    for _ in range(100):
        pred, gt = random_pair(rng)
        assert abs(rmse(pred, gt) - brute_rmse(pred, gt)) < 1e-12
        assert abs(pck(pred, gt, 0.05) - brute_pck(pred, gt, 0.05)) < 1e-12
        assert abs(ade(pred, gt) - brute_ade(pred, gt)) < 1e-12
        assert abs(fde(pred, gt) - brute_fde(pred, gt)) < 1e-12


def test_pck_default_thresholds():
    assert default_pck_delta("body13") == 0.05
    assert default_pck_delta("hand21") == 0.15
    with pytest.raises(ConfigurationError):
        default_pck_delta("custom")


def test_pck_monotone_in_delta():
    rng = np.random.default_rng(2)
    pred, gt = random_pair(rng)
    deltas = [1e-9, 0.01, 0.05, 0.2, 1.0, 1e9]
    values = [pck(pred, gt, d) for d in deltas]
    assert all(a <= b for a, b in zip(values, values[1:]))
    assert values[-1] == 1.0
    assert values[0] == 0.0  # strict inequality at vanishing threshold


def test_ade_equals_fde_for_single_frame():
    rng = np.random.default_rng(3)
    for _ in range(10):
        pred, gt = random_pair(rng, t=1)
        assert ade(pred, gt) == pytest.approx(fde(pred, gt), abs=1e-15)


def test_per_timestamp_consistency_with_ade():
    rng = np.random.default_rng(4)
    preds, gts = zip(*(random_pair(rng) for _ in range(25)))
    curves = per_timestamp_report(preds, gts, delta=0.05)
    dataset_ade = np.mean([ade(p, g) for p, g in zip(preds, gts)])
    assert abs(np.mean(curves["displacement"]) - dataset_ade) < 1e-9


def test_per_timestamp_flat_for_constant_error():
    gt = np.zeros((5, 26))
    pred = gt + np.tile([0.1, 0.0], 13)
    curves = per_timestamp_report([pred], [gt], delta=0.05)
    assert np.ptp(curves["displacement"]) < 1e-12


def test_per_timestamp_matches_brute_force():
    rng = np.random.default_rng(5)
    preds, gts = zip(*(random_pair(rng, t=4) for _ in range(8)))
    curves = per_timestamp_report(preds, gts, delta=0.05)
    for t in range(4):
        want = np.mean([
            np.sqrt(((p[t] - g[t]) ** 2).sum()) for p, g in zip(preds, gts)
        ])
        assert abs(curves["displacement"][t] - want) < 1e-12


def test_hardness_zero_for_static_sequence():
    static = np.tile(np.linspace(0, 1, 26), (10, 1))
    assert hardness_scores([static])[0] == 0.0


def test_hardness_zero_for_constant_velocity():
    frames = np.linspace(0, 1, 26)[None, :] + 0.01 * np.arange(8)[:, None]
    assert hardness_scores([frames])[0] == pytest.approx(0.0, abs=1e-15)


def test_selection_matches_sort_oracle():
    rng = np.random.default_rng(6)
    scores = rng.uniform(0, 1, size=20)
    got = select_hardest(scores, fraction=0.10)
    oracle = sorted(range(20), key=lambda i: (-scores[i], i))[:2]
    assert list(got) == oracle


def test_selection_tie_breaks_by_lower_index():
    scores = np.array([0.5, 0.9, 0.9, 0.1])
    assert list(select_hardest(scores, fraction=0.5)) == [1, 2]
    tied = np.array([0.7, 0.7, 0.7, 0.7])
    assert list(select_hardest(tied, fraction=0.5)) == [0, 1]


def test_selection_full_fraction_selects_all():
    scores = np.arange(7.0)
    assert len(select_hardest(scores, fraction=1.0)) == 7


def test_evaluate_report_roundtrip_and_stability():
    rng = np.random.default_rng(7)
    preds, gts = zip(*(random_pair(rng) for _ in range(12)))
    report = evaluate(list(preds), list(gts), delta=0.05)
    assert report.n_samples == 12
    assert len(report.per_timestamp_displacement) == 6
    assert 0.0 <= report.pck <= 1.0
    data = json.loads(report.to_json())
    again = EvalReport.from_dict(data)
    assert again.to_json() == report.to_json()
    # identical inputs give bit-identical JSON
    report2 = evaluate(list(preds), list(gts), delta=0.05)
    assert report2.to_json() == report.to_json()
