import json

import numpy as np
import pytest

from actionloom.bundle import GroundTruthSegment, frame_label_vector
from actionloom.evaluation import (
    ExperimentSpec,
    average_precision,
    frame_accuracy,
    is_hard_action,
    make_synthetic_bundle,
    map_at_iou,
    match_ground_truth,
    report_csv,
    report_json,
    report_table,
    run_experiment,
    sample_annotations,
    span_iou,
)
from conftest import build_bundle


# -- span iou -----------------------------------------------------------------

def test_span_iou_inclusive_frames():
    assert span_iou(0, 4, 0, 4) == 1.0
    assert span_iou(0, 4, 5, 9) == 0.0
    # one shared frame out of nine covered
    assert span_iou(0, 4, 4, 8) == pytest.approx(1.0 / 9.0)
    assert span_iou(0, 9, 2, 7) == pytest.approx(6.0 / 10.0)


# -- average precision -------------------------------------------------------------

def seg(video, start, end, category=0):
    return GroundTruthSegment(video, start, end, category)


def test_average_precision_hand_case():
    # one true positive at rank 1, one false positive at rank 2, two gts
    predictions = [(0, 0, 0, 9, 0.9), (1, 0, 20, 29, 0.8)]
    gts = [seg(0, 0, 9), seg(0, 40, 49)]
    ap = average_precision(predictions, gts, threshold=0.5)
    assert ap == pytest.approx(0.5)


def test_average_precision_perfect_detection():
    predictions = [(0, 0, 0, 9, 0.9), (1, 0, 40, 49, 0.8)]
    gts = [seg(0, 0, 9), seg(0, 40, 49)]
    assert average_precision(predictions, gts, 0.5) == pytest.approx(1.0)


def test_average_precision_duplicate_detections_penalized():
    # the second detection of the same gt is a false positive
    predictions = [(0, 0, 0, 9, 0.9), (1, 0, 1, 9, 0.8)]
    gts = [seg(0, 0, 9)]
    ap = average_precision(predictions, gts, 0.5)
    assert ap == pytest.approx(1.0)  # recall 1 reached before the duplicate
    predictions = [(0, 0, 1, 9, 0.9), (1, 0, 0, 9, 0.8)]
    gts = [seg(0, 0, 9), seg(0, 40, 49)]
    ap = average_precision(predictions, gts, 0.5)
    assert ap == pytest.approx(0.5)


def test_average_precision_threshold_is_inclusive():
    # iou exactly at the threshold still matches
    predictions = [(0, 0, 0, 4, 0.9)]
    gts = [seg(0, 0, 9)]
    assert average_precision(predictions, gts, 0.5) == pytest.approx(1.0)
    assert average_precision(predictions, gts, 0.51) == 0.0


def test_average_precision_score_ties_resolved_by_id():
    predictions = [(7, 0, 0, 9, 0.8), (2, 0, 0, 9, 0.8)]
    gts = [seg(0, 0, 9)]
    # action 2 sorts first on equal score and takes the gt
    assert average_precision(predictions, gts, 0.5) == pytest.approx(1.0)


def test_average_precision_no_gt():
    assert average_precision([(0, 0, 0, 4, 0.5)], [], 0.5) == 0.0


def test_map_at_iou_shape(tiny_bundle):
    out = map_at_iou(tiny_bundle, tiny_bundle.actions, thresholds=(0.3, 0.5))
    assert set(out["per_threshold"]) == {0.3, 0.5}
    assert set(out["per_category"]) == {0, 1}
    assert 0.0 <= out["mean"] <= 1.0


def test_map_perfect_when_actions_equal_gt(tiny_bundle):
    perfect = [tiny_bundle.action_by_id[a].with_span(g.start, g.end)
               for a, g in zip(sorted(tiny_bundle.action_by_id),
                               tiny_bundle.ground_truth)]
    out = map_at_iou(tiny_bundle, perfect, thresholds=(0.5, 0.7))
    assert out["mean"] == pytest.approx(1.0)


# -- frame accuracy -----------------------------------------------------------

def test_frame_accuracy_counts_background(tiny_bundle):
    gt_spans = [(g.start, g.end, g.category) for g in tiny_bundle.ground_truth]
    labels = frame_label_vector(tiny_bundle.n_frames, gt_spans)
    perfect = [tiny_bundle.action_by_id[a].with_span(g.start, g.end)
               for a, g in zip(sorted(tiny_bundle.action_by_id),
                               tiny_bundle.ground_truth)]
    assert frame_accuracy(tiny_bundle, perfect) == pytest.approx(1.0)
    detected = frame_accuracy(tiny_bundle, tiny_bundle.actions)
    assert detected < 1.0
    mismatch = int(round((1.0 - detected) * tiny_bundle.n_frames))
    hand = 0
    det = frame_label_vector(tiny_bundle.n_frames, [
        (a.start, a.end, a.category) for a in tiny_bundle.actions])
    hand = int(np.sum(det != labels))
    assert mismatch == hand


# -- ground truth matching -----------------------------------------------------

def test_match_ground_truth_prefers_anchor_containment(tiny_bundle):
    matches = match_ground_truth(tiny_bundle)
    assert set(matches) == {0, 1, 2, 3}
    for aid, g in matches.items():
        a = tiny_bundle.action_by_id[aid]
        assert g.category == a.category
        assert g.start <= a.anchor <= g.end


# -- annotation sampling --------------------------------------------------------

def test_sample_annotations_nested_in_v():
    bundle = make_synthetic_bundle(n_categories=2, actions_per_category=10,
                                   videos_per_category=1, seed=0)
    for seed in range(4):
        prev = set()
        for v in (2.0, 5.0, 10.0, 20.0, 50.0):
            picked = {c["action"] for c in sample_annotations(bundle, v, seed)}
            assert prev <= picked
            prev = picked


def test_sample_annotations_counts_and_sides():
    bundle = make_synthetic_bundle(n_categories=2, actions_per_category=10,
                                   videos_per_category=1, seed=0)
    corrections = sample_annotations(bundle, 10.0, seed=1)
    by_action = {}
    for c in corrections:
        by_action.setdefault(c["action"], set()).add(c["side"])
    # ceil(10% of 20) = 2 actions, both sides each
    assert len(by_action) == 2
    assert all(sides == {"left", "right"} for sides in by_action.values())
    for c in corrections:
        a = bundle.action_by_id[c["action"]]
        lo, hi = bundle.video_range(a.video_id)
        assert lo <= c["frame"] <= hi
        if c["side"] == "left":
            assert c["frame"] <= a.anchor
        else:
            assert c["frame"] >= a.anchor


def test_sample_annotations_deterministic_per_seed():
    bundle = make_synthetic_bundle(n_categories=2, actions_per_category=8,
                                   videos_per_category=1, seed=0)
    assert sample_annotations(bundle, 20, 3) == sample_annotations(bundle, 20, 3)
    assert sample_annotations(bundle, 20, 3) != sample_annotations(bundle, 20, 4)


def test_experiment_spec_validation():
    spec = ExperimentSpec(v_percent=5.0, seed=0)
    assert spec.iou_thresholds == (0.1, 0.3, 0.5, 0.7)
    with pytest.raises(ValueError):
        ExperimentSpec(v_percent=0.0, seed=0)
    with pytest.raises(ValueError):
        ExperimentSpec(v_percent=101.0, seed=0)


# -- synthetic bundle ------------------------------------------------------------

def test_synthetic_bundle_well_formed():
    bundle = make_synthetic_bundle(n_categories=3, actions_per_category=5,
                                   videos_per_category=2, seed=4)
    bundle.validate()
    assert len(bundle.actions) == 15
    assert len(bundle.categories) == 3
    assert len(bundle.videos) == 6
    matches = match_ground_truth(bundle)
    assert set(matches) == {a.action_id for a in bundle.actions}
    for a in bundle.actions:
        g = matches[a.action_id]
        # detected spans erode the ground truth inward on both sides
        assert g.start <= a.start <= a.anchor <= a.end <= g.end
        assert (a.start, a.end) != (g.start, g.end)


def test_synthetic_bundle_deterministic():
    b1 = make_synthetic_bundle(2, 4, 1, seed=9)
    b2 = make_synthetic_bundle(2, 4, 1, seed=9)
    assert np.array_equal(b1.features, b2.features)
    assert np.array_equal(b1.predictions, b2.predictions)
    assert b1.actions == b2.actions


def test_hard_action_share():
    ids = range(100)
    hard = sum(1 for i in ids if is_hard_action(i))
    assert hard == 40


# -- experiment report -----------------------------------------------------------

@pytest.fixture(scope="module")
def small_report():
    bundle = make_synthetic_bundle(n_categories=2, actions_per_category=8,
                                   videos_per_category=1, seed=1)
    return run_experiment(bundle, v_values=(5.0, 20.0), seeds=(0, 1),
                          iou_thresholds=(0.3, 0.5))


def test_run_experiment_report_shape(small_report):
    report = small_report
    assert set(report) >= {"baseline", "runs", "iou_thresholds", "seeds"}
    assert report["iou_thresholds"] == [0.3, 0.5]
    base = report["baseline"]
    assert 0.0 <= base["frame_accuracy"] <= 1.0
    assert 0.0 <= base["map"]["mean"] <= 1.0
    assert [r["v_percent"] for r in report["runs"]] == [5.0, 20.0]
    for run in report["runs"]:
        assert len(run["seeds"]) == 2
        accs = [s["frame_accuracy"] for s in run["seeds"]]
        assert run["mean_frame_accuracy"] == pytest.approx(
            float(np.mean(accs)))
        maps = [s["map"]["mean"] for s in run["seeds"]]
        assert run["mean_map"] == pytest.approx(float(np.mean(maps)))


def test_run_experiment_improves_over_baseline(small_report):
    report = small_report
    base_acc = report["baseline"]["frame_accuracy"]
    for run in report["runs"]:
        assert run["mean_frame_accuracy"] > base_acc


def test_report_renderers(small_report):
    table = report_table(small_report)
    assert "baseline acc" in table
    lines = table.splitlines()
    assert len(lines) == 1 + len(small_report["runs"])
    assert lines[-1].split()[0] == "20"
    csv = report_csv(small_report)
    header, *rows = csv.strip().splitlines()
    assert header == "v,seed,category,threshold,ap"
    assert all(len(r.split(",")) == 5 for r in rows)
    assert len(rows) == 2 * 2 * 2 * 2  # v values x seeds x categories x thresholds
    payload = json.loads(report_json(small_report))
    assert payload["baseline"]["frame_accuracy"] == pytest.approx(
        small_report["baseline"]["frame_accuracy"])
    assert report_json(small_report) == report_json(small_report)
