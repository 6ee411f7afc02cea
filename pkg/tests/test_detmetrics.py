import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sotifkit.detmetrics import (
    AP_IOU_THRESHOLDS,
    MetricConfig,
    ScoredPrediction,
    evaluate_category,
    interpolated_ap,
    summarize,
)
from sotifkit.errors import InvariantViolation
from sotifkit.types import BoundingBox, CategorySet, Frame, GroundTruthObject

from reference import ref_ap, ref_detection_summary, ref_recall

CATS = CategorySet.generic(3)


def sp(frame_id, label, score, x=0.0, y=0.0, w=10.0, h=10.0):
    return ScoredPrediction(
        frame_id=frame_id, label=label, score=score, box=BoundingBox(x=x, y=y, w=w, h=h)
    )


def gt(category, x=0.0, y=0.0, w=10.0, h=10.0, hard=0):
    return GroundTruthObject(category=category, box=BoundingBox(x=x, y=y, w=w, h=h), hard=hard)


def frame(frame_id, objects):
    return Frame(frame_id=frame_id, width=640, height=480, ground_truth=tuple(objects))


class TestInterpolatedAp:
    def test_three_detection_fixture(self):
        # ranked flags TP, FP, TP over two ground-truth boxes:
        # precision-at-recall envelope gives (51 + 50 * 2/3 + 202/3) / 303
        flags = [True, False, True]
        assert interpolated_ap(flags, gt_count=2) == pytest.approx(253 / 303, abs=1e-12)

    def test_perfect_ranking(self):
        assert interpolated_ap([True, True], gt_count=2) == pytest.approx(1.0)

    def test_no_true_positives(self):
        assert interpolated_ap([False, False], gt_count=3) == 0.0

    def test_no_detections(self):
        assert interpolated_ap([], gt_count=3) == 0.0

    def test_matches_reference_fixture(self):
        frames = {"f0": [(0.0, 0.0, 10.0, 10.0), (100.0, 0.0, 10.0, 10.0)]}
        preds = [
            {"frame_id": "f0", "score": 0.9, "box": (0.0, 0.0, 10.0, 10.0)},
            {"frame_id": "f0", "score": 0.8, "box": (50.0, 50.0, 10.0, 10.0)},
            {"frame_id": "f0", "score": 0.7, "box": (100.0, 0.0, 10.0, 10.0)},
        ]
        assert ref_ap(preds, frames, 0.5) == pytest.approx(253 / 303, abs=1e-12)


class TestEvaluateCategory:
    def test_perfect_detector(self):
        frames = [frame("f0", [gt(0), gt(0, x=50)]), frame("f1", [gt(0, y=30)])]
        preds = [
            sp("f0", 0, 0.9),
            sp("f0", 0, 0.8, x=50),
            sp("f1", 0, 0.7, y=30),
        ]
        result = evaluate_category(0, preds, frames, MetricConfig())
        assert result.gt_count == 3
        assert result.ap50 == pytest.approx(1.0)
        assert result.ar50 == pytest.approx(1.0)
        assert result.ap5095 == pytest.approx(1.0)

    def test_zero_gt_category_is_none(self):
        frames = [frame("f0", [gt(0)])]
        assert evaluate_category(1, [sp("f0", 1, 0.9)], frames, MetricConfig()) is None

    def test_loose_box_drops_out_at_high_iou(self):
        frames = [frame("f0", [gt(0)])]
        # half-overlapping box: IoU 1/3, below even the 0.5 rung
        offcenter = [sp("f0", 0, 0.9, x=5)]
        result = evaluate_category(0, offcenter, frames, MetricConfig())
        assert result.ap50 == 0.0 and result.ap5095 == 0.0

    def test_fixture_ap(self):
        frames = [frame("f0", [gt(0), gt(0, x=100)])]
        preds = [
            sp("f0", 0, 0.9),
            sp("f0", 0, 0.8, x=50, y=50),
            sp("f0", 0, 0.7, x=100),
        ]
        result = evaluate_category(0, preds, frames, MetricConfig())
        assert result.ap50 == pytest.approx(253 / 303, abs=1e-12)
        assert result.ar50 == pytest.approx(1.0)


class TestSummarize:
    def test_cap_applies_before_category_split(self):
        config = MetricConfig(max_detections=1)
        frames = [frame("f0", [gt(0), gt(1, x=50)])]
        # the low-scoring category-1 prediction is capped away frame-wide
        preds = [sp("f0", 0, 0.9), sp("f0", 1, 0.5, x=50)]
        report = summarize(frames, preds, CATS, config)
        by_cat = {m.category: m for m in report["per_category"]}
        assert by_cat[0].ap50 == pytest.approx(1.0)
        assert by_cat[1].ap50 == 0.0

    def test_excluded_categories_recorded(self):
        frames = [frame("f0", [gt(0)])]
        report = summarize(frames, [sp("f0", 0, 0.9)], CATS)
        assert report["excluded_categories"] == [1, 2]
        assert report["mean"]["ap50"] == pytest.approx(1.0)

    def test_mean_over_included_only(self):
        frames = [frame("f0", [gt(0), gt(1, x=50)])]
        preds = [sp("f0", 0, 0.9)]  # category 1 has gt but no predictions
        report = summarize(frames, preds, CATS)
        assert report["mean"]["ap50"] == pytest.approx(0.5)
        assert report["excluded_categories"] == [2]

    def test_no_ground_truth_at_all(self):
        report = summarize([frame("f0", [])], [], CATS)
        assert report["per_category"] == []
        assert report["mean"] == {"ap50": 0.0, "ar50": 0.0, "ap5095": 0.0}
        assert report["excluded_categories"] == [0, 1, 2]


class TestConfig:
    def test_threshold_grid(self):
        assert AP_IOU_THRESHOLDS == (0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95)

    def test_rejects_bad_values(self):
        with pytest.raises(InvariantViolation):
            MetricConfig(max_detections=0)
        with pytest.raises(InvariantViolation):
            MetricConfig(primary_iou=0.0)
        with pytest.raises(InvariantViolation):
            MetricConfig(recall_points=1)


class TestReferenceAgreement:
    @given(seed=st.integers(0, 20_000))
    @settings(max_examples=100, deadline=None)
    def test_summary_matches_brute_force(self, seed):
        rng = random.Random(seed)
        frames = []
        preds = []
        for f in range(rng.randint(1, 6)):
            frame_id = f"f{f}"
            objects = [
                gt(
                    rng.randrange(3),
                    x=rng.uniform(0, 150),
                    y=rng.uniform(0, 150),
                    w=rng.uniform(8, 40),
                    h=rng.uniform(8, 40),
                )
                for _ in range(rng.randint(0, 4))
            ]
            frames.append(frame(frame_id, objects))
            for obj in objects:
                if rng.random() < 0.75:
                    preds.append(
                        sp(
                            frame_id,
                            rng.randrange(3),
                            rng.random(),
                            x=obj.box.x + rng.uniform(-4, 4),
                            y=obj.box.y + rng.uniform(-4, 4),
                            w=obj.box.w * rng.uniform(0.8, 1.2),
                            h=obj.box.h * rng.uniform(0.8, 1.2),
                        )
                    )
            for _ in range(rng.randint(0, 2)):
                preds.append(
                    sp(frame_id, rng.randrange(3), rng.random(),
                       x=rng.uniform(0, 150), y=rng.uniform(0, 150),
                       w=rng.uniform(8, 40), h=rng.uniform(8, 40))
                )
        mine = summarize(frames, preds, CATS)
        expected = ref_detection_summary(
            [
                {
                    "frame_id": f.frame_id,
                    "objects": [
                        {"category": o.category, "box": (o.box.x, o.box.y, o.box.w, o.box.h)}
                        for o in f.ground_truth
                    ],
                }
                for f in frames
            ],
            [
                {"frame_id": p.frame_id, "label": p.label, "score": p.score,
                 "box": (p.box.x, p.box.y, p.box.w, p.box.h)}
                for p in preds
            ],
            class_count=3,
            iou_thresholds=AP_IOU_THRESHOLDS,
        )
        assert mine["excluded_categories"] == expected["excluded"]
        assert mine["mean"]["ap50"] == pytest.approx(expected["mean"]["ap50"], abs=1e-9)
        assert mine["mean"]["ar50"] == pytest.approx(expected["mean"]["ar50"], abs=1e-9)
        assert mine["mean"]["ap5095"] == pytest.approx(expected["mean"]["ap5095"], abs=1e-9)
        mine_by_cat = {m.category: m for m in mine["per_category"]}
        for cat, row in expected["per_category"].items():
            got = mine_by_cat[cat]
            assert got.ap50 == pytest.approx(row["ap50"], abs=1e-9)
            assert got.ar50 == pytest.approx(row["ar50"], abs=1e-9)
            assert got.ap5095 == pytest.approx(row["ap5095"], abs=1e-9)
