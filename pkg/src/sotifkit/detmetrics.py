"""Average precision and recall for the merged detections.

Scoring follows the common detection-benchmark recipe. Per category:
predictions are ranked by score (top fused probability), capped per frame,
then matched greedily to same-category ground truth at an IoU threshold;
each ground-truth box is claimed at most once. The precision-recall curve is
summarized by 101-point interpolation: AP is the mean over recall points
r in {0.00, 0.01, ..., 1.00} of the best precision achieved at recall >= r.

Reported aggregates:

* ap50: AP at IoU 0.5,
* ar50: recall at IoU 0.5 under the per-frame detection cap,
* ap5095: AP averaged over IoU 0.50:0.05:0.95.

Categories with no ground-truth instances in the evaluated frames are
excluded from the means and listed separately instead of polluting them
with zeros.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass
from typing import Any, Sequence

from .entropy import QuantifiedObject
from .errors import InvariantViolation
from .types import BoundingBox, CategorySet, Frame, iou

AP_IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))


@dataclass(frozen=True, slots=True)
class MetricConfig:
    primary_iou: float = 0.5
    iou_thresholds: tuple[float, ...] = AP_IOU_THRESHOLDS
    max_detections: int = 100
    recall_points: int = 101

    def __post_init__(self) -> None:
        if self.max_detections < 1:
            raise InvariantViolation(f"max_detections must be >= 1, got {self.max_detections}")
        if self.recall_points < 2:
            raise InvariantViolation(f"recall_points must be >= 2, got {self.recall_points}")
        for value in (self.primary_iou, *self.iou_thresholds):
            if not 0.0 < value <= 1.0:
                raise InvariantViolation(f"IoU threshold must be in (0, 1], got {value}")


@dataclass(frozen=True, slots=True)
class ScoredPrediction:
    """A prediction flattened out of its frame for ranking."""

    frame_id: str
    label: int
    score: float
    box: BoundingBox


def predictions_from_quantified(
    frame_id: str, quantified: Sequence[QuantifiedObject]
) -> list[ScoredPrediction]:
    return [
        ScoredPrediction(frame_id=frame_id, label=q.label, score=max(q.fused_probs), box=q.box)
        for q in quantified
    ]


def _cap_per_frame(
    predictions: Sequence[ScoredPrediction], max_detections: int
) -> list[ScoredPrediction]:
    by_frame: dict[str, list[tuple[int, ScoredPrediction]]] = {}
    for idx, pred in enumerate(predictions):
        by_frame.setdefault(pred.frame_id, []).append((idx, pred))
    kept: list[ScoredPrediction] = []
    for frame_id in sorted(by_frame):
        ranked = sorted(by_frame[frame_id], key=lambda item: (-item[1].score, item[0]))
        kept.extend(pred for _, pred in ranked[:max_detections])
    return kept


def _match_category(
    predictions: Sequence[ScoredPrediction],
    gt_boxes: dict[str, list[BoundingBox]],
    iou_threshold: float,
) -> list[bool]:
    """Greedy TP/FP flags for score-ranked predictions of one category."""
    taken: dict[str, list[bool]] = {fid: [False] * len(boxes) for fid, boxes in gt_boxes.items()}
    flags: list[bool] = []
    for pred in predictions:
        boxes = gt_boxes.get(pred.frame_id)
        if not boxes:
            flags.append(False)
            continue
        used = taken[pred.frame_id]
        best_idx = -1
        best_iou = -1.0
        for gt_idx, box in enumerate(boxes):
            if used[gt_idx]:
                continue
            overlap = iou(pred.box, box)
            if overlap >= iou_threshold and overlap > best_iou:
                best_idx = gt_idx
                best_iou = overlap
        if best_idx >= 0:
            used[best_idx] = True
            flags.append(True)
        else:
            flags.append(False)
    return flags


def interpolated_ap(tp_flags: Sequence[bool], gt_count: int, recall_points: int = 101) -> float:
    """Area under the interpolated PR curve for score-ranked TP/FP flags."""
    if gt_count <= 0:
        raise InvariantViolation("AP undefined for zero ground-truth instances")
    recalls: list[float] = []
    best_after: list[float] = []
    tp_cum = 0
    for rank, tp in enumerate(tp_flags, start=1):
        tp_cum += tp
        recalls.append(tp_cum / gt_count)
        best_after.append(tp_cum / rank)
    # suffix max turns precision into its monotone interpolated envelope
    for i in range(len(best_after) - 2, -1, -1):
        if best_after[i] < best_after[i + 1]:
            best_after[i] = best_after[i + 1]
    total = 0.0
    denom = recall_points - 1
    for step in range(recall_points):
        r = step / denom
        idx = bisect_left(recalls, r)
        if idx < len(recalls):
            total += best_after[idx]
    return total / recall_points


@dataclass(frozen=True, slots=True)
class CategoryMetrics:
    category: int
    gt_count: int
    ap50: float
    ar50: float
    ap5095: float


def evaluate_category(
    category: int,
    predictions: Sequence[ScoredPrediction],
    frames: Sequence[Frame],
    config: MetricConfig,
) -> CategoryMetrics | None:
    """Metrics for one category, or None when it has no ground truth."""
    gt_boxes: dict[str, list[BoundingBox]] = {}
    gt_count = 0
    for frame in frames:
        boxes = [obj.box for obj in frame.ground_truth if obj.category == category]
        if boxes:
            gt_boxes[frame.frame_id] = boxes
            gt_count += len(boxes)
    if gt_count == 0:
        return None
    ranked = sorted(
        (p for p in predictions if p.label == category),
        key=lambda p: (-p.score, p.frame_id),
    )
    ap_by_threshold: dict[float, float] = {}
    ar50 = 0.0
    for threshold in sorted({config.primary_iou, *config.iou_thresholds}):
        flags = _match_category(ranked, gt_boxes, threshold)
        ap_by_threshold[threshold] = interpolated_ap(flags, gt_count, config.recall_points)
        if threshold == config.primary_iou:
            ar50 = sum(flags) / gt_count
    ap5095 = sum(ap_by_threshold[t] for t in config.iou_thresholds) / len(config.iou_thresholds)
    return CategoryMetrics(
        category=category,
        gt_count=gt_count,
        ap50=ap_by_threshold[config.primary_iou],
        ar50=ar50,
        ap5095=ap5095,
    )


def summarize(
    frames: Sequence[Frame],
    predictions: Sequence[ScoredPrediction],
    categories: CategorySet,
    config: MetricConfig | None = None,
) -> dict[str, Any]:
    """Per-category metrics plus category means for one set of frames.

    The per-frame detection cap is applied once, before the per-category
    split, matching the usual benchmark convention.
    """
    config = config or MetricConfig()
    capped = _cap_per_frame(predictions, config.max_detections)
    per_category: list[CategoryMetrics] = []
    excluded: list[int] = []
    for category in range(categories.count):
        result = evaluate_category(category, capped, frames, config)
        if result is None:
            excluded.append(category)
        else:
            per_category.append(result)
    if per_category:
        mean = {
            "ap50": sum(m.ap50 for m in per_category) / len(per_category),
            "ar50": sum(m.ar50 for m in per_category) / len(per_category),
            "ap5095": sum(m.ap5095 for m in per_category) / len(per_category),
        }
    else:
        mean = {"ap50": 0.0, "ar50": 0.0, "ap5095": 0.0}
    return {
        "per_category": per_category,
        "mean": mean,
        "excluded_categories": excluded,
    }
