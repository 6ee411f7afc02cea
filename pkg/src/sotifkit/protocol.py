"""Warning-quality evaluation of quantified detections against ground truth.

Each frame's quantified objects are matched to ground truth greedily and
class-agnostically: predictions are visited by descending top fused
probability and each takes the unmatched ground-truth box it overlaps best,
provided the IoU clears the match threshold. A matched prediction is
*accurate* when its winning label equals the ground-truth category. The
matching yields one row per participant:

* matched rows (prediction + ground truth) carrying accuracy, the
  ground-truth difficulty flag and the prediction's uncertainty H,
* ghost rows (unmatched predictions) carrying H but no difficulty,
* missed-gt rows (unmatched ground truth) carrying difficulty but no H.

Only rows with an H value (matched and ghost) can warn, so the four warning
metrics are computed over that universe. With W the warned rows and S the
rows that should warn under the configured policy:

* ACR, accurate coverage rate: |W & S| / |S| (1.0 when S is empty),
* FAR, false alarm rate: |W - S| / |W| (0.0 when W is empty),
* CQS, consistency: (accurate & quiet + inaccurate & warned) / universe
  (1.0 when the universe is empty),
* UQS, uncertainty quality: P(warned | inaccurate) / P(warned | accurate);
  conditionals over an empty set count 0, then 0/0 is 0 and x/0 is +inf.

The policy decides S: "hard-or-inaccurate" (default) wants warnings on hard
or mispredicted objects, "hard-only" and "inaccurate-only" restrict to one
arm. Ghost rows count as inaccurate and have no difficulty.

Every row also lands in exactly one cell of a fixed twelve-cell partition
(matched easy/hard x accurate/inaccurate x certain/uncertain, ghosts
certain/uncertain, missed easy/hard), which the reports expose for drilling
into failure modes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

from .entropy import QuantifiedObject
from .errors import InvariantViolation
from .types import Frame, iou

SHOULD_WARN_POLICIES = ("hard-or-inaccurate", "hard-only", "inaccurate-only")

GROUP_NAMES = ("total", "environment", "object", "natural", "handcraft")

CELL_KEYS = (
    "matched/easy/accurate/certain",
    "matched/easy/accurate/uncertain",
    "matched/easy/inaccurate/certain",
    "matched/easy/inaccurate/uncertain",
    "matched/hard/accurate/certain",
    "matched/hard/accurate/uncertain",
    "matched/hard/inaccurate/certain",
    "matched/hard/inaccurate/uncertain",
    "ghost/certain",
    "ghost/uncertain",
    "missed/easy",
    "missed/hard",
)


@dataclass(frozen=True, slots=True)
class ProtocolConfig:
    match_iou: float = 0.5
    should_warn: str = "hard-or-inaccurate"

    def __post_init__(self) -> None:
        if not 0.0 <= self.match_iou <= 1.0:
            raise InvariantViolation(f"match_iou must be in [0, 1], got {self.match_iou}")
        if self.should_warn not in SHOULD_WARN_POLICIES:
            raise InvariantViolation(
                f"should_warn must be one of {SHOULD_WARN_POLICIES}, got {self.should_warn!r}"
            )


@dataclass(frozen=True, slots=True)
class EvaluatedObject:
    """One protocol row. Fields not applicable to the kind are None."""

    kind: str  # "matched" | "ghost" | "missed-gt"
    frame_id: str
    hard: int | None  # ground-truth difficulty; None for ghosts
    accurate: bool | None  # label equality; None for missed-gt
    h: float | None  # penalized uncertainty; None for missed-gt
    label: int | None  # predicted winning label; None for missed-gt
    category: int | None  # ground-truth category; None for ghosts
    match_iou: float | None  # overlap of the matched pair; None otherwise

    def should_warn(self, policy: str) -> bool:
        """Whether this row belongs to S. Rows without H never do."""
        if self.h is None:
            return False
        inaccurate = not self.accurate
        hard = self.hard == 1
        if policy == "hard-only":
            return hard
        if policy == "inaccurate-only":
            return inaccurate
        return hard or inaccurate


def match_frame(
    frame: Frame, quantified: Sequence[QuantifiedObject], config: ProtocolConfig
) -> list[EvaluatedObject]:
    """Greedy class-agnostic matching; rows come out in a canonical order
    (predictions by original index, then missed ground truth by index)."""
    order = sorted(
        range(len(quantified)), key=lambda i: (-max(quantified[i].fused_probs), i)
    )
    gt = frame.ground_truth
    taken = [False] * len(gt)
    assigned: dict[int, tuple[int, float]] = {}
    for pred_idx in order:
        box = quantified[pred_idx].box
        best_gt = -1
        best_iou = -1.0
        for gt_idx, obj in enumerate(gt):
            if taken[gt_idx]:
                continue
            overlap = iou(box, obj.box)
            if overlap >= config.match_iou and overlap > best_iou:
                best_gt = gt_idx
                best_iou = overlap
        if best_gt >= 0:
            taken[best_gt] = True
            assigned[pred_idx] = (best_gt, best_iou)
    rows: list[EvaluatedObject] = []
    for pred_idx, pred in enumerate(quantified):
        if pred_idx in assigned:
            gt_idx, overlap = assigned[pred_idx]
            obj = gt[gt_idx]
            rows.append(
                EvaluatedObject(
                    kind="matched",
                    frame_id=frame.frame_id,
                    hard=obj.hard,
                    accurate=pred.label == obj.category,
                    h=pred.h,
                    label=pred.label,
                    category=obj.category,
                    match_iou=overlap,
                )
            )
        else:
            rows.append(
                EvaluatedObject(
                    kind="ghost",
                    frame_id=frame.frame_id,
                    hard=None,
                    accurate=False,
                    h=pred.h,
                    label=pred.label,
                    category=None,
                    match_iou=None,
                )
            )
    for gt_idx, obj in enumerate(gt):
        if not taken[gt_idx]:
            rows.append(
                EvaluatedObject(
                    kind="missed-gt",
                    frame_id=frame.frame_id,
                    hard=obj.hard,
                    accurate=None,
                    h=None,
                    label=None,
                    category=obj.category,
                    match_iou=None,
                )
            )
    return rows


@dataclass(frozen=True, slots=True)
class Metrics:
    """The four warning metrics at one threshold. uqs may be math.inf."""

    theta_w: float
    acr: float
    far: float
    cqs: float
    uqs: float

    def to_json(self) -> dict[str, Any]:
        return {
            "theta_w": self.theta_w,
            "acr": self.acr,
            "far": self.far,
            "cqs": self.cqs,
            "uqs": "inf" if math.isinf(self.uqs) else self.uqs,
        }


def compute_metrics(
    rows: Iterable[EvaluatedObject], theta_w: float, config: ProtocolConfig
) -> Metrics:
    """ACR/FAR/CQS/UQS over the rows that carry an uncertainty value."""
    universe = [r for r in rows if r.h is not None]
    n = len(universe)
    warned_and_should = 0
    warned_not_should = 0
    should_total = 0
    warned_total = 0
    consistent = 0
    acc_total = 0
    acc_warned = 0
    inacc_total = 0
    inacc_warned = 0
    policy = config.should_warn
    for row in universe:
        warned = row.h > theta_w
        should = row.should_warn(policy)
        should_total += should
        warned_total += warned
        if warned and should:
            warned_and_should += 1
        if warned and not should:
            warned_not_should += 1
        if row.accurate:
            acc_total += 1
            acc_warned += warned
            consistent += not warned
        else:
            inacc_total += 1
            inacc_warned += warned
            consistent += warned
    acr = warned_and_should / should_total if should_total else 1.0
    far = warned_not_should / warned_total if warned_total else 0.0
    cqs = consistent / n if n else 1.0
    p_warn_acc = acc_warned / acc_total if acc_total else 0.0
    p_warn_inacc = inacc_warned / inacc_total if inacc_total else 0.0
    if p_warn_acc == 0.0:
        uqs = 0.0 if p_warn_inacc == 0.0 else math.inf
    else:
        uqs = p_warn_inacc / p_warn_acc
    return Metrics(theta_w=theta_w, acr=acr, far=far, cqs=cqs, uqs=uqs)


def partition_cells(rows: Iterable[EvaluatedObject], theta_w: float) -> dict[str, int]:
    """Count rows into the fixed twelve-cell partition at one threshold."""
    cells = dict.fromkeys(CELL_KEYS, 0)
    for row in rows:
        if row.kind == "matched":
            key = "matched/{}/{}/{}".format(
                "hard" if row.hard else "easy",
                "accurate" if row.accurate else "inaccurate",
                "uncertain" if row.h > theta_w else "certain",
            )
        elif row.kind == "ghost":
            key = "ghost/uncertain" if row.h > theta_w else "ghost/certain"
        else:
            key = "missed/hard" if row.hard else "missed/easy"
        cells[key] += 1
    return cells


def sweep_grid(start: float = 0.0, stop: float = 3.0, step: float = 0.1) -> list[float]:
    """Inclusive threshold grid, endpoints rounded clean of float drift."""
    if step <= 0.0:
        raise InvariantViolation(f"sweep step must be > 0, got {step}")
    if stop < start:
        raise InvariantViolation(f"sweep stop {stop} below start {start}")
    count = int(round((stop - start) / step)) + 1
    return [round(start + i * step, 10) for i in range(count)]


def sweep_thresholds(
    rows: Sequence[EvaluatedObject],
    config: ProtocolConfig,
    *,
    start: float = 0.0,
    stop: float = 3.0,
    step: float = 0.1,
) -> list[Metrics]:
    """Recompute the metrics across the whole threshold grid."""
    return [compute_metrics(rows, theta, config) for theta in sweep_grid(start, stop, step)]


def group_frames(frames: Sequence[Frame]) -> dict[str, list[str]]:
    """Map the five report groups to the frame ids they cover.

    Groups overlap by construction: every frame is in total, a tagged frame
    is also in its primary group, and a frame with a tertiary tag lands in
    natural or handcraft as well.
    """
    groups: dict[str, list[str]] = {name: [] for name in GROUP_NAMES}
    for frame in frames:
        groups["total"].append(frame.frame_id)
        tag = frame.subset
        if tag is None:
            continue
        if tag.primary in ("environment", "object"):
            groups[tag.primary].append(frame.frame_id)
        if tag.tertiary in ("natural", "handcraft"):
            groups[tag.tertiary].append(frame.frame_id)
    return groups


def group_rows(
    frames: Sequence[Frame], rows: Sequence[EvaluatedObject]
) -> dict[str, list[EvaluatedObject]]:
    """Split protocol rows into the five report groups via their frames."""
    membership = group_frames(frames)
    by_frame: dict[str, list[EvaluatedObject]] = {}
    for row in rows:
        by_frame.setdefault(row.frame_id, []).append(row)
    grouped: dict[str, list[EvaluatedObject]] = {}
    for name in GROUP_NAMES:
        bucket: list[EvaluatedObject] = []
        for frame_id in membership[name]:
            bucket.extend(by_frame.get(frame_id, ()))
        grouped[name] = bucket
    return grouped


def group_report(
    rows: Sequence[EvaluatedObject], theta_w: float, config: ProtocolConfig
) -> dict[str, Any]:
    """Metrics plus partition counts for one group at the configured theta."""
    metrics = compute_metrics(rows, theta_w, config)
    cells = partition_cells(rows, theta_w)
    counts = {
        "rows": len(rows),
        "matched": sum(r.kind == "matched" for r in rows),
        "ghost": sum(r.kind == "ghost" for r in rows),
        "missed": sum(r.kind == "missed-gt" for r in rows),
    }
    return {"counts": counts, "metrics": metrics.to_json(), "cells": cells}
