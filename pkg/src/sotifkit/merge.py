"""Cross-model fusion of ensemble detections into merged objects.

Two stages per frame:

1. Per-model NMS. Each detection scores objectness * max(class_probs);
   detections under the score floor are dropped, then greedy NMS suppresses
   overlapping boxes with the same winning label (or any label when
   class_agnostic is set).
2. Exclusive sequential clustering across models. Surviving detections are
   visited in a canonical order (ascending model index, then descending
   score, then file order) and each either joins the best-overlapping
   compatible cluster or founds a new one. A cluster is compatible when it
   has the same winning label, its representative box overlaps at or above
   the cluster threshold, and it holds no member from the same model; the
   exclusivity clause is what lets cluster size d count *models* agreeing on
   the object. Among compatible clusters the highest IoU wins, ties going to
   the earlier-founded cluster. The representative box is the arithmetic
   mean of member boxes and is recomputed as members join.

The result is deterministic for a given input ordering, which is why both
stages pin their orderings explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import InvariantViolation
from .types import BoundingBox, Detection


@dataclass(frozen=True, slots=True)
class MergeConfig:
    """Thresholds for NMS and clustering.

    score_floor and nms_iou are per-model test-time NMS settings; cluster_iou
    gates cross-model joining. cluster_iou=1.0 effectively disables merging
    (only bit-identical boxes join), cluster_iou=0.0 makes label and
    exclusivity the only gates.
    """

    score_floor: float = 0.25
    nms_iou: float = 0.45
    cluster_iou: float = 0.5
    class_agnostic_nms: bool = False

    def __post_init__(self) -> None:
        for name in ("score_floor", "nms_iou", "cluster_iou"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvariantViolation(f"{name} must be in [0, 1], got {value}")


@dataclass(frozen=True, slots=True)
class MergedObject:
    """One clustered object: mean box, winning label, contributing members."""

    box: BoundingBox
    label: int
    members: tuple[Detection, ...]

    @property
    def d(self) -> int:
        """Number of models that contributed a detection."""
        return len(self.members)


def nms_per_model(detections: Sequence[Detection], config: MergeConfig) -> list[Detection]:
    """Score-floor filter plus greedy NMS within one model's detections."""
    kept_order = sorted(
        (d for d in detections if d.score >= config.score_floor),
        key=lambda d: (-d.score, d.source_order),
    )
    survivors: list[Detection] = []
    # (x1, y1, x2, y2, area) per survivor, bucketed the same way the
    # comparison loop walks them
    agnostic = config.class_agnostic_nms
    buckets: dict[int, list[tuple[float, float, float, float, float]]] = {}
    threshold = config.nms_iou
    for candidate in kept_order:
        box = candidate.box
        cx1, cy1, cx2, cy2, c_area = box.x, box.y, box.x2, box.y2, box.area
        key = 0 if agnostic else candidate.winning_label
        bucket = buckets.setdefault(key, [])
        suppressed = False
        for kx1, ky1, kx2, ky2, k_area in bucket:
            ix1 = cx1 if cx1 > kx1 else kx1
            iy1 = cy1 if cy1 > ky1 else ky1
            ix2 = cx2 if cx2 < kx2 else kx2
            iy2 = cy2 if cy2 < ky2 else ky2
            iw = ix2 - ix1
            ih = iy2 - iy1
            if iw <= 0.0 or ih <= 0.0:
                continue
            inter = iw * ih
            if inter / (c_area + k_area - inter) > threshold:
                suppressed = True
                break
        if not suppressed:
            survivors.append(candidate)
            bucket.append((cx1, cy1, cx2, cy2, c_area))
    return survivors


def canonical_order(per_model: Sequence[Sequence[Detection]]) -> list[Detection]:
    """Flatten per-model lists into the clustering visit order."""
    ordered: list[Detection] = []
    for model_detections in per_model:
        ordered.extend(sorted(model_detections, key=lambda d: (-d.score, d.source_order)))
    return ordered


class _Cluster:
    __slots__ = ("label", "members", "models", "sx", "sy", "sw", "sh", "x1", "y1", "x2", "y2", "area")

    def __init__(self, founder: Detection):
        self.label = founder.winning_label
        self.members = [founder]
        self.models = {founder.model_index}
        box = founder.box
        self.sx = box.x
        self.sy = box.y
        self.sw = box.w
        self.sh = box.h
        self._refresh(1)

    def _refresh(self, n: int) -> None:
        x = self.sx / n
        y = self.sy / n
        w = self.sw / n
        h = self.sh / n
        self.x1 = x
        self.y1 = y
        self.x2 = x + w
        self.y2 = y + h
        self.area = w * h

    def add(self, detection: Detection) -> None:
        self.members.append(detection)
        self.models.add(detection.model_index)
        box = detection.box
        self.sx += box.x
        self.sy += box.y
        self.sw += box.w
        self.sh += box.h
        self._refresh(len(self.members))


def bsas_excl(per_model: Sequence[Sequence[Detection]], config: MergeConfig) -> list[MergedObject]:
    """Cluster NMS survivors across models; returns clusters in founding order."""
    threshold = config.cluster_iou
    clusters: list[_Cluster] = []
    # clusters can only accept same-label joiners, so bucket by label; within
    # a bucket the order stays founding order, which settles IoU ties
    by_label: dict[int, list[_Cluster]] = {}
    for det in canonical_order(per_model):
        label = det.winning_label
        model = det.model_index
        bx1, by1 = det.box.x, det.box.y
        bx2, by2 = det.box.x2, det.box.y2
        b_area = det.box.area
        best: _Cluster | None = None
        best_iou = -1.0
        bucket = by_label.get(label)
        if bucket:
            for cluster in bucket:
                if model in cluster.models:
                    continue
                ix1 = bx1 if bx1 > cluster.x1 else cluster.x1
                iy1 = by1 if by1 > cluster.y1 else cluster.y1
                ix2 = bx2 if bx2 < cluster.x2 else cluster.x2
                iy2 = by2 if by2 < cluster.y2 else cluster.y2
                iw = ix2 - ix1
                ih = iy2 - iy1
                inter = iw * ih if iw > 0.0 and ih > 0.0 else 0.0
                overlap = inter / (b_area + cluster.area - inter) if inter > 0.0 else 0.0
                # strict > keeps ties on the earlier-founded cluster
                if overlap >= threshold and overlap > best_iou:
                    best = cluster
                    best_iou = overlap
        if best is None:
            cluster = _Cluster(det)
            clusters.append(cluster)
            by_label.setdefault(label, []).append(cluster)
        else:
            best.add(det)
    merged: list[MergedObject] = []
    for cluster in clusters:
        n = len(cluster.members)
        merged.append(
            MergedObject(
                box=BoundingBox(
                    x=cluster.sx / n, y=cluster.sy / n, w=cluster.sw / n, h=cluster.sh / n
                ),
                label=cluster.label,
                members=tuple(cluster.members),
            )
        )
    return merged


def merge_frame(per_model: Sequence[Sequence[Detection]], config: MergeConfig) -> list[MergedObject]:
    """NMS each model then cluster across models."""
    return bsas_excl([nms_per_model(m, config) for m in per_model], config)
