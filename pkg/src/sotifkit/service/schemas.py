"""Request and response models for the HTTP service.

The models mirror the core dataclasses closely; structural validation
happens here through pydantic, semantic validation (probability ranges, box
geometry) stays in the core constructors so both entry points enforce the
same rules.
"""

from __future__ import annotations

from typing import Any

from pydantic import BaseModel, Field

from ..entropy import EntropyConfig
from ..merge import MergeConfig
from ..protocol import ProtocolConfig
from ..types import BoundingBox, Detection, Frame, GroundTruthObject, SubsetTag


class MergeConfigIn(BaseModel):
    score_floor: float = 0.25
    nms_iou: float = 0.45
    cluster_iou: float = 0.5
    class_agnostic_nms: bool = False

    def to_config(self) -> MergeConfig:
        return MergeConfig(**self.model_dump())


class EntropyConfigIn(BaseModel):
    class_count: int = 11
    ensemble_size: int = 5
    penalty: float = 0.1
    theta_w: float = 1.0
    log_base: str = "2"
    policy: str = "zero-fill"

    def to_config(self) -> EntropyConfig:
        return EntropyConfig(**self.model_dump())


class ProtocolConfigIn(BaseModel):
    match_iou: float = 0.5
    should_warn: str = "hard-or-inaccurate"

    def to_config(self) -> ProtocolConfig:
        return ProtocolConfig(**self.model_dump())


class DetectionIn(BaseModel):
    bbox: list[float] = Field(min_length=4, max_length=4)
    objectness: float
    class_probs: list[float]

    def to_detection(self, model_index: int, source_order: int) -> Detection:
        return Detection(
            box=BoundingBox(x=self.bbox[0], y=self.bbox[1], w=self.bbox[2], h=self.bbox[3]),
            class_probs=tuple(self.class_probs),
            objectness=self.objectness,
            model_index=model_index,
            source_order=source_order,
        )


class GroundTruthIn(BaseModel):
    category: int
    bbox: list[float] = Field(min_length=4, max_length=4)
    hard: int = 0

    def to_object(self) -> GroundTruthObject:
        return GroundTruthObject(
            category=self.category,
            box=BoundingBox(x=self.bbox[0], y=self.bbox[1], w=self.bbox[2], h=self.bbox[3]),
            hard=self.hard,
        )


class FrameIn(BaseModel):
    frame_id: str
    width: int = 1280
    height: int = 720
    subset: str | None = None
    ground_truth: list[GroundTruthIn] = Field(default_factory=list)
    per_model: list[list[DetectionIn]]

    def to_frame(self) -> Frame:
        return Frame(
            frame_id=self.frame_id,
            width=self.width,
            height=self.height,
            ground_truth=tuple(obj.to_object() for obj in self.ground_truth),
            subset=SubsetTag.parse(self.subset) if self.subset else None,
        )

    def to_detections(self) -> list[list[Detection]]:
        return [
            [det.to_detection(t, order) for order, det in enumerate(model)]
            for t, model in enumerate(self.per_model)
        ]


class QuantifyFrameRequest(BaseModel):
    per_model: list[list[DetectionIn]]
    merge: MergeConfigIn = Field(default_factory=MergeConfigIn)
    entropy: EntropyConfigIn = Field(default_factory=EntropyConfigIn)


class QuantifiedObjectOut(BaseModel):
    bbox: list[float]
    label: int
    d: int
    fused_probs: list[float]
    h_star: float
    h: float
    warned: bool


class QuantifyFrameResponse(BaseModel):
    header: dict[str, Any]
    objects: list[QuantifiedObjectOut]


class ClusterEntropyRequest(BaseModel):
    class_prob_vectors: list[list[float]] = Field(min_length=1)
    entropy: EntropyConfigIn = Field(default_factory=EntropyConfigIn)


class ClusterEntropyResponse(BaseModel):
    fused_probs: list[float]
    d: int
    h_star: float
    h: float
    warned: bool


class EvaluateRequest(BaseModel):
    frames: list[FrameIn]
    merge: MergeConfigIn = Field(default_factory=MergeConfigIn)
    entropy: EntropyConfigIn = Field(default_factory=EntropyConfigIn)
    protocol: ProtocolConfigIn = Field(default_factory=ProtocolConfigIn)


class GroupReportOut(BaseModel):
    counts: dict[str, int]
    metrics: dict[str, Any]
    cells: dict[str, int]


class EvaluateResponse(BaseModel):
    groups: dict[str, GroupReportOut]


class SweepRequest(EvaluateRequest):
    start: float = 0.0
    stop: float = 3.0
    step: float = 0.1


class SweepResponse(BaseModel):
    sweep: list[dict[str, Any]]
