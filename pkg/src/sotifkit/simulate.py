"""Seeded synthetic scenes with a controllable ensemble of flawed detectors.

The generator builds ground-truth frames and then runs T imaginary detector
models over them. Every stochastic choice comes from one random.Random(seed)
stream in a fixed draw order, so a config and seed pin the dataset down to
the byte.

Knobs and the failure modes they produce:

* detect_prob_easy / detect_prob_hard: per-model recall; hard objects get
  missed more, driving the vote count d below T.
* jitter: uniform box perturbation as a fraction of the box size.
* confusion: probability a model mislabels a hard object (the label slides
  to the next category), producing inaccurate-but-confident detections and
  cross-label cluster splits.
* prob_noise: how far a cooperative model's class vector drifts from
  one-hot; zero gives exact one-hot vectors.
* diffuse_rate: probability an object (easy ones included) confounds every
  model at once into a spread-out class vector; these come out accurately
  labeled but with high fused entropy.
* ghost_rate: Poisson mean of spurious detections per model per frame.
* subsets: optional weighted tags with per-subset difficulty scaling, so
  grouped reports have something to disagree about.

With detect probabilities 1 and every noise knob 0, each model reproduces
the ground truth exactly: all clusters reach d = T with one-hot fused
probabilities and zero entropy. Tests lean on that fixed point.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from typing import Any

from .errors import InvariantViolation, ParseError
from .types import BoundingBox, Detection, Frame, GroundTruthObject, SubsetTag, iou


@dataclass(frozen=True, slots=True)
class SubsetSpec:
    """A subset tag plus how frames in it differ from the baseline."""

    path: str
    weight: float = 1.0
    detect_scale: float = 1.0
    hard_rate: float | None = None

    def __post_init__(self) -> None:
        SubsetTag.parse(self.path)
        if not self.weight > 0.0:
            raise InvariantViolation(f"subset weight must be > 0, got {self.weight}")
        if not 0.0 <= self.detect_scale <= 1.0:
            raise InvariantViolation(f"detect_scale must be in [0, 1], got {self.detect_scale}")
        if self.hard_rate is not None and not 0.0 <= self.hard_rate <= 1.0:
            raise InvariantViolation(f"hard_rate must be in [0, 1], got {self.hard_rate}")


@dataclass(frozen=True, slots=True)
class SimConfig:
    seed: int = 0
    frames: int = 100
    image_width: int = 1280
    image_height: int = 720
    class_count: int = 11
    ensemble_size: int = 5
    min_objects: int = 1
    max_objects: int = 6
    hard_rate: float = 0.3
    detect_prob_easy: float = 0.95
    detect_prob_hard: float = 0.6
    jitter: float = 0.05
    confusion: float = 0.25
    prob_noise: float = 0.15
    diffuse_rate: float = 0.05
    ghost_rate: float = 0.3
    untagged_weight: float = 0.0
    subsets: tuple[SubsetSpec, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if self.frames < 0:
            raise InvariantViolation(f"frames must be >= 0, got {self.frames}")
        if self.image_width < 32 or self.image_height < 32:
            raise InvariantViolation("image must be at least 32x32")
        if self.class_count < 2:
            raise InvariantViolation(f"class_count must be >= 2, got {self.class_count}")
        if self.ensemble_size < 1:
            raise InvariantViolation(f"ensemble_size must be >= 1, got {self.ensemble_size}")
        if not 0 <= self.min_objects <= self.max_objects:
            raise InvariantViolation(
                f"need 0 <= min_objects <= max_objects, got {self.min_objects}..{self.max_objects}"
            )
        for name in ("hard_rate", "detect_prob_easy", "detect_prob_hard", "confusion",
                     "diffuse_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvariantViolation(f"{name} must be in [0, 1], got {value}")
        if not 0.0 <= self.jitter <= 0.4:
            raise InvariantViolation(f"jitter must be in [0, 0.4], got {self.jitter}")
        if not 0.0 <= self.prob_noise <= 0.8:
            raise InvariantViolation(f"prob_noise must be in [0, 0.8], got {self.prob_noise}")
        if not (math.isfinite(self.ghost_rate) and self.ghost_rate >= 0.0):
            raise InvariantViolation(f"ghost_rate must be >= 0, got {self.ghost_rate}")
        if self.untagged_weight < 0.0:
            raise InvariantViolation(f"untagged_weight must be >= 0, got {self.untagged_weight}")
        if not self.subsets and self.untagged_weight == 0.0:
            object.__setattr__(self, "untagged_weight", 1.0)

    @classmethod
    def from_json(cls, text: str, *, source: str = "<sim-config>") -> "SimConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}", source=source)
        if not isinstance(raw, dict):
            raise ParseError("simulator config must be a JSON object", source=source)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ParseError(f"unknown config keys: {sorted(unknown)}", source=source)
        subsets = raw.pop("subsets", [])
        if not isinstance(subsets, list):
            raise ParseError("subsets must be an array", source=source)
        try:
            specs = tuple(SubsetSpec(**entry) for entry in subsets)
            return cls(subsets=specs, **raw)
        except (InvariantViolation, TypeError) as exc:
            raise ParseError(str(exc), source=source)

    def to_json(self) -> dict[str, Any]:
        doc = {
            name: getattr(self, name)
            for name in self.__dataclass_fields__
            if name != "subsets"
        }
        doc["subsets"] = [
            {
                "path": s.path,
                "weight": s.weight,
                "detect_scale": s.detect_scale,
                "hard_rate": s.hard_rate,
            }
            for s in self.subsets
        ]
        return doc


@dataclass(frozen=True, slots=True)
class SimulatedFrame:
    frame: Frame
    per_model: tuple[tuple[Detection, ...], ...]


def _poisson(rng: random.Random, mean: float) -> int:
    if mean <= 0.0:
        return 0
    limit = math.exp(-mean)
    count = 0
    product = rng.random()
    while product > limit:
        count += 1
        product *= rng.random()
    return count


def _place_box(rng: random.Random, config: SimConfig, placed: list[BoundingBox]) -> BoundingBox:
    """Draw a box, retrying a bounded number of times to limit GT overlap."""
    for _ in range(50):
        w = rng.uniform(0.04, 0.25) * config.image_width
        h = rng.uniform(0.06, 0.3) * config.image_height
        x = rng.uniform(0.0, config.image_width - w)
        y = rng.uniform(0.0, config.image_height - h)
        box = BoundingBox(x=x, y=y, w=w, h=h)
        if all(iou(box, other) <= 0.3 for other in placed):
            return box
    return box


def _jitter_box(rng: random.Random, box: BoundingBox, config: SimConfig) -> BoundingBox:
    j = config.jitter
    # four draws always consumed, even at jitter 0, to keep the stream stable
    dx = rng.uniform(-j, j) * box.w
    dy = rng.uniform(-j, j) * box.h
    dw = 1.0 + rng.uniform(-j, j)
    dh = 1.0 + rng.uniform(-j, j)
    w = max(box.w * dw, 2.0)
    h = max(box.h * dh, 2.0)
    x = min(max(box.x + dx, 0.0), config.image_width - w)
    y = min(max(box.y + dy, 0.0), config.image_height - h)
    return BoundingBox(x=x, y=y, w=max(w, 2.0), h=max(h, 2.0))


def _crisp_probs(rng: random.Random, label: int, config: SimConfig) -> tuple[float, ...]:
    """Near one-hot vector; exactly one-hot when prob_noise is 0."""
    spread = rng.uniform(0.0, config.prob_noise)
    probs = [0.0] * config.class_count
    if spread == 0.0:
        probs[label] = 1.0
        return tuple(probs)
    probs[label] = 1.0 - spread
    share = spread / (config.class_count - 1)
    for c in range(config.class_count):
        if c != label:
            probs[c] = share
    return tuple(probs)


def _diffuse_probs(rng: random.Random, label: int, config: SimConfig) -> tuple[float, ...]:
    """Spread-out vector whose argmax is still the given label."""
    winner = rng.uniform(0.3, 0.55)
    rival = (label + 1 + rng.randrange(config.class_count - 1)) % config.class_count
    rival_p = winner * rng.uniform(0.45, 0.9)
    rest = max(1.0 - winner - rival_p, 0.0) / max(config.class_count - 2, 1)
    probs = [min(rest, rival_p * 0.9)] * config.class_count
    probs[label] = winner
    probs[rival] = rival_p
    return tuple(probs)


def _frame_subset(rng: random.Random, config: SimConfig) -> SubsetSpec | None:
    total = config.untagged_weight + sum(s.weight for s in config.subsets)
    pick = rng.uniform(0.0, total)
    if pick < config.untagged_weight:
        return None
    pick -= config.untagged_weight
    for spec in config.subsets:
        if pick < spec.weight:
            return spec
        pick -= spec.weight
    return config.subsets[-1] if config.subsets else None


def generate(config: SimConfig) -> list[SimulatedFrame]:
    """Build all frames with their ground truth and per-model detections."""
    rng = random.Random(config.seed)
    width = len(str(max(config.frames - 1, 0)))
    frames: list[SimulatedFrame] = []
    for index in range(config.frames):
        frame_id = f"frame_{index:0{width}d}"
        spec = _frame_subset(rng, config)
        hard_rate = config.hard_rate if spec is None or spec.hard_rate is None else spec.hard_rate
        scale = 1.0 if spec is None else spec.detect_scale

        count = rng.randint(config.min_objects, config.max_objects)
        placed: list[BoundingBox] = []
        objects: list[GroundTruthObject] = []
        diffuse_flags: list[bool] = []
        for _ in range(count):
            box = _place_box(rng, config, placed)
            placed.append(box)
            category = rng.randrange(config.class_count)
            hard = 1 if rng.random() < hard_rate else 0
            objects.append(GroundTruthObject(category=category, box=box, hard=hard))
            diffuse_flags.append(rng.random() < config.diffuse_rate)

        per_model: list[tuple[Detection, ...]] = []
        for t in range(config.ensemble_size):
            detections: list[Detection] = []
            order = 0
            for obj, diffuse in zip(objects, diffuse_flags):
                base = config.detect_prob_hard if obj.hard else config.detect_prob_easy
                if rng.random() >= base * scale:
                    continue
                box = _jitter_box(rng, obj.box, config)
                label = obj.category
                if obj.hard and rng.random() < config.confusion:
                    label = (label + 1) % config.class_count
                if diffuse:
                    probs = _diffuse_probs(rng, label, config)
                    objectness = rng.uniform(0.5, 0.85)
                elif config.prob_noise == 0.0 and config.jitter == 0.0:
                    probs = _crisp_probs(rng, label, config)
                    objectness = 1.0
                else:
                    probs = _crisp_probs(rng, label, config)
                    objectness = rng.uniform(0.75, 1.0) if not obj.hard else rng.uniform(0.55, 0.95)
                detections.append(
                    Detection(
                        box=box,
                        class_probs=probs,
                        objectness=objectness,
                        model_index=t,
                        source_order=order,
                    )
                )
                order += 1
            for _ in range(_poisson(rng, config.ghost_rate)):
                box = _place_box(rng, config, [])
                label = rng.randrange(config.class_count)
                probs = _diffuse_probs(rng, label, config)
                detections.append(
                    Detection(
                        box=box,
                        class_probs=probs,
                        objectness=rng.uniform(0.35, 0.7),
                        model_index=t,
                        source_order=order,
                    )
                )
                order += 1
            per_model.append(tuple(detections))

        frame = Frame(
            frame_id=frame_id,
            width=config.image_width,
            height=config.image_height,
            ground_truth=tuple(objects),
            subset=None if spec is None else SubsetTag.parse(spec.path),
        )
        frames.append(SimulatedFrame(frame=frame, per_model=tuple(per_model)))
    return frames
