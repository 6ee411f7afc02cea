"""Core domain types: categories, boxes, detections, ground truth, subset tags.

Everything here is an immutable value object; instances can be shared freely
across threads and processes. Box geometry uses the top-left corner plus
width/height convention in absolute pixels; normalized center formats are
converted at the parsing boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import InvariantViolation

DEFAULT_CATEGORY_NAMES = (
    "car",
    "bus",
    "truck",
    "train",
    "bike",
    "motor",
    "person",
    "rider",
    "traffic sign",
    "traffic light",
    "traffic cone",
)


@dataclass(frozen=True)
class CategorySet:
    """Ordered set of category labels; detections and ground truth index into it.

    A single CategorySet is configured per run. Files carrying a different
    taxonomy are rejected, never remapped.
    """

    names: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.names:
            raise InvariantViolation("category set must not be empty")
        if any(not n for n in self.names):
            raise InvariantViolation("category labels must be non-empty")
        if len(set(self.names)) != len(self.names):
            raise InvariantViolation("category labels must be unique")
        object.__setattr__(self, "names", tuple(self.names))

    @classmethod
    def default(cls) -> CategorySet:
        """The 11-category traffic-participant taxonomy."""
        return cls(DEFAULT_CATEGORY_NAMES)

    @classmethod
    def generic(cls, count: int) -> CategorySet:
        """A synthetic taxonomy of `count` placeholder labels."""
        if count == len(DEFAULT_CATEGORY_NAMES):
            return cls.default()
        return cls(tuple(f"class_{i}" for i in range(count)))

    @property
    def count(self) -> int:
        return len(self.names)

    def label(self, index: int) -> str:
        if not 0 <= index < len(self.names):
            raise InvariantViolation(f"category index {index} out of range [0, {len(self.names)})")
        return self.names[index]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise InvariantViolation(f"unknown category label {name!r}") from None

    def __len__(self) -> int:
        return len(self.names)


@dataclass(frozen=True, slots=True)
class BoundingBox:
    """Axis-aligned box: top-left corner (x, y) plus width/height, in pixels.

    Degenerate boxes (w <= 0 or h <= 0) are rejected at construction so that
    downstream area math never divides by zero.
    """

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InvariantViolation(f"box corner must be finite, got ({self.x}, {self.y})")
        if not (self.w > 0 and self.h > 0 and math.isfinite(self.w) and math.isfinite(self.h)):
            raise InvariantViolation(f"box size must be positive and finite, got ({self.w}, {self.h})")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes; 0.0 when disjoint."""
    ix = max(a.x, b.x)
    iy = max(a.y, b.y)
    iw = min(a.x + a.w, b.x + b.w) - ix
    if iw <= 0:
        return 0.0
    ih = min(a.y + a.h, b.y + b.h) - iy
    if ih <= 0:
        return 0.0
    # at large coordinates the edge subtraction can overshoot the narrower
    # box by an ulp, which would push self-IoU past 1
    inter = min(iw, a.w, b.w) * min(ih, a.h, b.h)
    return inter / (a.w * a.h + b.w * b.h - inter)


# Valid secondary/tertiary structure of the trigger-condition taxonomy.
# Secondary maps to the tuple of allowed tertiary labels, or None when no
# tertiary level exists under that branch.
SUBSET_TABLE: dict[str, dict[str, tuple[str, ...] | None]] = {
    "environment": {
        "rain": ("natural", "handcraft"),
        "snow": ("natural", "handcraft"),
        "particulate": ("natural", "handcraft"),
        "illumination": ("natural", "handcraft"),
    },
    "object": {
        "common": ("appearance", "posture"),
        "uncommon": None,
    },
}


@dataclass(frozen=True, slots=True)
class SubsetTag:
    """Hierarchical trigger-condition tag, e.g. environment/rain/natural.

    Only parent/child combinations present in SUBSET_TABLE are accepted;
    object/uncommon is the sole two-level branch.
    """

    primary: str
    secondary: str
    tertiary: str | None = None

    def __post_init__(self) -> None:
        branch = SUBSET_TABLE.get(self.primary)
        if branch is None:
            raise InvariantViolation(f"unknown primary subset {self.primary!r}")
        allowed_tertiary = branch.get(self.secondary, ...)
        if allowed_tertiary is ...:
            raise InvariantViolation(
                f"secondary subset {self.secondary!r} is not valid under {self.primary!r}"
            )
        if allowed_tertiary is None:
            if self.tertiary is not None:
                raise InvariantViolation(
                    f"{self.primary}/{self.secondary} does not take a tertiary subset"
                )
        elif self.tertiary not in allowed_tertiary:
            raise InvariantViolation(
                f"tertiary subset {self.tertiary!r} is not valid under "
                f"{self.primary}/{self.secondary}"
            )

    @classmethod
    def parse(cls, text: str) -> SubsetTag:
        parts = text.split("/")
        if len(parts) == 2:
            return cls(parts[0], parts[1])
        if len(parts) == 3:
            return cls(parts[0], parts[1], parts[2])
        raise InvariantViolation(f"subset tag {text!r} must have 2 or 3 levels")

    @property
    def path(self) -> str:
        if self.tertiary is None:
            return f"{self.primary}/{self.secondary}"
        return f"{self.primary}/{self.secondary}/{self.tertiary}"


@dataclass(frozen=True, slots=True)
class Detection:
    """One raw output of one ensemble member.

    class_probs holds independent per-class probabilities (no sum-to-one
    constraint). The winning label and the scalar score
    (objectness * max class prob) are precomputed because merging sorts and
    filters on them heavily.
    """

    box: BoundingBox
    class_probs: tuple[float, ...]
    objectness: float
    model_index: int
    source_order: int
    winning_label: int = field(init=False)
    score: float = field(init=False)

    def __post_init__(self) -> None:
        if not self.class_probs:
            raise InvariantViolation("class_probs must not be empty")
        best_c = 0
        best_p = -1.0
        for c, p in enumerate(self.class_probs):
            if not (math.isfinite(p) and 0.0 <= p <= 1.0):
                raise InvariantViolation(f"class probability {p} outside [0, 1]")
            if p > best_p:
                best_p = p
                best_c = c
        if not (math.isfinite(self.objectness) and 0.0 <= self.objectness <= 1.0):
            raise InvariantViolation(f"objectness {self.objectness} outside [0, 1]")
        if self.model_index < 0:
            raise InvariantViolation(f"model_index {self.model_index} must be non-negative")
        object.__setattr__(self, "class_probs", tuple(self.class_probs))
        object.__setattr__(self, "winning_label", best_c)
        object.__setattr__(self, "score", self.objectness * best_p)


@dataclass(frozen=True, slots=True)
class GroundTruthObject:
    """A labeled object: category index, box, and the binary hard flag."""

    category: int
    box: BoundingBox
    hard: int

    def __post_init__(self) -> None:
        if self.hard not in (0, 1):
            raise InvariantViolation(f"hard flag must be 0 or 1, got {self.hard}")
        if self.category < 0:
            raise InvariantViolation(f"category index {self.category} must be non-negative")


@dataclass(frozen=True, slots=True)
class Frame:
    """One annotated frame. The image itself is out of scope; only its size
    and identifier travel through the pipeline."""

    frame_id: str
    width: int
    height: int
    ground_truth: tuple[GroundTruthObject, ...]
    subset: SubsetTag | None = None

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise InvariantViolation(f"image size must be positive, got {self.width}x{self.height}")
        if not self.frame_id:
            raise InvariantViolation("frame_id must be non-empty")
        object.__setattr__(self, "ground_truth", tuple(self.ground_truth))
