"""Readers and writers for the annotation and detection file formats.

Three formats live here:

* Extended YOLO: one ``.txt`` per frame, one object per line with six
  whitespace-separated fields ``class_id x_center y_center width height hard``.
  The middle four are normalized to [0, 1]; ``hard`` is the appended binary
  difficulty flag, so plain YOLO tools can still read the first five fields.
* Extended COCO: standard COCO JSON where every annotation additionally
  carries ``"hard": 0|1``. Image entries may carry an optional ``"subset"``
  string so a manifest can be rebuilt from a single document; plain COCO
  consumers ignore both extras.
* Detection files: ``detections/model_<t>/<frame_id>.json``, a JSON array of
  ``{"bbox": [x, y, w, h], "objectness": f, "class_probs": [...]}`` records in
  absolute pixels, one file per (model, frame).

Writers are bit-stable: fixed field order and fixed 6-fractional-digit float
formatting, so golden files diff cleanly.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

from .errors import InvariantViolation, ParseError
from .types import BoundingBox, CategorySet, Detection, Frame, GroundTruthObject, SubsetTag


def _fmt6(value: float) -> str:
    return f"{value:.6f}"


# --- extended YOLO ---------------------------------------------------------

def parse_yolo_ext(
    text: str,
    image_width: int,
    image_height: int,
    categories: CategorySet,
    *,
    source: str = "<string>",
) -> list[GroundTruthObject]:
    """Parse one extended-YOLO annotation file into ground-truth objects.

    Boxes come out in absolute top-left pixel coordinates. Any malformed line
    raises ParseError carrying the 1-based line number.
    """
    objects: list[GroundTruthObject] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 6:
            raise ParseError(
                f"expected 6 fields (class x_c y_c w h hard), got {len(fields)}",
                source=source,
                line=lineno,
            )
        try:
            class_id = int(fields[0])
        except ValueError:
            raise ParseError(f"class_id {fields[0]!r} is not an integer", source=source, line=lineno)
        if not 0 <= class_id < categories.count:
            raise ParseError(
                f"class_id {class_id} outside [0, {categories.count})", source=source, line=lineno
            )
        try:
            coords = [float(f) for f in fields[1:5]]
        except ValueError:
            raise ParseError(f"non-numeric coordinate in {fields[1:5]}", source=source, line=lineno)
        for value in coords:
            if not (math.isfinite(value) and 0.0 <= value <= 1.0):
                raise ParseError(f"coordinate {value} outside [0, 1]", source=source, line=lineno)
        if fields[5] not in ("0", "1"):
            raise ParseError("f_h must be 0 or 1", source=source, line=lineno)
        hard = int(fields[5])
        x_c, y_c, w_n, h_n = coords
        try:
            box = BoundingBox(
                x=(x_c - w_n / 2.0) * image_width,
                y=(y_c - h_n / 2.0) * image_height,
                w=w_n * image_width,
                h=h_n * image_height,
            )
        except InvariantViolation as exc:
            raise ParseError(str(exc), source=source, line=lineno)
        objects.append(GroundTruthObject(category=class_id, box=box, hard=hard))
    return objects


def write_yolo_ext(
    objects: list[GroundTruthObject], image_width: int, image_height: int
) -> str:
    """Serialize ground-truth objects to extended-YOLO text (LF line endings)."""
    lines = []
    for obj in objects:
        box = obj.box
        x_c = (box.x + box.w / 2.0) / image_width
        y_c = (box.y + box.h / 2.0) / image_height
        lines.append(
            f"{obj.category} {_fmt6(x_c)} {_fmt6(y_c)} "
            f"{_fmt6(box.w / image_width)} {_fmt6(box.h / image_height)} {obj.hard}"
        )
    return "".join(line + "\n" for line in lines)


# --- extended COCO ---------------------------------------------------------

def parse_coco_ext(
    document: dict[str, Any] | str,
    categories: CategorySet,
    *,
    source: str = "<coco>",
) -> tuple[list[Frame], list[str]]:
    """Parse an extended-COCO document into frames plus collected warnings.

    Annotations without the "hard" attribute default to hard=0 and produce a
    warning record instead of an error. The document's category list must
    match the configured CategorySet exactly (same ids, same names).
    """
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}", source=source)
    if not isinstance(document, dict):
        raise ParseError("COCO document must be a JSON object", source=source)

    for key in ("images", "annotations", "categories"):
        if key not in document or not isinstance(document[key], list):
            raise ParseError(f"missing or non-array {key!r} section", source=source)

    doc_categories = document["categories"]
    if len(doc_categories) != categories.count:
        raise ParseError(
            f"document has {len(doc_categories)} categories, configured set has "
            f"{categories.count}; mixed taxonomies are an error",
            source=source,
        )
    for expected_id, entry in enumerate(doc_categories):
        if entry.get("id") != expected_id or entry.get("name") != categories.label(expected_id):
            raise ParseError(
                f"category entry {entry!r} does not match configured "
                f"(id={expected_id}, name={categories.label(expected_id)!r})",
                source=source,
            )

    frames_by_id: dict[int, dict[str, Any]] = {}
    for record_idx, image in enumerate(document["images"]):
        image_id = image.get("id")
        if image_id is None:
            raise ParseError("image entry missing id", source=source, line=record_idx)
        if image_id in frames_by_id:
            raise ParseError(f"duplicate image id {image_id}", source=source, line=record_idx)
        width = image.get("width")
        height = image.get("height")
        if not isinstance(width, int) or not isinstance(height, int) or width <= 0 or height <= 0:
            raise ParseError(
                f"image {image_id} has invalid size {width}x{height}", source=source, line=record_idx
            )
        subset = None
        if image.get("subset") is not None:
            try:
                subset = SubsetTag.parse(image["subset"])
            except InvariantViolation as exc:
                raise ParseError(str(exc), source=source, line=record_idx)
        frames_by_id[image_id] = {
            "frame_id": image.get("file_name") or str(image_id),
            "width": width,
            "height": height,
            "subset": subset,
            "objects": [],
        }

    warnings: list[str] = []
    for record_idx, ann in enumerate(document["annotations"]):
        image_id = ann.get("image_id")
        if image_id not in frames_by_id:
            raise ParseError(
                f"annotation references unknown image id {image_id}", source=source, line=record_idx
            )
        bbox = ann.get("bbox")
        if not (isinstance(bbox, list) and len(bbox) == 4):
            raise ParseError(f"annotation bbox must be [x, y, w, h], got {bbox!r}",
                             source=source, line=record_idx)
        category_id = ann.get("category_id")
        if not isinstance(category_id, int) or not 0 <= category_id < categories.count:
            raise ParseError(
                f"category_id {category_id!r} outside [0, {categories.count})",
                source=source,
                line=record_idx,
            )
        hard = ann.get("hard")
        if hard is None:
            frame_id = frames_by_id[image_id]["frame_id"]
            warnings.append(
                f"{source}: annotation {ann.get('id', record_idx)} on frame {frame_id} "
                f"has no 'hard' attribute; defaulting to 0"
            )
            hard = 0
        if hard not in (0, 1):
            raise ParseError(f"hard must be 0 or 1, got {hard!r}", source=source, line=record_idx)
        try:
            box = BoundingBox(x=float(bbox[0]), y=float(bbox[1]), w=float(bbox[2]), h=float(bbox[3]))
        except (InvariantViolation, TypeError, ValueError) as exc:
            raise ParseError(f"invalid bbox {bbox!r}: {exc}", source=source, line=record_idx)
        frames_by_id[image_id]["objects"].append(
            GroundTruthObject(category=category_id, box=box, hard=hard)
        )

    frames = [
        Frame(
            frame_id=data["frame_id"],
            width=data["width"],
            height=data["height"],
            ground_truth=tuple(data["objects"]),
            subset=data["subset"],
        )
        for _, data in sorted(frames_by_id.items())
    ]
    seen: set[str] = set()
    for frame in frames:
        if frame.frame_id in seen:
            raise ParseError(f"duplicate frame_id {frame.frame_id!r}", source=source)
        seen.add(frame.frame_id)
    return frames, warnings


def write_coco_ext(frames: list[Frame], categories: CategorySet) -> dict[str, Any]:
    """Build an extended-COCO document (JSON-ready dict, fixed key order)."""
    images = []
    annotations = []
    ann_id = 0
    for image_id, frame in enumerate(frames):
        entry: dict[str, Any] = {
            "id": image_id,
            "file_name": frame.frame_id,
            "width": frame.width,
            "height": frame.height,
        }
        if frame.subset is not None:
            entry["subset"] = frame.subset.path
        images.append(entry)
        for obj in frame.ground_truth:
            annotations.append(
                {
                    "id": ann_id,
                    "image_id": image_id,
                    "category_id": obj.category,
                    "bbox": [obj.box.x, obj.box.y, obj.box.w, obj.box.h],
                    "area": obj.box.area,
                    "iscrowd": 0,
                    "hard": obj.hard,
                }
            )
            ann_id += 1
    return {
        "images": images,
        "annotations": annotations,
        "categories": [{"id": i, "name": name} for i, name in enumerate(categories.names)],
    }


def dump_coco_json(document: dict[str, Any]) -> str:
    """Render a COCO document with stable formatting for clean diffs."""
    return json.dumps(document, indent=1) + "\n"


# --- per-model detection files ---------------------------------------------

def parse_detection_file(
    text: str,
    model_index: int,
    class_count: int,
    *,
    source: str = "<detections>",
) -> list[Detection]:
    """Parse one model's detections for one frame, preserving file order."""
    try:
        records = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}", source=source)
    if not isinstance(records, list):
        raise ParseError("detection file must be a JSON array", source=source)
    detections: list[Detection] = []
    for record_idx, record in enumerate(records):
        where = f"model {model_index}, record {record_idx}"
        bbox = record.get("bbox") if isinstance(record, dict) else None
        if not (isinstance(bbox, list) and len(bbox) == 4):
            raise ParseError(f"{where}: bbox must be [x, y, w, h]", source=source, line=record_idx)
        probs = record.get("class_probs")
        if not isinstance(probs, list):
            raise ParseError(f"{where}: missing class_probs", source=source, line=record_idx)
        if len(probs) != class_count:
            raise ParseError(
                f"{where}: class_probs length {len(probs)} != C={class_count}",
                source=source,
                line=record_idx,
            )
        objectness = record.get("objectness")
        try:
            detection = Detection(
                box=BoundingBox(x=float(bbox[0]), y=float(bbox[1]), w=float(bbox[2]), h=float(bbox[3])),
                class_probs=tuple(float(p) for p in probs),
                objectness=float(objectness),
                model_index=model_index,
                source_order=record_idx,
            )
        except (InvariantViolation, TypeError, ValueError) as exc:
            raise ParseError(f"{where}: {exc}", source=source, line=record_idx)
        detections.append(detection)
    return detections


def write_detection_file(detections: list[Detection]) -> str:
    """Serialize one model's detections for one frame (inverse of parsing)."""
    records = [
        {
            "bbox": [round(d.box.x, 6), round(d.box.y, 6), round(d.box.w, 6), round(d.box.h, 6)],
            "objectness": round(d.objectness, 6),
            "class_probs": [round(p, 6) for p in d.class_probs],
        }
        for d in detections
    ]
    return json.dumps(records, indent=1) + "\n"


class EnsembleDetections:
    """Per-model detection lists for one frame.

    A model with no file for the frame legitimately contributes an empty
    list; the ensemble size T is fixed regardless.
    """

    __slots__ = ("frame_id", "per_model", "t_count")

    def __init__(self, frame_id: str, per_model: list[list[Detection]]):
        self.frame_id = frame_id
        self.per_model = [list(m) for m in per_model]
        self.t_count = len(self.per_model)
        if self.t_count < 1:
            raise InvariantViolation("ensemble must have at least one model")
        for t, detections in enumerate(self.per_model):
            for det in detections:
                if det.model_index != t:
                    raise InvariantViolation(
                        f"detection with model_index {det.model_index} in slot {t}"
                    )


def model_dir_name(model_index: int) -> str:
    return f"model_{model_index}"


def load_frame_detections(
    detections_root: Path | str,
    frame_id: str,
    t_count: int,
    class_count: int,
) -> EnsembleDetections:
    """Load detections/model_<t>/<frame_id>.json for all t; absent files are
    empty lists."""
    root = Path(detections_root)
    per_model: list[list[Detection]] = []
    for t in range(t_count):
        path = root / model_dir_name(t) / f"{frame_id}.json"
        if not path.exists():
            per_model.append([])
            continue
        per_model.append(
            parse_detection_file(
                path.read_text(encoding="utf-8"), t, class_count, source=str(path)
            )
        )
    return EnsembleDetections(frame_id, per_model)
