"""Dataset manifest: ties frame ids to image geometry, subsets and labels.

The on-disk layout a manifest describes::

    dataset/
      manifest.json
      labels/<frame_id>.txt          extended YOLO, one file per frame
      detections/model_<t>/<frame_id>.json

manifest.json maps frame_id to ``{"image": {"width": W, "height": H},
"subset": "environment/rain/natural", "annotations": "labels/x.txt"}``.
``subset`` may be null for untagged frames. A dataset may instead ship a
single extended-COCO file, which carries the same information inline.
"""

from __future__ import annotations

import json
from collections import Counter
from pathlib import Path
from typing import Any

from .errors import InvariantViolation, ParseError
from .formats import parse_coco_ext, parse_yolo_ext
from .types import CategorySet, Frame, SubsetTag


class DatasetManifest:
    """Parsed manifest.json plus lazy access to the frames it names."""

    __slots__ = ("root", "entries")

    def __init__(self, root: Path, entries: dict[str, dict[str, Any]]):
        self.root = root
        self.entries = entries

    @property
    def frame_ids(self) -> list[str]:
        return sorted(self.entries)

    @classmethod
    def load(cls, path: Path | str) -> "DatasetManifest":
        path = Path(path)
        source = str(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ParseError(f"cannot read manifest: {exc}", source=source)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}", source=source)
        if not isinstance(raw, dict):
            raise ParseError("manifest must be a JSON object keyed by frame_id", source=source)
        entries: dict[str, dict[str, Any]] = {}
        for frame_id, entry in raw.items():
            if not isinstance(entry, dict):
                raise ParseError(f"frame {frame_id!r}: entry must be an object", source=source)
            image = entry.get("image")
            if not isinstance(image, dict):
                raise ParseError(f"frame {frame_id!r}: missing image section", source=source)
            width = image.get("width")
            height = image.get("height")
            if not isinstance(width, int) or not isinstance(height, int) or width <= 0 or height <= 0:
                raise ParseError(
                    f"frame {frame_id!r}: invalid image size {width}x{height}", source=source
                )
            subset_path = entry.get("subset")
            subset = None
            if subset_path is not None:
                try:
                    subset = SubsetTag.parse(subset_path)
                except InvariantViolation as exc:
                    raise ParseError(f"frame {frame_id!r}: {exc}", source=source)
            annotations = entry.get("annotations")
            if annotations is not None and not isinstance(annotations, str):
                raise ParseError(f"frame {frame_id!r}: annotations must be a path string",
                                 source=source)
            entries[frame_id] = {
                "width": width,
                "height": height,
                "subset": subset,
                "annotations": annotations,
            }
        return cls(path.parent, entries)

    def load_frame(self, frame_id: str, categories: CategorySet) -> Frame:
        if frame_id not in self.entries:
            raise ParseError(f"frame {frame_id!r} not in manifest", source=str(self.root))
        entry = self.entries[frame_id]
        objects = ()
        if entry["annotations"]:
            label_path = self.root / entry["annotations"]
            try:
                text = label_path.read_text(encoding="utf-8")
            except OSError as exc:
                raise ParseError(f"cannot read labels: {exc}", source=str(label_path))
            objects = tuple(
                parse_yolo_ext(
                    text, entry["width"], entry["height"], categories, source=str(label_path)
                )
            )
        return Frame(
            frame_id=frame_id,
            width=entry["width"],
            height=entry["height"],
            ground_truth=objects,
            subset=entry["subset"],
        )

    def load_frames(self, categories: CategorySet) -> list[Frame]:
        return [self.load_frame(frame_id, categories) for frame_id in self.frame_ids]


def write_manifest(frames: list[Frame], *, labels_dir: str = "labels") -> dict[str, Any]:
    """Build a manifest document for frames whose labels sit in labels_dir."""
    doc: dict[str, Any] = {}
    for frame in sorted(frames, key=lambda f: f.frame_id):
        doc[frame.frame_id] = {
            "image": {"width": frame.width, "height": frame.height},
            "subset": frame.subset.path if frame.subset is not None else None,
            "annotations": f"{labels_dir}/{frame.frame_id}.txt",
        }
    return doc


def load_dataset(path: Path | str, categories: CategorySet) -> tuple[list[Frame], list[str]]:
    """Load frames from either a manifest.json dataset or an extended-COCO file.

    Returns (frames sorted by frame_id, warnings). A directory is treated as
    a dataset root containing manifest.json; a .json file is sniffed: a COCO
    document has an "images" array, a manifest does not.
    """
    path = Path(path)
    if path.is_dir():
        manifest = DatasetManifest.load(path / "manifest.json")
        return manifest.load_frames(categories), []
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParseError(f"cannot read dataset: {exc}", source=str(path))
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}", source=str(path))
    if isinstance(raw, dict) and isinstance(raw.get("images"), list):
        frames, warnings = parse_coco_ext(raw, categories, source=str(path))
        return sorted(frames, key=lambda f: f.frame_id), warnings
    manifest = DatasetManifest.load(path)
    return manifest.load_frames(categories), []


def dataset_stats(frames: list[Frame]) -> dict[str, Any]:
    """Frame/object/difficulty counts overall and per subset group."""
    total_objects = 0
    hard_objects = 0
    per_subset: Counter[str] = Counter()
    per_subset_objects: Counter[str] = Counter()
    per_category: Counter[int] = Counter()
    untagged = 0
    for frame in frames:
        total_objects += len(frame.ground_truth)
        for obj in frame.ground_truth:
            hard_objects += obj.hard
            per_category[obj.category] += 1
        if frame.subset is None:
            untagged += 1
        else:
            per_subset[frame.subset.path] += 1
            per_subset_objects[frame.subset.path] += len(frame.ground_truth)
    return {
        "frames": len(frames),
        "objects": total_objects,
        "hard_objects": hard_objects,
        "easy_objects": total_objects - hard_objects,
        "untagged_frames": untagged,
        "subsets": {
            name: {"frames": per_subset[name], "objects": per_subset_objects[name]}
            for name in sorted(per_subset)
        },
        "categories": {str(c): per_category[c] for c in sorted(per_category)},
    }
