"""End-to-end orchestration: datasets in, reports out.

This module owns the batch data flow both the CLI and the service build on::

    dataset (manifest or COCO) + detections/model_<t>/
        -> per-frame merge -> merged/<frame_id>.json
        -> per-frame quantify -> entropy/<frame_id>.json
        -> protocol rows -> report.json, sweep.csv, metrics.csv

File conventions: merged and entropy files keep full float precision for the
uncertainty values (so chained stages reproduce in-memory results exactly)
while boxes and probabilities are rounded to six fractional digits like the
input formats. The CSVs and report metrics round to six digits. All floats,
orderings and key orders are fixed, so reruns are byte-identical.

Frames can be processed in parallel (`threads` > 1 uses a process pool);
results are aggregated in frame-id order regardless of worker scheduling, so
thread count never changes output bytes. SOTIFKIT_THREADS sets the default
worker count when the CLI flag is absent.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from csv import writer as csv_writer
from dataclasses import dataclass
from io import StringIO
from pathlib import Path
from typing import Any, Sequence

from .detmetrics import (
    MetricConfig,
    ScoredPrediction,
    predictions_from_quantified,
    summarize,
)
from .entropy import EntropyConfig, QuantifiedObject, quantify_frame
from .errors import InvariantViolation, ParseError
from .formats import load_frame_detections, write_detection_file, write_yolo_ext
from .manifest import write_manifest
from .merge import MergeConfig, MergedObject, merge_frame
from .protocol import (
    GROUP_NAMES,
    EvaluatedObject,
    ProtocolConfig,
    compute_metrics,
    group_frames,
    group_report,
    match_frame,
    sweep_grid,
)
from .simulate import SimConfig, generate
from .types import BoundingBox, CategorySet, Detection, Frame


def default_threads() -> int:
    """Worker count from SOTIFKIT_THREADS, defaulting to 1."""
    raw = os.environ.get("SOTIFKIT_THREADS")
    if raw is None or raw == "":
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise InvariantViolation(f"SOTIFKIT_THREADS must be a positive integer, got {raw!r}")
    if value < 1:
        raise InvariantViolation(f"SOTIFKIT_THREADS must be a positive integer, got {raw!r}")
    return value


@dataclass(frozen=True, slots=True)
class ConfigBundle:
    """Everything a run needs, validated for mutual consistency."""

    categories: CategorySet
    merge: MergeConfig
    entropy: EntropyConfig
    protocol: ProtocolConfig
    detection: MetricConfig

    def __post_init__(self) -> None:
        if self.categories.count != self.entropy.class_count:
            raise InvariantViolation(
                f"category set has {self.categories.count} names but entropy config "
                f"says class_count={self.entropy.class_count}"
            )

    @classmethod
    def default(cls) -> "ConfigBundle":
        return cls(
            categories=CategorySet.default(),
            merge=MergeConfig(),
            entropy=EntropyConfig(),
            protocol=ProtocolConfig(),
            detection=MetricConfig(),
        )

    def to_json(self) -> dict[str, Any]:
        return {
            "categories": list(self.categories.names),
            "merge": {
                "score_floor": self.merge.score_floor,
                "nms_iou": self.merge.nms_iou,
                "cluster_iou": self.merge.cluster_iou,
                "class_agnostic_nms": self.merge.class_agnostic_nms,
            },
            "entropy": self.entropy.to_header(),
            "protocol": {
                "match_iou": self.protocol.match_iou,
                "should_warn": self.protocol.should_warn,
            },
            "detection_metrics": {
                "primary_iou": self.detection.primary_iou,
                "iou_thresholds": list(self.detection.iou_thresholds),
                "max_detections": self.detection.max_detections,
                "recall_points": self.detection.recall_points,
            },
        }


# --- merged / entropy file round-trips --------------------------------------

def _round_box(box: BoundingBox) -> list[float]:
    return [round(box.x, 6), round(box.y, 6), round(box.w, 6), round(box.h, 6)]


def merged_record(obj: MergedObject) -> dict[str, Any]:
    return {
        "bbox": _round_box(obj.box),
        "label": obj.label,
        "d": obj.d,
        "members": [
            {
                "model": det.model_index,
                "bbox": _round_box(det.box),
                "objectness": round(det.objectness, 6),
                "class_probs": [round(p, 6) for p in det.class_probs],
            }
            for det in obj.members
        ],
    }


def parse_merged_file(text: str, *, source: str = "<merged>") -> list[MergedObject]:
    """Rebuild merged objects from a merged/<frame_id>.json document.

    Member source_order is not stored (clustering already happened); the
    position inside the members array stands in for it.
    """
    try:
        records = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}", source=source)
    if not isinstance(records, list):
        raise ParseError("merged file must be a JSON array", source=source)
    merged: list[MergedObject] = []
    for idx, record in enumerate(records):
        try:
            bbox = record["bbox"]
            members = tuple(
                Detection(
                    box=BoundingBox(x=m["bbox"][0], y=m["bbox"][1], w=m["bbox"][2], h=m["bbox"][3]),
                    class_probs=tuple(float(p) for p in m["class_probs"]),
                    objectness=float(m["objectness"]),
                    model_index=int(m["model"]),
                    source_order=order,
                )
                for order, m in enumerate(record["members"])
            )
            obj = MergedObject(
                box=BoundingBox(x=bbox[0], y=bbox[1], w=bbox[2], h=bbox[3]),
                label=int(record["label"]),
                members=members,
            )
        except (KeyError, IndexError, TypeError, ValueError, InvariantViolation) as exc:
            raise ParseError(f"record {idx}: {exc}", source=source, line=idx)
        if not obj.members:
            raise ParseError(f"record {idx}: empty members array", source=source, line=idx)
        if record.get("d") != len(obj.members):
            raise ParseError(
                f"record {idx}: d={record.get('d')} but {len(obj.members)} members",
                source=source,
                line=idx,
            )
        merged.append(obj)
    return merged


def dump_merged(merged: Sequence[MergedObject]) -> str:
    return json.dumps([merged_record(obj) for obj in merged], indent=1) + "\n"


def entropy_document(
    quantified: Sequence[QuantifiedObject], config: EntropyConfig
) -> dict[str, Any]:
    return {
        "header": config.to_header(),
        "objects": [
            {
                "bbox": _round_box(q.box),
                "label": q.label,
                "d": q.d,
                "fused_probs": [round(p, 6) for p in q.fused_probs],
                "h_star": q.h_star,
                "h": q.h,
                "warned": q.warned,
            }
            for q in quantified
        ],
    }


def dump_entropy(quantified: Sequence[QuantifiedObject], config: EntropyConfig) -> str:
    return json.dumps(entropy_document(quantified, config), indent=1) + "\n"


def parse_entropy_file(
    text: str, *, source: str = "<entropy>"
) -> tuple[EntropyConfig, list[QuantifiedObject]]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}", source=source)
    if not isinstance(doc, dict) or "header" not in doc or "objects" not in doc:
        raise ParseError("entropy file needs 'header' and 'objects'", source=source)
    try:
        config = EntropyConfig.from_header(doc["header"])
    except InvariantViolation as exc:
        raise ParseError(str(exc), source=source)
    objects: list[QuantifiedObject] = []
    for idx, record in enumerate(doc["objects"]):
        try:
            bbox = record["bbox"]
            objects.append(
                QuantifiedObject(
                    box=BoundingBox(x=bbox[0], y=bbox[1], w=bbox[2], h=bbox[3]),
                    label=int(record["label"]),
                    fused_probs=tuple(float(p) for p in record["fused_probs"]),
                    d=int(record["d"]),
                    h_star=float(record["h_star"]),
                    h=float(record["h"]),
                    warned=bool(record["warned"]),
                )
            )
        except (KeyError, IndexError, TypeError, ValueError, InvariantViolation) as exc:
            raise ParseError(f"object {idx}: {exc}", source=source, line=idx)
    return config, objects


# --- per-frame processing ----------------------------------------------------

@dataclass(frozen=True, slots=True)
class FrameResult:
    frame_id: str
    merged_json: str
    entropy_json: str
    rows: tuple[EvaluatedObject, ...]
    predictions: tuple[ScoredPrediction, ...]


def process_frame(
    frame: Frame,
    per_model: Sequence[Sequence[Detection]],
    bundle: ConfigBundle,
) -> tuple[list[MergedObject], list[QuantifiedObject], list[EvaluatedObject]]:
    """The online path: merge, quantify and match a single frame in memory."""
    merged = merge_frame(per_model, bundle.merge)
    quantified = quantify_frame(merged, bundle.entropy)
    rows = match_frame(frame, quantified, bundle.protocol)
    return merged, quantified, rows


def _frame_task(args: tuple[Frame, str, ConfigBundle]) -> FrameResult:
    frame, detections_root, bundle = args
    ensemble = load_frame_detections(
        detections_root, frame.frame_id, bundle.entropy.ensemble_size, bundle.entropy.class_count
    )
    merged, quantified, rows = process_frame(frame, ensemble.per_model, bundle)
    return FrameResult(
        frame_id=frame.frame_id,
        merged_json=dump_merged(merged),
        entropy_json=dump_entropy(quantified, bundle.entropy),
        rows=tuple(rows),
        predictions=tuple(predictions_from_quantified(frame.frame_id, quantified)),
    )


def run_frames(
    frames: Sequence[Frame],
    detections_root: Path | str,
    bundle: ConfigBundle,
    *,
    threads: int = 1,
) -> list[FrameResult]:
    """Process every frame, in frame-id order, optionally with worker
    processes. Aggregation order is pinned to the input order, so the thread
    count cannot change results."""
    if threads < 1:
        raise InvariantViolation(f"threads must be >= 1, got {threads}")
    ordered = sorted(frames, key=lambda f: f.frame_id)
    tasks = [(frame, str(detections_root), bundle) for frame in ordered]
    if threads == 1 or len(tasks) < 2:
        return [_frame_task(task) for task in tasks]
    chunk = max(1, len(tasks) // (threads * 4))
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_frame_task, tasks, chunksize=chunk))


# --- report assembly ---------------------------------------------------------

def _fmt6(value: float) -> str:
    return f"{value:.6f}"


def _round_metrics(doc: dict[str, Any]) -> dict[str, Any]:
    for key in ("theta_w", "acr", "far", "cqs"):
        doc[key] = round(doc[key], 6)
    if doc["uqs"] != "inf":
        doc["uqs"] = round(doc["uqs"], 6)
    return doc


def _detection_block(summary: dict[str, Any], categories: CategorySet) -> dict[str, Any]:
    return {
        "per_category": [
            {
                "category": categories.label(m.category),
                "gt_count": m.gt_count,
                "ap50": round(m.ap50, 6),
                "ar50": round(m.ar50, 6),
                "ap5095": round(m.ap5095, 6),
            }
            for m in summary["per_category"]
        ],
        "mean": {key: round(value, 6) for key, value in summary["mean"].items()},
        "excluded_categories": [categories.label(c) for c in summary["excluded_categories"]],
    }


def build_report(
    frames: Sequence[Frame],
    results: Sequence[FrameResult],
    bundle: ConfigBundle,
    *,
    sweep_start: float = 0.0,
    sweep_stop: float = 3.0,
    sweep_step: float = 0.1,
) -> dict[str, Any]:
    """The full report document: config, per-group results, total sweep."""
    rows_by_frame = {r.frame_id: r.rows for r in results}
    preds_by_frame = {r.frame_id: r.predictions for r in results}
    membership = group_frames(frames)
    frames_by_id = {f.frame_id: f for f in frames}

    groups: dict[str, Any] = {}
    total_rows: list[EvaluatedObject] = []
    for name in GROUP_NAMES:
        frame_ids = membership[name]
        g_rows: list[EvaluatedObject] = []
        g_preds: list[ScoredPrediction] = []
        for frame_id in frame_ids:
            g_rows.extend(rows_by_frame.get(frame_id, ()))
            g_preds.extend(preds_by_frame.get(frame_id, ()))
        if name == "total":
            total_rows = g_rows
        g_frames = [frames_by_id[fid] for fid in frame_ids]
        report = group_report(g_rows, bundle.entropy.theta_w, bundle.protocol)
        report["frames"] = len(frame_ids)
        report["metrics"] = _round_metrics(report["metrics"])
        report["detection"] = _detection_block(
            summarize(g_frames, g_preds, bundle.categories, bundle.detection), bundle.categories
        )
        groups[name] = report

    sweep = [
        _round_metrics(compute_metrics(total_rows, theta, bundle.protocol).to_json())
        for theta in sweep_grid(sweep_start, sweep_stop, sweep_step)
    ]
    return {"config": bundle.to_json(), "groups": groups, "sweep": sweep}


def sweep_csv(sweep_rows: Sequence[dict[str, Any]]) -> str:
    """CSV for the threshold sweep: theta_w,acr,far,cqs,uqs at 6 decimals."""
    out = StringIO()
    w = csv_writer(out, lineterminator="\n")
    w.writerow(["theta_w", "acr", "far", "cqs", "uqs"])
    for row in sweep_rows:
        uqs = row["uqs"]
        w.writerow(
            [
                _fmt6(row["theta_w"]),
                _fmt6(row["acr"]),
                _fmt6(row["far"]),
                _fmt6(row["cqs"]),
                "inf" if uqs == "inf" else _fmt6(uqs),
            ]
        )
    return out.getvalue()


def metrics_csv(report: dict[str, Any]) -> str:
    """CSV of detection metrics: one row per group and category, plus a mean
    row per group. Categories without ground truth are omitted here and
    listed in the report's excluded_categories."""
    out = StringIO()
    w = csv_writer(out, lineterminator="\n")
    w.writerow(["group", "category", "ap50", "ar50", "ap5095"])
    for name in GROUP_NAMES:
        block = report["groups"][name]["detection"]
        for row in block["per_category"]:
            w.writerow(
                [name, row["category"], _fmt6(row["ap50"]), _fmt6(row["ar50"]),
                 _fmt6(row["ap5095"])]
            )
        mean = block["mean"]
        w.writerow(
            [name, "mean", _fmt6(mean["ap50"]), _fmt6(mean["ar50"]), _fmt6(mean["ap5095"])]
        )
    return out.getvalue()


def dump_report(report: dict[str, Any]) -> str:
    return json.dumps(report, indent=1) + "\n"


def write_frame_outputs(outdir: Path, results: Sequence[FrameResult]) -> None:
    merged_dir = outdir / "merged"
    entropy_dir = outdir / "entropy"
    merged_dir.mkdir(parents=True, exist_ok=True)
    entropy_dir.mkdir(parents=True, exist_ok=True)
    for result in results:
        (merged_dir / f"{result.frame_id}.json").write_text(result.merged_json, encoding="utf-8")
        (entropy_dir / f"{result.frame_id}.json").write_text(result.entropy_json, encoding="utf-8")


def evaluate_dataset(
    frames: Sequence[Frame],
    detections_root: Path | str,
    bundle: ConfigBundle,
    *,
    outdir: Path | str | None = None,
    threads: int = 1,
    write_intermediates: bool = True,
) -> dict[str, Any]:
    """Run the whole chain and, when outdir is given, write all artifacts."""
    results = run_frames(frames, detections_root, bundle, threads=threads)
    report = build_report(frames, results, bundle)
    if outdir is not None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        if write_intermediates:
            write_frame_outputs(outdir, results)
        (outdir / "report.json").write_text(dump_report(report), encoding="utf-8")
        (outdir / "sweep.csv").write_text(sweep_csv(report["sweep"]), encoding="utf-8")
        (outdir / "metrics.csv").write_text(metrics_csv(report), encoding="utf-8")
    return report


# --- simulator output --------------------------------------------------------

def write_simulated_dataset(outdir: Path | str, config: SimConfig) -> dict[str, Any]:
    """Generate a dataset and write the manifest layout; returns its stats."""
    outdir = Path(outdir)
    labels_dir = outdir / "labels"
    labels_dir.mkdir(parents=True, exist_ok=True)
    simulated = generate(config)
    frames = [s.frame for s in simulated]
    for sim in simulated:
        frame = sim.frame
        (labels_dir / f"{frame.frame_id}.txt").write_text(
            write_yolo_ext(list(frame.ground_truth), frame.width, frame.height),
            encoding="utf-8",
        )
        for t, detections in enumerate(sim.per_model):
            model_dir = outdir / "detections" / f"model_{t}"
            model_dir.mkdir(parents=True, exist_ok=True)
            (model_dir / f"{frame.frame_id}.json").write_text(
                write_detection_file(list(detections)), encoding="utf-8"
            )
    manifest = write_manifest(frames)
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    (outdir / "sim_config.json").write_text(
        json.dumps(config.to_json(), indent=1) + "\n", encoding="utf-8"
    )
    from .manifest import dataset_stats

    return dataset_stats(frames)
