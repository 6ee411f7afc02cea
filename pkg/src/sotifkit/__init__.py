"""Uncertainty quantification and warning evaluation for detector ensembles.

The package merges per-model detections into clustered objects, scores each
cluster with a summed binary-entropy uncertainty (penalized for models that
stayed silent), raises warnings above a threshold, and evaluates warning
quality against difficulty-annotated ground truth.
"""

__version__ = "0.1.0"

from .detmetrics import MetricConfig, interpolated_ap, summarize
from .entropy import (
    EntropyConfig,
    QuantifiedObject,
    binary_entropy,
    entropy_h,
    entropy_h_star,
    fuse_probabilities,
    quantify_frame,
    quantify_object,
)
from .errors import InvariantViolation, ParseError, SotifKitError
from .manifest import DatasetManifest, dataset_stats, load_dataset
from .merge import MergeConfig, MergedObject, bsas_excl, merge_frame, nms_per_model
from .pipeline import ConfigBundle, evaluate_dataset, process_frame, run_frames
from .protocol import (
    EvaluatedObject,
    Metrics,
    ProtocolConfig,
    compute_metrics,
    match_frame,
    partition_cells,
    sweep_thresholds,
)
from .simulate import SimConfig, SubsetSpec, generate
from .types import (
    BoundingBox,
    CategorySet,
    Detection,
    Frame,
    GroundTruthObject,
    SubsetTag,
    iou,
)

__all__ = [
    "BoundingBox",
    "CategorySet",
    "ConfigBundle",
    "DatasetManifest",
    "Detection",
    "EntropyConfig",
    "EvaluatedObject",
    "Frame",
    "GroundTruthObject",
    "InvariantViolation",
    "MergeConfig",
    "MergedObject",
    "MetricConfig",
    "Metrics",
    "ParseError",
    "ProtocolConfig",
    "QuantifiedObject",
    "SimConfig",
    "SotifKitError",
    "SubsetSpec",
    "SubsetTag",
    "binary_entropy",
    "bsas_excl",
    "compute_metrics",
    "dataset_stats",
    "entropy_h",
    "entropy_h_star",
    "evaluate_dataset",
    "fuse_probabilities",
    "generate",
    "interpolated_ap",
    "iou",
    "load_dataset",
    "match_frame",
    "merge_frame",
    "nms_per_model",
    "partition_cells",
    "process_frame",
    "quantify_frame",
    "quantify_object",
    "run_frames",
    "summarize",
    "sweep_thresholds",
]
