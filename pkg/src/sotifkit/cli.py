"""Command-line interface.

Subcommands cover the batch workflow end to end::

    sotifkit simulate --out data --frames 200 --seed 7
    sotifkit validate data
    sotifkit stats data
    sotifkit convert data --to coco --out data.json
    sotifkit merge data --detections data/detections --out out/merged
    sotifkit quantify out/merged --out out/entropy
    sotifkit evaluate data --detections data/detections --out out
    sotifkit sweep data --detections data/detections --out out
    sotifkit serve --port 8000

Exit codes: 0 success, 1 usage error, 2 input parse error, 3 invariant
violation (this includes a malformed SOTIFKIT_THREADS value). Errors print
one line to stderr shaped ``sotifkit: <kind>: <message>`` so wrappers can
match on the kind token.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .detmetrics import MetricConfig
from .entropy import FUSION_POLICIES, LOG_BASES, EntropyConfig
from .errors import InvariantViolation, ParseError
from .formats import dump_coco_json, write_coco_ext, write_yolo_ext
from .manifest import dataset_stats, load_dataset, write_manifest
from .merge import MergeConfig
from .pipeline import (
    ConfigBundle,
    default_threads,
    dump_entropy,
    evaluate_dataset,
    parse_merged_file,
    run_frames,
    sweep_csv,
    write_simulated_dataset,
)
from .protocol import SHOULD_WARN_POLICIES, ProtocolConfig
from .simulate import SimConfig
from .types import CategorySet


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage; the CLI reserves 2 for parse errors,
    so usage problems are rethrown and mapped to exit 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise _UsageError(message)


def _one_line(message: str) -> str:
    return " ".join(str(message).split())


def _add_category_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--categories",
        metavar="FILE",
        help="file with one category name per line (default: the built-in 11)",
    )
    parser.add_argument(
        "--class-count",
        type=int,
        metavar="N",
        help="use N generic category names instead of the built-in set",
    )


def _categories(args: argparse.Namespace) -> CategorySet:
    if args.categories and args.class_count:
        raise _UsageError("--categories and --class-count are mutually exclusive")
    if args.categories:
        path = Path(args.categories)
        try:
            names = [line.strip() for line in path.read_text(encoding="utf-8").splitlines()]
        except OSError as exc:
            raise ParseError(f"cannot read categories: {exc}", source=str(path))
        names = [n for n in names if n]
        if not names:
            raise ParseError("categories file is empty", source=str(path))
        return CategorySet(names=tuple(names))
    if args.class_count:
        return CategorySet.generic(args.class_count)
    return CategorySet.default()


def _add_merge_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--score-floor", type=float, default=0.25,
                        help="drop detections scoring below this (default 0.25)")
    parser.add_argument("--nms-iou", type=float, default=0.45,
                        help="per-model NMS IoU threshold (default 0.45)")
    parser.add_argument("--cluster-iou", type=float, default=0.5,
                        help="cross-model clustering IoU threshold (default 0.5)")
    parser.add_argument("--class-agnostic-nms", action="store_true",
                        help="suppress across labels during per-model NMS")


def _merge_config(args: argparse.Namespace) -> MergeConfig:
    return MergeConfig(
        score_floor=args.score_floor,
        nms_iou=args.nms_iou,
        cluster_iou=args.cluster_iou,
        class_agnostic_nms=args.class_agnostic_nms,
    )


def _add_entropy_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--models", type=int, default=5, metavar="T",
                        help="ensemble size T (default 5)")
    parser.add_argument("--penalty", type=float, default=0.1, metavar="F_P",
                        help="missing-vote penalty factor (default 0.1)")
    parser.add_argument("--theta", type=float, default=1.0, metavar="THETA_W",
                        help="warning threshold (default 1.0)")
    parser.add_argument("--log-base", choices=LOG_BASES, default="2",
                        help="entropy logarithm base (default 2)")
    parser.add_argument("--policy", choices=FUSION_POLICIES, default="zero-fill",
                        help="probability fusion policy (default zero-fill)")


def _entropy_config(args: argparse.Namespace, class_count: int) -> EntropyConfig:
    return EntropyConfig(
        class_count=class_count,
        ensemble_size=args.models,
        penalty=args.penalty,
        theta_w=args.theta,
        log_base=args.log_base,
        policy=args.policy,
    )


def _add_protocol_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--match-iou", type=float, default=0.5,
                        help="IoU for matching predictions to ground truth (default 0.5)")
    parser.add_argument("--should-warn", choices=SHOULD_WARN_POLICIES,
                        default="hard-or-inaccurate",
                        help="which rows count as needing a warning")


def _bundle(args: argparse.Namespace) -> ConfigBundle:
    categories = _categories(args)
    return ConfigBundle(
        categories=categories,
        merge=_merge_config(args),
        entropy=_entropy_config(args, categories.count),
        protocol=ProtocolConfig(match_iou=args.match_iou, should_warn=args.should_warn),
        detection=MetricConfig(),
    )


def _threads(args: argparse.Namespace) -> int:
    if args.threads is not None:
        if args.threads < 1:
            raise _UsageError("--threads must be >= 1")
        return args.threads
    return default_threads()


# --- subcommand bodies -------------------------------------------------------

def _cmd_convert(args: argparse.Namespace) -> int:
    categories = _categories(args)
    frames, warnings = load_dataset(args.dataset, categories)
    for warning in warnings:
        print(f"sotifkit: warning: {_one_line(warning)}", file=sys.stderr)
    out = Path(args.out)
    if args.to == "coco":
        document = write_coco_ext(frames, categories)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(dump_coco_json(document), encoding="utf-8")
    else:
        labels = out / "labels"
        labels.mkdir(parents=True, exist_ok=True)
        for frame in frames:
            (labels / f"{frame.frame_id}.txt").write_text(
                write_yolo_ext(list(frame.ground_truth), frame.width, frame.height),
                encoding="utf-8",
            )
        (out / "manifest.json").write_text(
            json.dumps(write_manifest(frames), indent=1) + "\n", encoding="utf-8"
        )
    print(f"converted {len(frames)} frames to {args.to}: {out}")
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    categories = _categories(args)
    frames, warnings = load_dataset(args.dataset, categories)
    for warning in warnings:
        print(f"sotifkit: warning: {_one_line(warning)}", file=sys.stderr)
    stats = dataset_stats(frames)
    print(
        f"ok: {stats['frames']} frames, {stats['objects']} objects "
        f"({stats['hard_objects']} hard), {len(warnings)} warnings"
    )
    return 0


def _cmd_stats(args: argparse.Namespace) -> int:
    categories = _categories(args)
    frames, _ = load_dataset(args.dataset, categories)
    print(json.dumps(dataset_stats(frames), indent=1))
    return 0


def _cmd_merge(args: argparse.Namespace) -> int:
    bundle = _bundle(args)
    frames, _ = load_dataset(args.dataset, bundle.categories)
    results = run_frames(frames, args.detections, bundle, threads=_threads(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for result in results:
        (out / f"{result.frame_id}.json").write_text(result.merged_json, encoding="utf-8")
    print(f"merged {len(results)} frames into {out}")
    return 0


def _cmd_quantify(args: argparse.Namespace) -> int:
    categories = _categories(args)
    config = _entropy_config(args, categories.count)
    merged_dir = Path(args.merged)
    if not merged_dir.is_dir():
        raise ParseError("merged input must be a directory of <frame_id>.json files",
                         source=str(merged_dir))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    from .entropy import quantify_frame

    count = 0
    for path in sorted(merged_dir.glob("*.json")):
        merged = parse_merged_file(path.read_text(encoding="utf-8"), source=str(path))
        quantified = quantify_frame(merged, config)
        (out / path.name).write_text(dump_entropy(quantified, config), encoding="utf-8")
        count += 1
    if count == 0:
        raise ParseError("no <frame_id>.json files found", source=str(merged_dir))
    print(f"quantified {count} frames into {out}")
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    bundle = _bundle(args)
    frames, warnings = load_dataset(args.dataset, bundle.categories)
    for warning in warnings:
        print(f"sotifkit: warning: {_one_line(warning)}", file=sys.stderr)
    report = evaluate_dataset(
        frames,
        args.detections,
        bundle,
        outdir=args.out,
        threads=_threads(args),
        write_intermediates=not args.no_intermediates,
    )
    total = report["groups"]["total"]["metrics"]
    print(
        f"evaluated {len(frames)} frames: acr={total['acr']:.3f} far={total['far']:.3f} "
        f"cqs={total['cqs']:.3f} uqs={total['uqs']}"
    )
    print(f"report written to {Path(args.out) / 'report.json'}")
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    if args.step <= 0:
        raise _UsageError("--step must be > 0")
    if args.stop < args.start:
        raise _UsageError("--stop must be >= --start")
    bundle = _bundle(args)
    frames, _ = load_dataset(args.dataset, bundle.categories)
    results = run_frames(frames, args.detections, bundle, threads=_threads(args))
    rows = [row for result in results for row in result.rows]
    from .plotting import render_sweep_svg
    from .protocol import sweep_thresholds

    sweep = sweep_thresholds(rows, bundle.protocol, start=args.start, stop=args.stop,
                             step=args.step)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(sweep_csv([m.to_json() for m in sweep]), encoding="utf-8")
    (out / "sweep.svg").write_text(render_sweep_svg(sweep), encoding="utf-8")
    print(f"swept {len(sweep)} thresholds into {out}")
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    if args.config:
        path = Path(args.config)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ParseError(f"cannot read config: {exc}", source=str(path))
        config = SimConfig.from_json(text, source=str(path))
        overrides: dict[str, Any] = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.frames is not None:
            overrides["frames"] = args.frames
        if overrides:
            doc = config.to_json()
            doc.update(overrides)
            config = SimConfig.from_json(json.dumps(doc), source="<overrides>")
    else:
        config = SimConfig(
            seed=args.seed if args.seed is not None else 0,
            frames=args.frames if args.frames is not None else 100,
        )
    stats = write_simulated_dataset(args.out, config)
    print(
        f"simulated {stats['frames']} frames ({stats['objects']} objects, "
        f"{stats['hard_objects']} hard) into {args.out}"
    )
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port, log_level="info")
    return 0


# --- parser ------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="sotifkit", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("convert", help="convert between the YOLO-style layout and COCO")
    p.add_argument("dataset", help="dataset directory, manifest.json or COCO file")
    p.add_argument("--to", choices=("coco", "yolo"), required=True)
    p.add_argument("--out", required=True, help="output file (coco) or directory (yolo)")
    _add_category_flags(p)
    p.set_defaults(func=_cmd_convert)

    p = sub.add_parser("validate", help="parse a dataset and report problems")
    p.add_argument("dataset")
    _add_category_flags(p)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("stats", help="print dataset statistics as JSON")
    p.add_argument("dataset")
    _add_category_flags(p)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("merge", help="fuse per-model detections into merged objects")
    p.add_argument("dataset")
    p.add_argument("--detections", required=True, help="root holding model_<t>/ directories")
    p.add_argument("--out", required=True, help="directory for merged/<frame_id>.json")
    p.add_argument("--threads", type=int, default=None)
    _add_category_flags(p)
    _add_merge_flags(p)
    _add_entropy_flags(p)
    _add_protocol_flags(p)
    p.set_defaults(func=_cmd_merge)

    p = sub.add_parser("quantify", help="score merged objects with fused entropy")
    p.add_argument("merged", help="directory of merged/<frame_id>.json files")
    p.add_argument("--out", required=True)
    _add_category_flags(p)
    _add_entropy_flags(p)
    p.set_defaults(func=_cmd_quantify)

    p = sub.add_parser("evaluate", help="run the full evaluation and write reports")
    p.add_argument("dataset")
    p.add_argument("--detections", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=None,
                   help="worker processes (default: SOTIFKIT_THREADS or 1)")
    p.add_argument("--no-intermediates", action="store_true",
                   help="skip writing merged/ and entropy/ files")
    _add_category_flags(p)
    _add_merge_flags(p)
    _add_entropy_flags(p)
    _add_protocol_flags(p)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("sweep", help="sweep the warning threshold and plot the curves")
    p.add_argument("dataset")
    p.add_argument("--detections", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--start", type=float, default=0.0)
    p.add_argument("--stop", type=float, default=3.0)
    p.add_argument("--step", type=float, default=0.1)
    p.add_argument("--threads", type=int, default=None)
    _add_category_flags(p)
    _add_merge_flags(p)
    _add_entropy_flags(p)
    _add_protocol_flags(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("simulate", help="generate a synthetic dataset with detections")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="simulator config JSON")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--frames", type=int, default=None)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            raise _UsageError("a subcommand is required (see --help)")
        return args.func(args)
    except _UsageError as exc:
        print(f"sotifkit: usage: {_one_line(str(exc))}", file=sys.stderr)
        return 1
    except ParseError as exc:
        print(f"sotifkit: parse-error: {_one_line(str(exc))}", file=sys.stderr)
        return 2
    except InvariantViolation as exc:
        print(f"sotifkit: invariant-violation: {_one_line(str(exc))}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
