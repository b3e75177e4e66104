"""Command-line interface.

Subcommands cover the full flow: synthesize data, extract descriptors,
build graphs, train, relabel detections, evaluate, and run experiment
manifests. Machine-readable results go to stdout, human-readable tables and
logs to stderr. Exit codes: 0 success, 1 usage error, 2 missing or
malformed data. The BOXGRAPH_LOG environment variable sets the log level;
BOXGRAPH_BACKEND selects the kernel backend.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .datasets import (
    ARTIFACT_SETS,
    ClassVocabulary,
    DatasetError,
    FULL_VOCABULARY,
    load_dataset,
    save_detections,
    select_artifact_set,
)
from .graphs import (
    CRITERIA,
    CRITERION_IDS,
    GraphConfig,
    degree_stats,
    load_graph,
    save_graph,
)
from .hog import HogConfig, extract_features, read_feature_cache, write_feature_cache
from .metrics import evaluate_polyp_boxes
from .pipeline import (
    DEFAULT_ARTIFACT_THRESHOLD,
    DEFAULT_POLYP_THRESHOLD,
    build_detection_graph,
    gt_polyp_boxes,
    infer_pipeline,
    load_prediction_boxes,
    merge_for_inference,
    merge_for_training,
    rekey_features,
    run_experiment,
    save_relabeled,
)
from .sage import (
    TrainConfig,
    load_model,
    save_model,
    train,
    write_trace_csv,
)
from .synthetic import (
    generate_dataset,
    noise_config_from_dict,
    scene_config_from_dict,
    simulate_detector,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

_ID_TO_CRITERION = {str(v): k for k, v in CRITERION_IDS.items()}
_SCOPE_ALIASES = {
    "dataset_level": "dataset_level",
    "dataset-level": "dataset_level",
    "dl": "dataset_level",
    "video_level": "video_level",
    "video-level": "video_level",
    "vl": "video_level",
}


class CliParser(argparse.ArgumentParser):
    """Argument parser that exits with code 1 on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _setup_logging() -> None:
    name = os.environ.get("BOXGRAPH_LOG", "WARNING").strip().upper()
    level = getattr(logging, name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(
        level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )


def _criteria_type(value) -> frozenset[str]:
    """Parse a criteria list: names or numeric ids, comma or plus separated."""
    if isinstance(value, (list, tuple, frozenset, set)):
        tokens = [str(t) for t in value]
    else:
        tokens = [t for t in str(value).replace("+", ",").split(",") if t.strip()]
    out = set()
    for token in tokens:
        t = token.strip().lower().replace("-", "_")
        if t in _ID_TO_CRITERION:
            t = _ID_TO_CRITERION[t]
        if t not in CRITERIA:
            raise argparse.ArgumentTypeError(
                f"unknown criterion {token!r}; use "
                f"{', '.join(CRITERIA)} or ids 1-4"
            )
        out.add(t)
    if not out:
        raise argparse.ArgumentTypeError("criteria must not be empty")
    return frozenset(out)


def _scope_type(value: str) -> str:
    key = str(value).strip().lower()
    if key not in _SCOPE_ALIASES:
        raise argparse.ArgumentTypeError(
            f"unknown scope {value!r}; use dataset-level (dl) or video-level (vl)"
        )
    return _SCOPE_ALIASES[key]


def _sizes_type(value) -> tuple[int, int]:
    if isinstance(value, (list, tuple)):
        parts = list(value)
    else:
        parts = str(value).split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("sample sizes must be two integers: S1,S2")
    try:
        s1, s2 = int(parts[0]), int(parts[1])
    except ValueError:
        raise argparse.ArgumentTypeError("sample sizes must be integers") from None
    if s1 < 1 or s2 < 1:
        raise argparse.ArgumentTypeError("sample sizes must be positive")
    return s1, s2


def _vocabulary_type(value: str) -> str:
    key = str(value).strip().lower()
    if key != "full" and key not in ARTIFACT_SETS:
        raise argparse.ArgumentTypeError(
            f"unknown vocabulary {value!r}; use full or one of {sorted(ARTIFACT_SETS)}"
        )
    return key


def _select_vocabulary(name: str) -> ClassVocabulary:
    return FULL_VOCABULARY if name == "full" else select_artifact_set(name)


def _threshold_type(value: str) -> float:
    try:
        v = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {value!r}") from None
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError("thresholds must lie in [0, 1]")
    return v


def _write_sidecar(out_path: str | Path, argv: list[str]) -> None:
    meta = {
        "tool": "boxgraph",
        "version": __version__,
        "backend": kernels.active_backend(),
        "command": argv,
    }
    with open(f"{out_path}.meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _emit_json(payload: dict) -> None:
    json.dump(payload, sys.stdout, sort_keys=True, indent=2)
    sys.stdout.write("\n")


_TABLE_COLUMNS = (
    ("model", "model"),
    ("art", "art_class"),
    ("cc", "cc"),
    ("ifc", "ifc"),
    ("class", "class_mode"),
    ("TP", "tp"),
    ("FP", "fp"),
    ("FN", "fn"),
    ("P", "precision"),
    ("R", "recall"),
    ("F1", "f1"),
    ("F2", "f2"),
)


def _format_cell(row: dict, key: str) -> str:
    if "error" in row and key not in ("model",):
        return "!" if key == "cc" else "-"
    value = row.get(key, "-")
    if isinstance(value, float):
        return f"{value:.3f}"
    return str(value)


def _format_table(rows: list[dict]) -> str:
    grid = [[header for header, _ in _TABLE_COLUMNS]]
    for row in rows:
        grid.append([_format_cell(row, key) for _, key in _TABLE_COLUMNS])
    widths = [max(len(line[c]) for line in grid) for c in range(len(_TABLE_COLUMNS))]
    lines = []
    for r, line in enumerate(grid):
        lines.append("  ".join(cell.ljust(widths[c]) for c, cell in enumerate(line)).rstrip())
        if r == 0:
            lines.append("  ".join("-" * widths[c] for c in range(len(widths))))
    errors = [row for row in rows if "error" in row]
    for row in errors:
        lines.append(f"{row.get('model', '?')}: ERROR {row['error']}")
    return "\n".join(lines)


def _metrics_csv(path: str | Path, rows: list[dict]) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([key for _, key in _TABLE_COLUMNS])
        for row in rows:
            writer.writerow([row.get(key, "") for _, key in _TABLE_COLUMNS])


def _load_merged(args, vocabulary: ClassVocabulary):
    """Load and merge detection inputs per the common CLI flags."""
    detections = load_dataset(args.frames, args.detections)
    if getattr(args, "gt_detections", None):
        gt = load_dataset(args.frames, args.gt_detections)
        return merge_for_training(
            gt, detections, vocabulary, args.polyp_threshold, args.artifact_threshold
        )
    return merge_for_inference(
        detections, detections, vocabulary, args.polyp_threshold, args.artifact_threshold
    )


def _graph_config(args) -> GraphConfig:
    return GraphConfig(
        criteria=args.criteria,
        iou_threshold=args.iou_threshold,
        random_p=args.random_p,
        inter_frame_scope=args.scope,
        rng_seed=args.graph_seed,
    )


def cmd_gen_synthetic(args) -> int:
    scene_data = {}
    if args.scene_config:
        with open(args.scene_config, "r", encoding="utf-8") as fh:
            scene_data = json.load(fh)
    for key, value in (
        ("video_count", args.videos),
        ("frames_per_video", args.frames_per_video),
        ("image_size", args.image_size),
        ("rng_seed", args.seed),
    ):
        if value is not None:
            scene_data[key] = value
    scene = scene_config_from_dict(scene_data)
    out = Path(args.out)
    dataset, frames_path, gt_path = generate_dataset(scene, out)
    payload = {
        "frames": str(frames_path),
        "gt_detections": str(gt_path),
        "frame_count": len(dataset.frames),
        "detection_count": dataset.num_detections,
    }
    if args.noise_config:
        with open(args.noise_config, "r", encoding="utf-8") as fh:
            noise = noise_config_from_dict(json.load(fh))
        detected = simulate_detector(dataset, noise)
        det_path = out / "detections.jsonl"
        save_detections(det_path, detected)
        payload["detections"] = str(det_path)
        payload["simulated_count"] = detected.num_detections
    _write_sidecar(out / "dataset", args._argv)
    _emit_json(payload)
    return EXIT_OK


def cmd_extract_features(args) -> int:
    vocabulary = _select_vocabulary(args.vocabulary)
    merged, keys = _load_merged(args, vocabulary)
    features = extract_features(merged, args.image_root, HogConfig(), threads=args.threads)
    features = rekey_features(features, keys)
    if not features:
        raise DatasetError("no detections passed the filters; nothing to extract")
    write_feature_cache(args.out, features)
    dim = len(next(iter(features.values())))
    _write_sidecar(args.out, args._argv)
    _emit_json({"cache": str(args.out), "descriptors": len(features), "dim": dim})
    return EXIT_OK


def cmd_build_graph(args) -> int:
    vocabulary = _select_vocabulary(args.vocabulary)
    merged, keys = _load_merged(args, vocabulary)
    config = _graph_config(args)
    features = read_feature_cache(args.feature_cache) if args.feature_cache else None
    graph = build_detection_graph(merged, vocabulary, config, features, keys)
    save_graph(args.out, graph, vocabulary)
    stats = degree_stats(graph)
    _write_sidecar(args.out, args._argv)
    code = "+".join(
        str(CRITERION_IDS[c]) for c in sorted(config.criteria, key=CRITERION_IDS.get)
    )
    _emit_json(
        {
            "graph": str(args.out),
            "criteria": code,
            "nodes": stats.num_nodes,
            "edges": stats.num_edges,
            "min_degree": stats.min_degree,
            "max_degree": stats.max_degree,
            "mean_degree": round(stats.mean_degree, 6),
            "isolated": stats.isolated_count,
        }
    )
    return EXIT_OK


def cmd_train(args) -> int:
    features = read_feature_cache(args.feature_cache)
    graph, vocabulary = load_graph(args.graph, features=features)
    config = TrainConfig(
        hidden_width=args.hidden_width,
        sample_sizes=args.sample_sizes,
        batch_size=args.batch_size,
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        rng_seed=args.seed,
        class_mode=args.class_mode,
    )
    labels = np.array([node.class_index for node in graph.nodes], dtype=np.int64)
    model, trace = train(graph, labels, config, vocabulary)
    save_model(args.out, model)
    if args.trace_csv:
        write_trace_csv(args.trace_csv, trace)
    _write_sidecar(args.out, args._argv)
    last = trace[-1]
    _emit_json(
        {
            "model": str(args.out),
            "epochs": len(trace),
            "final_loss": round(last.loss, 6),
            "final_accuracy": round(last.accuracy, 6),
            "classes": list(model.labels),
        }
    )
    return EXIT_OK


def cmd_infer(args) -> int:
    model = load_model(args.model)
    if model.class_mode == "multiclass":
        vocabulary = ClassVocabulary(tuple(model.labels))
        if args.vocabulary is not None:
            chosen = _select_vocabulary(args.vocabulary)
            if chosen.labels != vocabulary.labels:
                raise DatasetError(
                    f"--vocabulary {args.vocabulary} does not match the model's classes"
                )
    else:
        vocabulary = _select_vocabulary(args.vocabulary or "art1")
    dataset = load_dataset(args.frames, args.detections)
    merged, keys = merge_for_inference(
        dataset, dataset, vocabulary, args.polyp_threshold, args.artifact_threshold
    )
    features = None
    if args.feature_cache:
        features = read_feature_cache(args.feature_cache)
    elif not args.image_root:
        raise DatasetError("either --feature-cache or --image-root is required")
    result = infer_pipeline(
        model,
        merged,
        args.image_root or ".",
        _graph_config(args),
        vocabulary,
        features=features,
        keys=keys if features is not None else None,
        threads=args.threads,
        seed=args.seed,
    )
    save_relabeled(args.out, result.rows)
    if args.graph_out:
        save_graph(args.graph_out, result.graph, vocabulary)
    _write_sidecar(args.out, args._argv)
    polyp_count = sum(len(b) for b in result.polyp_boxes.values())
    payload = {
        "out": str(args.out),
        "detections": len(result.rows),
        "polyps": polyp_count,
    }
    if args.gt_detections:
        gt = load_dataset(args.frames, args.gt_detections)
        metrics = evaluate_polyp_boxes(result.polyp_boxes, gt_polyp_boxes(gt))
        payload["metrics"] = metrics.to_dict()
        print(_format_table([{"model": "infer", **metrics.to_dict()}]), file=sys.stderr)
    _emit_json(payload)
    return EXIT_OK


def cmd_eval(args) -> int:
    predictions = load_prediction_boxes(args.predictions, args.polyp_threshold)
    gt = load_dataset(args.frames, args.ground_truth)
    metrics = evaluate_polyp_boxes(predictions, gt_polyp_boxes(gt))
    row = {"model": "eval", **metrics.to_dict()}
    if args.csv:
        _metrics_csv(args.csv, [row])
    print(_format_table([row]), file=sys.stderr)
    _emit_json(metrics.to_dict())
    return EXIT_OK


def cmd_run_experiment(args) -> int:
    with open(args.manifest, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    base_dir = Path(args.manifest).parent
    report = run_experiment(manifest, base_dir=base_dir, threads=args.threads)
    rows = [report["baseline"], *report["rows"]]
    if args.csv:
        _metrics_csv(args.csv, rows)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(report, fh, sort_keys=True, indent=2)
            fh.write("\n")
        _write_sidecar(args.out, args._argv)
    print(_format_table(rows), file=sys.stderr)
    _emit_json(report)
    failed = [row for row in report["rows"] if "error" in row]
    return EXIT_DATA if failed else EXIT_OK


def _add_threshold_flags(p: CliParser) -> None:
    p.add_argument(
        "--polyp-threshold",
        type=_threshold_type,
        default=DEFAULT_POLYP_THRESHOLD,
        help="minimum score for polyp detections (default %(default)s)",
    )
    p.add_argument(
        "--artifact-threshold",
        type=_threshold_type,
        default=DEFAULT_ARTIFACT_THRESHOLD,
        help="minimum score for artifact detections (default %(default)s)",
    )


def _add_graph_flags(p: CliParser) -> None:
    p.add_argument(
        "--criteria",
        type=_criteria_type,
        default=frozenset(("overlap", "binary")),
        help=(
            "edge criteria, comma-separated names or numeric ids: "
            "random (1), overlap (2), same-class (3), binary (4); "
            "default overlap,binary"
        ),
    )
    p.add_argument(
        "--iou-threshold",
        type=_threshold_type,
        default=0.5,
        help="overlap criterion threshold (default %(default)s)",
    )
    p.add_argument(
        "--random-p",
        type=_threshold_type,
        default=0.5,
        help="random criterion edge probability (default %(default)s)",
    )
    p.add_argument(
        "--scope",
        type=_scope_type,
        default="dataset_level",
        help="cross-frame scope: dataset-level (dl) or video-level (vl)",
    )
    p.add_argument(
        "--graph-seed",
        type=int,
        default=0,
        help="seed for the random edge criterion (default %(default)s)",
    )


def _add_data_flags(p: CliParser, with_gt: bool = True) -> None:
    p.add_argument("--frames", required=True, help="frames JSONL file")
    p.add_argument("--detections", required=True, help="detections JSONL file")
    if with_gt:
        p.add_argument(
            "--gt-detections",
            default=None,
            help=(
                "ground-truth detections JSONL; when given, nodes combine "
                "ground-truth polyps with filtered artifact detections "
                "(training layout) instead of using --detections alone"
            ),
        )
    p.add_argument(
        "--vocabulary",
        type=_vocabulary_type,
        default="full",
        help="class vocabulary: full, art1, art2, or art3 (default %(default)s)",
    )
    _add_threshold_flags(p)


def _build_parser() -> CliParser:
    parser = CliParser(
        prog="boxgraph",
        description=(
            "Graph-based post-processing for endoscopic object detections: "
            "build graphs over boxes, train a node classifier, and relabel "
            "detections to suppress false positives."
        ),
    )
    parser.add_argument("--version", action="version", version=f"boxgraph {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser(
        "gen-synthetic",
        help="render a synthetic dataset (and optionally simulate a detector)",
        description=(
            "Render synthetic frames with ground-truth boxes. With "
            "--noise-config, also derive detector-style detections."
        ),
    )
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--videos", type=int, default=None, help="number of videos")
    p.add_argument("--frames-per-video", type=int, default=None)
    p.add_argument("--image-size", type=int, default=None)
    p.add_argument("--seed", type=int, default=None, help="scene rng seed")
    p.add_argument("--scene-config", default=None, help="scene config JSON file")
    p.add_argument("--noise-config", default=None, help="detector noise JSON file")
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser(
        "extract-features",
        help="compute box descriptors into a feature cache",
        description=(
            "Crop, resample, and describe every detection that passes the "
            "filters; write a binary feature cache keyed by detection."
        ),
    )
    _add_data_flags(p)
    p.add_argument("--image-root", required=True, help="directory for image paths")
    p.add_argument("--out", required=True, help="output feature cache file")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_extract_features)

    p = sub.add_parser(
        "build-graph",
        help="build a detection graph file",
        description=(
            "Filter detections, create nodes, and connect them under the "
            "configured criteria. Apply the same data flags used for "
            "extract-features so cache keys line up."
        ),
    )
    _add_data_flags(p)
    _add_graph_flags(p)
    p.add_argument("--feature-cache", default=None, help="validate against this cache")
    p.add_argument("--out", required=True, help="output graph file")
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser(
        "train",
        help="train a node classifier from a graph and feature cache",
    )
    p.add_argument("--graph", required=True, help="graph file from build-graph")
    p.add_argument("--feature-cache", required=True, help="feature cache file")
    p.add_argument("--out", required=True, help="output model file")
    p.add_argument("--hidden-width", type=int, default=128)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument(
        "--sample-sizes",
        type=_sizes_type,
        default=(10, 25),
        help="neighbors sampled per layer as S1,S2 (default 10,25)",
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--class-mode",
        choices=("multiclass", "binary"),
        default="multiclass",
        help="predict full classes or just polyp/artifact",
    )
    p.add_argument("--trace-csv", default=None, help="write per-epoch loss/accuracy CSV")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser(
        "infer",
        help="relabel detections with a trained model",
        description=(
            "Build a graph over unseen detections, classify each node, and "
            "write relabeled detections with graph_class and graph_prob."
        ),
    )
    p.add_argument("--model", required=True, help="model file from train")
    p.add_argument("--frames", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument(
        "--vocabulary",
        type=_vocabulary_type,
        default=None,
        help="node vocabulary (defaults to the model's classes)",
    )
    _add_threshold_flags(p)
    _add_graph_flags(p)
    p.add_argument("--image-root", default=None, help="directory for image paths")
    p.add_argument("--feature-cache", default=None, help="reuse extracted features")
    p.add_argument("--out", required=True, help="output relabeled detections JSONL")
    p.add_argument("--graph-out", default=None, help="also save the inference graph")
    p.add_argument("--gt-detections", default=None, help="evaluate against this file")
    p.add_argument("--seed", type=int, default=0, help="prediction sampling seed")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser(
        "eval",
        help="score polyp predictions against ground truth",
        description=(
            "Count true/false positives by the center-in-box rule and "
            "report precision, recall, F1, and F2. JSON goes to stdout, a "
            "table to stderr."
        ),
    )
    p.add_argument("--frames", required=True)
    p.add_argument("--predictions", required=True, help="detections or relabeled JSONL")
    p.add_argument("--ground-truth", required=True, help="ground-truth detections JSONL")
    p.add_argument(
        "--polyp-threshold",
        type=_threshold_type,
        default=DEFAULT_POLYP_THRESHOLD,
    )
    p.add_argument("--csv", default=None, help="also write metrics CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser(
        "run-experiment",
        help="run an experiment manifest of graph configurations",
        description=(
            "Train and evaluate every configuration in a manifest against "
            "a shared train/test split; report challenge-style rows next "
            "to the no-graph baseline."
        ),
    )
    p.add_argument("--manifest", required=True, help="experiment manifest JSON")
    p.add_argument("--out", default=None, help="also write the report JSON here")
    p.add_argument("--csv", default=None, help="also write metric rows as CSV")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_run_experiment)

    for sp in sub.choices.values():
        sp.add_argument(
            "--config",
            default=None,
            help="JSON file of option defaults (explicit flags win)",
        )
    return parser


def _apply_config_file(ns: argparse.Namespace, argv: list[str], parser: CliParser) -> None:
    if not getattr(ns, "config", None):
        return
    try:
        with open(ns.config, "r", encoding="utf-8") as fh:
            overrides = json.load(fh)
    except OSError as exc:
        raise DatasetError(f"cannot read config file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise DatasetError(f"malformed config file {ns.config}: {exc}") from None
    if not isinstance(overrides, dict):
        raise DatasetError(f"config file {ns.config} must hold a JSON object")
    converters = {
        "criteria": _criteria_type,
        "scope": _scope_type,
        "sample_sizes": _sizes_type,
        "vocabulary": _vocabulary_type,
    }
    explicit = set()
    for token in argv:
        if token.startswith("--"):
            explicit.add(token.split("=", 1)[0][2:].replace("-", "_"))
    for raw_key, value in overrides.items():
        key = raw_key.replace("-", "_")
        if not hasattr(ns, key) or key in ("func", "command", "config"):
            parser.error(f"unknown config key {raw_key!r} for this command")
        if key in explicit:
            continue
        try:
            if key in converters:
                value = converters[key](value)
        except argparse.ArgumentTypeError as exc:
            parser.error(f"config key {raw_key!r}: {exc}")
        setattr(ns, key, value)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    _setup_logging()
    parser = _build_parser()
    ns = parser.parse_args(argv)
    ns._argv = argv
    try:
        _apply_config_file(ns, argv, parser)
        return ns.func(ns)
    except BrokenPipeError:
        return EXIT_OK
    except DatasetError as exc:
        print(f"boxgraph: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"boxgraph: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"boxgraph: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
