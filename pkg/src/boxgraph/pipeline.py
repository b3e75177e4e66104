"""End-to-end flows: training, inference, and the experiment harness.

Training combines ground-truth polyp boxes with score-filtered artifact
detections, extracts descriptors, builds a graph, and fits the classifier.
Inference runs the trained model over a graph built from unseen detections
and keeps the boxes the model calls polyps. The experiment harness runs a
manifest of graph configurations against a shared train/test split and
reports challenge-style metric rows next to the no-graph baseline.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .datasets import (
    ClassVocabulary,
    Dataset,
    DatasetError,
    Detection,
    FULL_VOCABULARY,
    POLYP,
    SOURCE_GT,
    detection_to_json,
    load_dataset,
    select_artifact_set,
)
from .geometry import BoundingBox
from .graphs import (
    BoxGraph,
    CRITERION_IDS,
    GraphConfig,
    SCOPE_CODES,
    build_graph,
    build_nodes,
)
from .hog import HogConfig, extract_features
from .metrics import DetectionMetrics, evaluate_polyp_boxes
from .sage import EpochStats, SageModel, TrainConfig, predict, train

logger = logging.getLogger(__name__)

DEFAULT_POLYP_THRESHOLD = 0.25
DEFAULT_ARTIFACT_THRESHOLD = 0.5


@dataclass(frozen=True)
class KeyedDetection:
    """A detection plus the feature-cache key of its source row."""

    key: str
    detection: Detection


@dataclass(eq=False)
class TrainResult:
    model: SageModel
    graph: BoxGraph
    trace: list[EpochStats]


@dataclass(eq=False)
class RelabeledDetection:
    """One inference-time detection with the model's verdict attached."""

    frame_id: str
    detection: Detection
    detector_class: str
    graph_class: str
    graph_prob: float

    @property
    def is_polyp(self) -> bool:
        return self.graph_class == POLYP


@dataclass(eq=False)
class InferResult:
    rows: list[RelabeledDetection]
    graph: BoxGraph
    polyp_boxes: dict[str, list[BoundingBox]]


def keyed_rows(dataset: Dataset) -> dict[str, list[KeyedDetection]]:
    """Per-frame detections tagged with their det_key in this dataset."""
    out: dict[str, list[KeyedDetection]] = {}
    for frame in dataset.frames:
        rows = dataset.detections_for(frame.frame_id)
        out[frame.frame_id] = [
            KeyedDetection(key=f"{frame.frame_id}#{i}", detection=det)
            for i, det in enumerate(rows)
        ]
    return out


def _passes_score(det: Detection, polyp_threshold: float, artifact_threshold: float) -> bool:
    if det.source == SOURCE_GT:
        return True
    threshold = polyp_threshold if det.is_polyp else artifact_threshold
    return det.score >= threshold


def merge_for_training(
    gt: Dataset,
    artifacts: Dataset,
    vocabulary: ClassVocabulary,
    polyp_threshold: float = DEFAULT_POLYP_THRESHOLD,
    artifact_threshold: float = DEFAULT_ARTIFACT_THRESHOLD,
) -> tuple[Dataset, dict[str, list[str]]]:
    """Training rows: ground-truth polyps plus filtered artifact detections.

    Polyp-class rows in the artifact detections are ignored with a warning;
    artifact rows outside the vocabulary are dropped. Returns the merged
    dataset and, per frame, the feature-cache keys of the kept rows (keys
    refer to positions in the source datasets, so features extracted from
    those datasets stay valid for any vocabulary).
    """
    if [f.frame_id for f in gt.frames] != [f.frame_id for f in artifacts.frames]:
        raise DatasetError("ground-truth and artifact datasets cover different frames")
    gt_rows = keyed_rows(gt)
    art_rows = keyed_rows(artifacts)
    merged: dict[str, list[Detection]] = {}
    keys: dict[str, list[str]] = {}
    skipped_polyps = 0
    for frame in gt.frames:
        picked: list[KeyedDetection] = []
        for row in gt_rows[frame.frame_id]:
            det = row.detection
            if det.is_polyp and det.source == SOURCE_GT:
                picked.append(row)
        for row in art_rows[frame.frame_id]:
            det = row.detection
            if det.is_polyp:
                skipped_polyps += 1
                continue
            if det.class_label not in vocabulary:
                continue
            if _passes_score(det, polyp_threshold, artifact_threshold):
                picked.append(row)
        merged[frame.frame_id] = [row.detection for row in picked]
        keys[frame.frame_id] = [row.key for row in picked]
    if skipped_polyps:
        logger.warning(
            "ignored %d polyp-class rows in the artifact detections", skipped_polyps
        )
    return gt.with_detections(merged), keys


def merge_for_inference(
    polyps: Dataset,
    artifacts: Dataset,
    vocabulary: ClassVocabulary,
    polyp_threshold: float = DEFAULT_POLYP_THRESHOLD,
    artifact_threshold: float = DEFAULT_ARTIFACT_THRESHOLD,
) -> tuple[Dataset, dict[str, list[str]]]:
    """Inference rows: polyp-class rows from one dataset, artifact rows
    from the other, both score-filtered.

    The two datasets may be the same object (a single detector output
    file); each row is used at most once.
    """
    if [f.frame_id for f in polyps.frames] != [f.frame_id for f in artifacts.frames]:
        raise DatasetError("polyp and artifact datasets cover different frames")
    polyp_rows = keyed_rows(polyps)
    art_rows = keyed_rows(artifacts)
    same_source = polyps is artifacts
    merged: dict[str, list[Detection]] = {}
    keys: dict[str, list[str]] = {}
    for frame in polyps.frames:
        picked: list[KeyedDetection] = []
        for row in polyp_rows[frame.frame_id]:
            det = row.detection
            if det.is_polyp and _passes_score(det, polyp_threshold, artifact_threshold):
                picked.append(row)
        for row in art_rows[frame.frame_id]:
            det = row.detection
            if det.is_polyp:
                continue
            if det.class_label not in vocabulary:
                continue
            if _passes_score(det, polyp_threshold, artifact_threshold):
                picked.append(row)
        merged[frame.frame_id] = [row.detection for row in picked]
        keys[frame.frame_id] = [row.key for row in picked]
    if same_source:
        logger.debug("single detection source used for both polyp and artifact rows")
    return polyps.with_detections(merged), keys


def build_detection_graph(
    data: Dataset,
    vocabulary: ClassVocabulary,
    graph_config: GraphConfig,
    features: dict[str, np.ndarray] | None,
    keys: dict[str, list[str]] | None = None,
) -> BoxGraph:
    """Nodes from a merged dataset, features attached, edges evaluated.

    When keys are given, node det_keys are rewritten to source-dataset keys
    so they line up with a feature cache extracted from the source files.
    Features may be None to build a graph without attaching vectors.
    """
    nodes = build_nodes(data, vocabulary, features=None)
    if keys is not None:
        for node in nodes:
            frame_keys = keys[node.frame_id]
            node.det_key = frame_keys[int(node.det_key.rsplit("#", 1)[1])]
    if features is not None:
        for node in nodes:
            if node.det_key not in features:
                raise ValueError(f"no feature vector for detection {node.det_key!r}")
            node.features = np.asarray(features[node.det_key], dtype=np.float64)
    return build_graph(nodes, graph_config)


def train_pipeline(
    train_data: Dataset,
    image_root: str | Path,
    vocabulary: ClassVocabulary,
    graph_config: GraphConfig,
    train_config: TrainConfig,
    hog_config: HogConfig | None = None,
    features: dict[str, np.ndarray] | None = None,
    keys: dict[str, list[str]] | None = None,
    threads: int = 1,
) -> TrainResult:
    """Features, graph, and a trained model from merged training rows."""
    if features is None:
        features = extract_features(train_data, image_root, hog_config, threads=threads)
        keys = None
    graph = build_detection_graph(train_data, vocabulary, graph_config, features, keys)
    labels = np.array([node.class_index for node in graph.nodes], dtype=np.int64)
    model, trace = train(graph, labels, train_config, vocabulary)
    return TrainResult(model=model, graph=graph, trace=trace)


def infer_pipeline(
    model: SageModel,
    data: Dataset,
    image_root: str | Path,
    graph_config: GraphConfig,
    vocabulary: ClassVocabulary,
    hog_config: HogConfig | None = None,
    features: dict[str, np.ndarray] | None = None,
    keys: dict[str, list[str]] | None = None,
    threads: int = 1,
    seed: int = 0,
) -> InferResult:
    """Relabel merged detections with the model's class decisions."""
    if model.class_mode == "multiclass" and tuple(model.labels) != vocabulary.labels:
        raise ValueError(
            f"model labels {model.labels} do not match vocabulary {vocabulary.labels}"
        )
    if features is None:
        features = extract_features(data, image_root, hog_config, threads=threads)
        keys = None
    graph = build_detection_graph(data, vocabulary, graph_config, features, keys)
    classes, probs = predict(model, graph, seed=seed)
    rows: list[RelabeledDetection] = []
    polyp_boxes: dict[str, list[BoundingBox]] = {f.frame_id: [] for f in data.frames}
    for node, cls in zip(graph.nodes, classes):
        graph_class = model.labels[int(cls)]
        row = RelabeledDetection(
            frame_id=node.frame_id,
            detection=Detection(
                bbox=node.bbox,
                class_label=node.class_label,
                score=node.score,
                source=node.source,
            ),
            detector_class=node.class_label,
            graph_class=graph_class,
            graph_prob=float(probs[node.node_id, int(cls)]),
        )
        rows.append(row)
        if row.is_polyp:
            polyp_boxes[node.frame_id].append(node.bbox)
    return InferResult(rows=rows, graph=graph, polyp_boxes=polyp_boxes)


def baseline_polyp_boxes(
    data: Dataset, polyp_threshold: float = DEFAULT_POLYP_THRESHOLD
) -> dict[str, list[BoundingBox]]:
    """Detector polyps that pass the score threshold, per frame."""
    out: dict[str, list[BoundingBox]] = {}
    for frame in data.frames:
        out[frame.frame_id] = [
            det.bbox
            for det in data.detections_for(frame.frame_id)
            if det.is_polyp and _passes_score(det, polyp_threshold, 1.0)
        ]
    return out


def gt_polyp_boxes(gt: Dataset) -> dict[str, list[BoundingBox]]:
    """Ground-truth polyp boxes, per frame."""
    out: dict[str, list[BoundingBox]] = {}
    for frame in gt.frames:
        out[frame.frame_id] = [
            det.bbox
            for det in gt.detections_for(frame.frame_id)
            if det.is_polyp and det.source == SOURCE_GT
        ]
    return out


def save_relabeled(path: str | Path, rows: list[RelabeledDetection]) -> None:
    """Write relabeled detections as JSON lines.

    Rows keep the detector's class_label (so the file stays loadable as a
    detections file) and add detector_class, graph_class, and graph_prob.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            line = detection_to_json(
                row.frame_id,
                row.detection,
                extra={
                    "detector_class": row.detector_class,
                    "graph_class": row.graph_class,
                    "graph_prob": row.graph_prob,
                },
            )
            fh.write(line + "\n")


def load_prediction_boxes(
    path: str | Path, polyp_threshold: float = DEFAULT_POLYP_THRESHOLD
) -> dict[str, list[BoundingBox]]:
    """Per-frame polyp boxes from a detections file, for evaluation.

    Rows with a graph_class field count as polyps when graph_class is
    "polyp" (the model's verdict overrides the score threshold); plain rows
    count when their class is polyp and the score passes (ground-truth
    rows always pass).
    """
    out: dict[str, list[BoundingBox]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                frame_id = str(row["frame_id"])
                bbox = BoundingBox(
                    float(row["x"]), float(row["y"]), float(row["w"]), float(row["h"])
                )
                if "graph_class" in row:
                    keep = row["graph_class"] == POLYP
                else:
                    keep = row["class"] == POLYP and (
                        row.get("source", "det") == SOURCE_GT
                        or float(row["score"]) >= polyp_threshold
                    )
            except (KeyError, TypeError, ValueError) as exc:
                raise DatasetError(f"{path}:{lineno}: {exc}") from None
            out.setdefault(frame_id, [])
            if keep:
                out[frame_id].append(bbox)
    return out


def _metrics_row(metrics: DetectionMetrics) -> dict:
    return metrics.to_dict()


def _criteria_code(config: GraphConfig) -> str:
    return "+".join(str(CRITERION_IDS[c]) for c in sorted(config.criteria, key=CRITERION_IDS.get))


def run_experiment(
    manifest: dict,
    base_dir: str | Path = ".",
    threads: int = 1,
) -> dict:
    """Run every configuration of an experiment manifest.

    The manifest names train/test detection files, shared defaults, and a
    list of graph configurations (vocabulary, criteria, scope, class mode,
    seed, plus optional training overrides). Features are extracted once
    per side and shared across configurations. A configuration that fails
    produces an error row instead of aborting the sweep.
    """
    base = Path(base_dir)

    def _resolve(p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else base / q

    for section in ("train", "test"):
        if section not in manifest:
            raise DatasetError(f"manifest is missing the {section!r} section")
    defaults = dict(manifest.get("defaults", {}))
    polyp_thr = float(defaults.pop("polyp_threshold", DEFAULT_POLYP_THRESHOLD))
    artifact_thr = float(defaults.pop("artifact_threshold", DEFAULT_ARTIFACT_THRESHOLD))

    tr = manifest["train"]
    te = manifest["test"]
    train_frames = _resolve(tr["frames"])
    train_gt = load_dataset(train_frames, _resolve(tr["gt_detections"]))
    train_art = load_dataset(train_frames, _resolve(tr["artifact_detections"]))
    train_root = _resolve(tr.get("image_root", str(Path(tr["frames"]).parent)))

    test_frames = _resolve(te["frames"])
    test_polyps = load_dataset(test_frames, _resolve(te["polyp_detections"]))
    test_art_path = te.get("artifact_detections", te["polyp_detections"])
    test_art = (
        test_polyps
        if test_art_path == te["polyp_detections"]
        else load_dataset(test_frames, _resolve(test_art_path))
    )
    test_gt = load_dataset(test_frames, _resolve(te["gt_detections"]))
    test_root = _resolve(te.get("image_root", str(Path(te["frames"]).parent)))

    hog_cfg = HogConfig()
    gt_boxes = gt_polyp_boxes(test_gt)
    baseline = evaluate_polyp_boxes(baseline_polyp_boxes(test_polyps, polyp_thr), gt_boxes)
    baseline_row = {
        "model": "baseline",
        "art_class": "-",
        "cc": "-",
        "ifc": "-",
        "class_mode": "-",
        **_metrics_row(baseline),
    }

    # Features are keyed by source-dataset positions, so one extraction per
    # side serves every vocabulary.
    full_train, full_train_keys = merge_for_training(
        train_gt, train_art, FULL_VOCABULARY, polyp_thr, artifact_thr
    )
    train_features = extract_features(full_train, train_root, hog_cfg, threads=threads)
    train_features = rekey_features(train_features, full_train_keys)
    full_test, full_test_keys = merge_for_inference(
        test_polyps, test_art, FULL_VOCABULARY, polyp_thr, artifact_thr
    )
    test_features = extract_features(full_test, test_root, hog_cfg, threads=threads)
    test_features = rekey_features(test_features, full_test_keys)

    rows = []
    for conf in manifest.get("configurations", []):
        name = conf.get("name", "unnamed")
        try:
            rows.append(
                _run_configuration(
                    conf,
                    defaults,
                    train_gt,
                    train_art,
                    train_root,
                    test_polyps,
                    test_art,
                    test_root,
                    gt_boxes,
                    train_features,
                    test_features,
                    polyp_thr,
                    artifact_thr,
                    threads,
                )
            )
        except Exception as exc:  # isolate per-row failures
            logger.exception("configuration %r failed", name)
            rows.append({"model": name, "error": f"{type(exc).__name__}: {exc}"})
    return {
        "version": __version__,
        "thresholds": {"polyp": polyp_thr, "artifact": artifact_thr},
        "baseline": baseline_row,
        "rows": rows,
    }


def rekey_features(
    features: dict[str, np.ndarray], keys: dict[str, list[str]]
) -> dict[str, np.ndarray]:
    """Translate merged-dataset feature keys back to source-dataset keys."""
    out: dict[str, np.ndarray] = {}
    for frame_id, frame_keys in keys.items():
        for ordinal, source_key in enumerate(frame_keys):
            merged_key = f"{frame_id}#{ordinal}"
            if merged_key in features:
                out[source_key] = features[merged_key]
    return out


def _run_configuration(
    conf: dict,
    defaults: dict,
    train_gt: Dataset,
    train_art: Dataset,
    train_root: Path,
    test_polyps: Dataset,
    test_art: Dataset,
    test_root: Path,
    gt_boxes: dict[str, list[BoundingBox]],
    train_features: dict[str, np.ndarray],
    test_features: dict[str, np.ndarray],
    polyp_thr: float,
    artifact_thr: float,
    threads: int,
) -> dict:
    merged_conf = {**defaults, **conf}
    name = merged_conf.pop("name", "unnamed")
    vocab_name = merged_conf.pop("vocabulary", "art1")
    vocabulary = select_artifact_set(vocab_name)
    graph_config = GraphConfig(
        criteria=frozenset(merged_conf.pop("criteria", ("overlap", "binary"))),
        iou_threshold=float(merged_conf.pop("iou_threshold", 0.5)),
        random_p=float(merged_conf.pop("random_p", 0.5)),
        inter_frame_scope=merged_conf.pop("inter_frame_scope", "dataset_level"),
        rng_seed=int(merged_conf.pop("rng_seed", 0)),
    )
    sizes = merged_conf.pop("sample_sizes", (10, 25))
    train_config = TrainConfig(
        hidden_width=int(merged_conf.pop("hidden_width", 128)),
        sample_sizes=(int(sizes[0]), int(sizes[1])),
        batch_size=int(merged_conf.pop("batch_size", 64)),
        epochs=int(merged_conf.pop("epochs", 30)),
        learning_rate=float(merged_conf.pop("learning_rate", 0.1)),
        rng_seed=int(merged_conf.pop("seed", graph_config.rng_seed)),
        class_mode=merged_conf.pop("class_mode", "multiclass"),
    )
    if merged_conf:
        raise ValueError(f"unknown configuration keys: {sorted(merged_conf)}")

    train_data, train_keys = merge_for_training(
        train_gt, train_art, vocabulary, polyp_thr, artifact_thr
    )
    result = train_pipeline(
        train_data,
        train_root,
        vocabulary,
        graph_config,
        train_config,
        features=train_features,
        keys=train_keys,
        threads=threads,
    )
    test_data, test_keys = merge_for_inference(
        test_polyps, test_art, vocabulary, polyp_thr, artifact_thr
    )
    inference = infer_pipeline(
        result.model,
        test_data,
        test_root,
        graph_config,
        vocabulary,
        features=test_features,
        keys=test_keys,
        threads=threads,
        seed=train_config.rng_seed,
    )
    metrics = evaluate_polyp_boxes(inference.polyp_boxes, gt_boxes)
    return {
        "model": name,
        "art_class": vocab_name,
        "cc": _criteria_code(graph_config),
        "ifc": SCOPE_CODES[graph_config.inter_frame_scope],
        "class_mode": train_config.class_mode,
        "seed": train_config.rng_seed,
        **_metrics_row(metrics),
    }
