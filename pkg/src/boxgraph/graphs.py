"""Detection graphs.

Nodes are score-filtered detections; undirected edges come from the union of
enabled pairwise criteria: spatial overlap, shared class, shared
polyp/artifact group, and a hash-keyed random criterion. Overlap applies only
within a frame; the other criteria reach across frames subject to the
configured scope.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from . import kernels
from .datasets import Dataset, ClassVocabulary, POLYP
from .geometry import BoundingBox, contains
from .hog import detection_key

logger = logging.getLogger(__name__)

GRAPH_FORMAT = "boxgraph"
GRAPH_VERSION = 1

CRITERIA = ("random", "overlap", "same_class", "binary")

# Compact numeric aliases used in reports and accepted by the CLI.
CRITERION_IDS = {"random": 1, "overlap": 2, "same_class": 3, "binary": 4}

SCOPES = ("dataset_level", "video_level")
SCOPE_CODES = {"dataset_level": "dl", "video_level": "vl"}


@dataclass(frozen=True)
class GraphConfig:
    """Edge construction parameters.

    criteria is the set of enabled edge rules; same_class and binary are
    mutually exclusive. inter_frame_scope limits cross-frame edges from the
    random/same_class/binary rules: dataset_level allows any pair,
    video_level only pairs within one video. rng_seed keys the random rule.
    """

    criteria: frozenset[str] = frozenset(("overlap", "binary"))
    iou_threshold: float = 0.5
    random_p: float = 0.5
    inter_frame_scope: str = "dataset_level"
    rng_seed: int = 0

    def __post_init__(self) -> None:
        crit = frozenset(self.criteria)
        object.__setattr__(self, "criteria", crit)
        if not crit:
            raise ValueError("criteria must not be empty")
        unknown = crit.difference(CRITERIA)
        if unknown:
            raise ValueError(f"unknown criteria: {sorted(unknown)}")
        if "same_class" in crit and "binary" in crit:
            raise ValueError("same_class and binary criteria are mutually exclusive")
        if not 0.0 <= self.iou_threshold < 1.0:
            raise ValueError("iou_threshold must lie in [0, 1)")
        if not 0.0 <= self.random_p <= 1.0:
            raise ValueError("random_p must lie in [0, 1]")
        if self.inter_frame_scope not in SCOPES:
            raise ValueError(f"inter_frame_scope must be one of {SCOPES}")
        if self.rng_seed < 0:
            raise ValueError("rng_seed must be non-negative")


@dataclass(eq=False)
class NodeRecord:
    """One detection in the graph.

    node_id equals the node's position in the graph's node list. det_key is
    the feature-cache key ("<frame_id>#<ordinal within frame>"). features may
    be absent until attached from a cache.
    """

    node_id: int
    frame_id: str
    video_id: str | None
    bbox: BoundingBox
    class_label: str
    class_index: int
    score: float
    source: str
    det_key: str
    features: np.ndarray | None = None

    @property
    def is_polyp(self) -> bool:
        return self.class_label == POLYP


@dataclass(eq=False)
class BoxGraph:
    """Undirected graph over detection nodes.

    adjacency[i] is a sorted int64 array of neighbor node ids; every edge
    appears in both endpoint lists and never as a self-loop.
    """

    nodes: list[NodeRecord]
    adjacency: list[np.ndarray]
    config: GraphConfig

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_edges(self) -> int:
        return sum(len(a) for a in self.adjacency) // 2

    def neighbors(self, node_id: int) -> np.ndarray:
        return self.adjacency[node_id]

    def edges(self) -> np.ndarray:
        """All edges as an (m, 2) int64 array with i < j, lexicographic."""
        rows = []
        for i, nbrs in enumerate(self.adjacency):
            upper = nbrs[nbrs > i]
            if len(upper):
                rows.append(np.stack([np.full(len(upper), i, dtype=np.int64), upper], axis=1))
        if not rows:
            return np.empty((0, 2), dtype=np.int64)
        return np.concatenate(rows, axis=0)

    def iter_edges(self) -> Iterator[tuple[int, int]]:
        for i, j in self.edges():
            yield int(i), int(j)

    def validate(self) -> None:
        """Check structural invariants; raises ValueError on violation."""
        n = len(self.nodes)
        if len(self.adjacency) != n:
            raise ValueError("adjacency length does not match node count")
        for i, node in enumerate(self.nodes):
            if node.node_id != i:
                raise ValueError(f"node at position {i} has node_id {node.node_id}")
        for i, nbrs in enumerate(self.adjacency):
            arr = np.asarray(nbrs)
            if arr.ndim != 1:
                raise ValueError(f"adjacency[{i}] is not one-dimensional")
            if len(arr) == 0:
                continue
            if arr.min() < 0 or arr.max() >= n:
                raise ValueError(f"adjacency[{i}] references nodes out of range")
            if np.any(arr == i):
                raise ValueError(f"node {i} has a self-loop")
            if np.any(np.diff(arr) <= 0):
                raise ValueError(f"adjacency[{i}] is not strictly increasing")
        # Symmetry: the directed neighbor relation must equal its transpose.
        counts = [len(a) for a in self.adjacency]
        if sum(counts):
            src = np.repeat(np.arange(n, dtype=np.int64), counts)
            dst = np.concatenate([np.asarray(a, dtype=np.int64) for a in self.adjacency])
            fwd = np.lexsort((dst, src))
            rev = np.lexsort((src, dst))
            if not (
                np.array_equal(src[fwd], dst[rev]) and np.array_equal(dst[fwd], src[rev])
            ):
                raise ValueError("adjacency is not symmetric")


def build_nodes(
    dataset: Dataset,
    vocabulary: ClassVocabulary,
    features: dict[str, np.ndarray] | None = None,
) -> list[NodeRecord]:
    """Create node records from a dataset's detections, in file order.

    Detections must already be score-filtered and restricted to the
    vocabulary; an out-of-vocabulary class raises ValueError. When a feature
    dict is given, every detection must have an entry under its det_key.
    """
    nodes: list[NodeRecord] = []
    for frame in dataset.frames:
        for ordinal, det in enumerate(dataset.detections_for(frame.frame_id)):
            if det.class_label not in vocabulary:
                raise ValueError(
                    f"class {det.class_label!r} is not in the vocabulary; "
                    "restrict detections before building nodes"
                )
            key = detection_key(frame.frame_id, ordinal)
            feat = None
            if features is not None:
                if key not in features:
                    raise ValueError(f"no feature vector for detection {key!r}")
                feat = np.asarray(features[key], dtype=np.float64)
            nodes.append(
                NodeRecord(
                    node_id=len(nodes),
                    frame_id=frame.frame_id,
                    video_id=frame.video_id,
                    bbox=det.bbox,
                    class_label=det.class_label,
                    class_index=vocabulary.index(det.class_label),
                    score=det.score,
                    source=det.source,
                    det_key=key,
                    features=feat,
                )
            )
    return nodes


def _scope_allows(a: NodeRecord, b: NodeRecord, config: GraphConfig) -> bool:
    if a.frame_id == b.frame_id:
        return True
    if config.inter_frame_scope == "dataset_level":
        return True
    return a.video_id is not None and a.video_id == b.video_id


def edge_decision(a: NodeRecord, b: NodeRecord, config: GraphConfig) -> bool:
    """Whether two nodes are connected under the configured criteria.

    Symmetric in its arguments and False for identical node ids. The random
    criterion hashes the unordered node id pair with the config seed, so the
    decision is independent of evaluation order.
    """
    if a.node_id == b.node_id:
        return False
    same_frame = a.frame_id == b.frame_id
    crit = config.criteria
    if "overlap" in crit and same_frame:
        # Same float expression as the kernels: inter > threshold * union.
        ax0, ay0, ax1, ay1 = a.bbox.x_min, a.bbox.y_min, a.bbox.x_max, a.bbox.y_max
        bx0, by0, bx1, by1 = b.bbox.x_min, b.bbox.y_min, b.bbox.x_max, b.bbox.y_max
        ix = min(ax1, bx1) - max(ax0, bx0)
        iy = min(ay1, by1) - max(ay0, by0)
        inter = ix * iy if (ix > 0.0 and iy > 0.0) else 0.0
        union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
        if inter > config.iou_threshold * union:
            return True
        if contains(a.bbox, b.bbox) or contains(b.bbox, a.bbox):
            return True
    if _scope_allows(a, b, config):
        if "same_class" in crit and a.class_index == b.class_index:
            return True
        if "binary" in crit and a.is_polyp == b.is_polyp:
            return True
        if "random" in crit:
            u = kernels.pair_uniform(config.rng_seed, a.node_id, b.node_id)
            if u < config.random_p:
                return True
    return False


def build_graph(nodes: list[NodeRecord], config: GraphConfig) -> BoxGraph:
    """Evaluate edge_decision over all unordered node pairs.

    Nodes must be numbered 0..n-1 in list order. Runs through the active
    kernel backend; the result matches a naive double loop over
    edge_decision exactly.
    """
    n = len(nodes)
    for i, node in enumerate(nodes):
        if node.node_id != i:
            raise ValueError(f"node at position {i} has node_id {node.node_id}")
    if config.inter_frame_scope == "video_level" and any(
        node.video_id is None for node in nodes
    ):
        raise ValueError("video_level scope requires every node to have a video_id")
    if n == 0:
        return BoxGraph(nodes=[], adjacency=[], config=config)

    frame_ids: dict[str, int] = {}
    video_ids: dict[str, int] = {}
    frame_idx = np.empty(n, dtype=np.int64)
    video_idx = np.zeros(n, dtype=np.int64)
    class_idx = np.empty(n, dtype=np.int64)
    polyp_flag = np.empty(n, dtype=np.uint8)
    boxes = np.empty((n, 4), dtype=np.float64)
    for i, node in enumerate(nodes):
        frame_idx[i] = frame_ids.setdefault(node.frame_id, len(frame_ids))
        if node.video_id is not None:
            video_idx[i] = video_ids.setdefault(node.video_id, len(video_ids))
        class_idx[i] = node.class_index
        polyp_flag[i] = 1 if node.is_polyp else 0
        boxes[i, 0] = node.bbox.x_min
        boxes[i, 1] = node.bbox.y_min
        boxes[i, 2] = node.bbox.x_max
        boxes[i, 3] = node.bbox.y_max

    crit = config.criteria
    edges = kernels.edge_pairs(
        frame_idx,
        video_idx,
        class_idx,
        polyp_flag,
        boxes,
        "random" in crit,
        "overlap" in crit,
        "same_class" in crit,
        "binary" in crit,
        config.iou_threshold,
        config.random_p,
        config.inter_frame_scope == "video_level",
        config.rng_seed,
    )
    adjacency = adjacency_from_edges(n, edges)
    logger.info(
        "built graph: %d nodes, %d edges, criteria=%s",
        n,
        len(edges),
        "+".join(sorted(crit)),
    )
    return BoxGraph(nodes=nodes, adjacency=adjacency, config=config)


def adjacency_from_edges(num_nodes: int, edges: np.ndarray) -> list[np.ndarray]:
    """Sorted per-node neighbor arrays from an (m, 2) edge list."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    order = np.lexsort((dst, src))
    src = src[order]
    dst = dst[order]
    counts = np.bincount(src, minlength=num_nodes)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    return [dst[offsets[i] : offsets[i + 1]].copy() for i in range(num_nodes)]


@dataclass(frozen=True)
class DegreeStats:
    """Degree summary of a graph."""

    num_nodes: int
    num_edges: int
    min_degree: int
    max_degree: int
    mean_degree: float
    isolated_count: int


def degree_stats(graph: BoxGraph) -> DegreeStats:
    degrees = np.array([len(a) for a in graph.adjacency], dtype=np.int64)
    if len(degrees) == 0:
        return DegreeStats(0, 0, 0, 0, 0.0, 0)
    return DegreeStats(
        num_nodes=graph.num_nodes,
        num_edges=graph.num_edges,
        min_degree=int(degrees.min()),
        max_degree=int(degrees.max()),
        mean_degree=float(degrees.mean()),
        isolated_count=int(np.sum(degrees == 0)),
    )


def _config_to_json(config: GraphConfig) -> dict:
    return {
        "criteria": sorted(config.criteria),
        "iou_threshold": config.iou_threshold,
        "random_p": config.random_p,
        "inter_frame_scope": config.inter_frame_scope,
        "rng_seed": config.rng_seed,
    }


def _config_from_json(data: dict) -> GraphConfig:
    return GraphConfig(
        criteria=frozenset(data["criteria"]),
        iou_threshold=float(data["iou_threshold"]),
        random_p=float(data["random_p"]),
        inter_frame_scope=str(data["inter_frame_scope"]),
        rng_seed=int(data["rng_seed"]),
    )


def save_graph(path: str | Path, graph: BoxGraph, vocabulary: ClassVocabulary) -> None:
    """Write a graph to a text file.

    First line is a JSON header (format, version, node count, vocabulary,
    config). Then one JSON line per node in node_id order, then one "i j"
    line per edge with i < j in lexicographic order. Features are not
    stored; they live in the feature cache keyed by det_key.
    """
    header = {
        "format": GRAPH_FORMAT,
        "version": GRAPH_VERSION,
        "node_count": graph.num_nodes,
        "vocabulary": list(vocabulary.labels),
        "config": _config_to_json(graph.config),
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for node in graph.nodes:
            row = {
                "node_id": node.node_id,
                "frame_id": node.frame_id,
                "video_id": node.video_id,
                "bbox": [node.bbox.x_min, node.bbox.y_min, node.bbox.width, node.bbox.height],
                "class_label": node.class_label,
                "score": node.score,
                "source": node.source,
                "det_key": node.det_key,
            }
            fh.write(json.dumps(row, sort_keys=True) + "\n")
        edges = graph.edges()
        if len(edges):
            fh.write("\n".join(f"{i} {j}" for i, j in edges.tolist()))
            fh.write("\n")


def load_graph(
    path: str | Path,
    features: dict[str, np.ndarray] | None = None,
) -> tuple[BoxGraph, ClassVocabulary]:
    """Read a graph file; optionally attach features from a cache dict."""
    with open(path, "r", encoding="utf-8") as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise ValueError(f"{path}: empty graph file")
        header = json.loads(header_line)
        if header.get("format") != GRAPH_FORMAT:
            raise ValueError(f"{path}: not a graph file")
        if header.get("version") != GRAPH_VERSION:
            raise ValueError(f"{path}: unsupported graph version {header.get('version')}")
        node_count = int(header["node_count"])
        vocabulary = ClassVocabulary(tuple(header["vocabulary"]))
        config = _config_from_json(header["config"])

        nodes: list[NodeRecord] = []
        for i in range(node_count):
            line = fh.readline()
            if not line.strip():
                raise ValueError(f"{path}: expected {node_count} node lines, got {i}")
            row = json.loads(line)
            x, y, w, h = row["bbox"]
            label = row["class_label"]
            feat = None
            if features is not None:
                key = row["det_key"]
                if key not in features:
                    raise ValueError(f"{path}: no feature vector for detection {key!r}")
                feat = np.asarray(features[key], dtype=np.float64)
            nodes.append(
                NodeRecord(
                    node_id=int(row["node_id"]),
                    frame_id=row["frame_id"],
                    video_id=row["video_id"],
                    bbox=BoundingBox(float(x), float(y), float(w), float(h)),
                    class_label=label,
                    class_index=vocabulary.index(label),
                    score=float(row["score"]),
                    source=row["source"],
                    det_key=row["det_key"],
                    features=feat,
                )
            )
        rest = fh.read().split()
    if len(rest) % 2 != 0:
        raise ValueError(f"{path}: malformed edge section")
    try:
        edges = np.array([int(tok) for tok in rest], dtype=np.int64).reshape(-1, 2)
    except ValueError as exc:
        raise ValueError(f"{path}: malformed edge section: {exc}") from None
    graph = BoxGraph(
        nodes=nodes,
        adjacency=adjacency_from_edges(node_count, edges),
        config=config,
    )
    graph.validate()
    return graph, vocabulary
