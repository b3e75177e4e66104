"""Inductive graph network over detection nodes.

Two mean-aggregator layers with concatenation, a linear readout, and plain
SGD on softmax cross-entropy. Neighborhood sampling is deterministic: each
(seed, epoch, batch, layer, node) tuple keys its own counter-based stream,
so runs reproduce exactly and results do not depend on node enumeration
order. Forward propagation treats node features as the layer-0 hidden state;
feature standardization happens in train/predict, with the statistics stored
in the model.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .datasets import ClassVocabulary, POLYP
from .graphs import BoxGraph

MODEL_MAGIC = b"BGSM"
MODEL_VERSION = 1

BINARY_LABELS = ("polyp", "artifact")
CLASS_MODES = ("multiclass", "binary")

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


class _Stream:
    """Counter-based deterministic u64 stream keyed by integer parts."""

    __slots__ = ("state",)

    def __init__(self, *parts: int) -> None:
        s = 0
        for p in parts:
            s = _mix64(s ^ (int(p) & _MASK))
        self.state = s

    def next(self) -> int:
        self.state = (self.state + _GOLDEN) & _MASK
        return _mix64(self.state)


@dataclass(frozen=True)
class TrainConfig:
    """Optimization and sampling settings.

    sample_sizes is (s1, s2): neighbors sampled at the inner and outer
    layer. class_mode "binary" collapses labels to polyp/artifact before
    training.
    """

    hidden_width: int = 128
    sample_sizes: tuple[int, int] = (10, 25)
    batch_size: int = 64
    epochs: int = 30
    learning_rate: float = 0.1
    rng_seed: int = 0
    class_mode: str = "multiclass"

    def __post_init__(self) -> None:
        if self.hidden_width < 1:
            raise ValueError("hidden_width must be positive")
        s1, s2 = self.sample_sizes
        object.__setattr__(self, "sample_sizes", (int(s1), int(s2)))
        if s1 < 1 or s2 < 1:
            raise ValueError("sample_sizes must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be positive")
        if not self.learning_rate > 0.0:
            raise ValueError("learning_rate must be positive")
        if self.rng_seed < 0:
            raise ValueError("rng_seed must be non-negative")
        if self.class_mode not in CLASS_MODES:
            raise ValueError(f"class_mode must be one of {CLASS_MODES}")


@dataclass(eq=False)
class SageParams:
    """Weight matrices: w1 (h, 2F), w2 (h, 2h), w_out (C, h). No biases."""

    w1: np.ndarray
    w2: np.ndarray
    w_out: np.ndarray

    def __post_init__(self) -> None:
        h, two_f = self.w1.shape
        if two_f % 2 != 0:
            raise ValueError("w1 must have an even number of columns")
        if self.w2.shape != (h, 2 * h):
            raise ValueError(f"w2 must be ({h}, {2 * h}), got {self.w2.shape}")
        if self.w_out.shape[1] != h:
            raise ValueError(f"w_out must have {h} columns, got {self.w_out.shape}")

    @property
    def feature_dim(self) -> int:
        return self.w1.shape[1] // 2

    @property
    def hidden_width(self) -> int:
        return self.w1.shape[0]

    @property
    def num_classes(self) -> int:
        return self.w_out.shape[0]

    def copy(self) -> "SageParams":
        return SageParams(self.w1.copy(), self.w2.copy(), self.w_out.copy())


@dataclass(eq=False)
class SageGrads:
    """Gradients matching SageParams shapes."""

    w1: np.ndarray
    w2: np.ndarray
    w_out: np.ndarray


@dataclass(eq=False)
class SageModel:
    """Trained classifier: weights, feature statistics, and label names.

    labels[i] names class index i ("polyp" is always index 0). feat_mean and
    feat_scale standardize raw descriptors; scale is 1 where the training
    standard deviation was degenerate.
    """

    params: SageParams
    feat_mean: np.ndarray
    feat_scale: np.ndarray
    labels: tuple[str, ...]
    class_mode: str
    sample_sizes: tuple[int, int]

    def __post_init__(self) -> None:
        if self.class_mode not in CLASS_MODES:
            raise ValueError(f"class_mode must be one of {CLASS_MODES}")
        if len(self.labels) != self.params.num_classes:
            raise ValueError("label count does not match output classes")
        if self.labels[0] != POLYP:
            raise ValueError(f"class index 0 must be {POLYP!r}")
        f = self.params.feature_dim
        if self.feat_mean.shape != (f,) or self.feat_scale.shape != (f,):
            raise ValueError("feature statistics do not match feature dim")

    @property
    def num_classes(self) -> int:
        return self.params.num_classes

    def standardize(self, features: np.ndarray) -> np.ndarray:
        return (features - self.feat_mean) * self.feat_scale


@dataclass(frozen=True)
class EpochStats:
    """Per-epoch mean training loss and accuracy."""

    epoch: int
    loss: float
    accuracy: float


def init_params(
    feature_dim: int, hidden_width: int, num_classes: int, seed: int
) -> SageParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization."""

    def uniform(tag: int, rows: int, cols: int) -> np.ndarray:
        bound = 1.0 / np.sqrt(cols)
        rng = np.random.default_rng([seed, tag])
        return rng.uniform(-bound, bound, size=(rows, cols))

    return SageParams(
        w1=uniform(1, hidden_width, 2 * feature_dim),
        w2=uniform(2, hidden_width, 2 * hidden_width),
        w_out=uniform(3, num_classes, hidden_width),
    )


def sample_neighbors(graph: BoxGraph, node_id: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform sample of min(k, degree) distinct neighbors, sorted.

    Uses the provided generator; for the deterministic streams used in
    training and prediction see build_plan.
    """
    nbrs = graph.adjacency[node_id]
    d = len(nbrs)
    if d <= k:
        return np.asarray(nbrs, dtype=np.int64).copy()
    seen: set[int] = set()
    while len(seen) < k:
        r = int(rng.integers(0, d))
        seen.add(r)
    idx = np.sort(np.fromiter(seen, dtype=np.int64, count=k))
    return np.asarray(nbrs, dtype=np.int64)[idx]


def mean_aggregate(vectors: np.ndarray, dim: int) -> np.ndarray:
    """Mean of a stack of vectors; the zero vector when the stack is empty."""
    arr = np.asarray(vectors, dtype=np.float64).reshape(-1, dim)
    if arr.shape[0] == 0:
        return np.zeros(dim, dtype=np.float64)
    return arr.mean(axis=0)


def _sample_ids(nbrs: np.ndarray, k: int, parts: tuple[int, ...]) -> np.ndarray:
    """Deterministic uniform k-subset of a sorted neighbor array.

    Rejection-samples indices from the keyed stream until k are distinct;
    all neighbors are taken when the degree is at most k. Output is sorted
    so downstream aggregation is order-independent.
    """
    d = len(nbrs)
    if d == 0:
        return np.empty(0, dtype=np.int64)
    if d <= k:
        return np.asarray(nbrs, dtype=np.int64)
    stream = _Stream(*parts)
    seen: set[int] = set()
    order: list[int] = []
    while len(order) < k:
        r = stream.next() % d
        if r not in seen:
            seen.add(r)
            order.append(r)
    idx = np.sort(np.array(order, dtype=np.int64))
    return np.asarray(nbrs, dtype=np.int64)[idx]


@dataclass(eq=False)
class Plan:
    """Frozen sampled neighborhoods for one forward/backward pass.

    batch holds global node ids. l1_nodes is the sorted union of the batch
    and its sampled outer neighbors; batch_pos and n2_flat_pos index into
    l1_nodes. n1_flat holds global ids of inner-layer neighbors, grouped by
    l1 node via n1_offsets.
    """

    batch: np.ndarray
    l1_nodes: np.ndarray
    batch_pos: np.ndarray
    n1_flat: np.ndarray
    n1_offsets: np.ndarray
    n2_flat_pos: np.ndarray
    n2_offsets: np.ndarray


def build_plan(
    adjacency: list[np.ndarray],
    batch: np.ndarray,
    sample_sizes: tuple[int, int],
    seed_parts: tuple[int, ...],
) -> Plan:
    """Sample the two-layer neighborhood of a batch.

    Per-node streams are keyed by seed_parts + (layer, node_id), so the plan
    for a node does not depend on which other nodes share the batch.
    """
    s1, s2 = sample_sizes
    batch = np.asarray(batch, dtype=np.int64)
    n2_lists = [_sample_ids(adjacency[int(v)], s2, seed_parts + (2, int(v))) for v in batch]
    if n2_lists:
        l1_nodes = np.unique(np.concatenate([batch, *n2_lists]))
    else:
        l1_nodes = np.unique(batch)
    batch_pos = np.searchsorted(l1_nodes, batch)
    n2_flat_pos = (
        np.searchsorted(l1_nodes, np.concatenate(n2_lists))
        if n2_lists
        else np.empty(0, dtype=np.int64)
    )
    n2_offsets = np.zeros(len(batch) + 1, dtype=np.int64)
    np.cumsum([len(lst) for lst in n2_lists], out=n2_offsets[1:])

    n1_lists = [_sample_ids(adjacency[int(u)], s1, seed_parts + (1, int(u))) for u in l1_nodes]
    n1_flat = (
        np.concatenate(n1_lists) if n1_lists else np.empty(0, dtype=np.int64)
    )
    n1_offsets = np.zeros(len(l1_nodes) + 1, dtype=np.int64)
    np.cumsum([len(lst) for lst in n1_lists], out=n1_offsets[1:])
    return Plan(
        batch=batch,
        l1_nodes=l1_nodes,
        batch_pos=batch_pos.astype(np.int64),
        n1_flat=n1_flat.astype(np.int64),
        n1_offsets=n1_offsets,
        n2_flat_pos=n2_flat_pos.astype(np.int64),
        n2_offsets=n2_offsets,
    )


def _segment_mean(
    x: np.ndarray, flat: np.ndarray, offsets: np.ndarray, num_segments: int
) -> tuple[np.ndarray, np.ndarray]:
    """Per-segment mean of x rows indexed by flat; zeros for empty segments."""
    dim = x.shape[1]
    counts = np.diff(offsets)
    out = np.zeros((num_segments, dim), dtype=np.float64)
    if len(flat) == 0:
        return out, counts
    nonzero = counts > 0
    if len(flat) * dim <= 40_000_000:
        gathered = x[flat]
        sums = np.add.reduceat(gathered, offsets[:-1][nonzero], axis=0)
        out[nonzero] = sums / counts[nonzero, None]
    elif num_segments * x.shape[0] <= 40_000_000:
        sel = np.zeros((num_segments, x.shape[0]), dtype=np.float64)
        seg_ids = np.repeat(np.arange(num_segments), counts)
        sel[seg_ids, flat] = 1.0
        sel[nonzero] /= counts[nonzero, None]
        out = sel @ x
    else:
        budget = max(1, 40_000_000 // dim)
        start_seg = 0
        while start_seg < num_segments:
            end_seg = start_seg
            while (
                end_seg < num_segments
                and offsets[end_seg + 1] - offsets[start_seg] <= budget
            ):
                end_seg += 1
            end_seg = max(end_seg, start_seg + 1)
            lo, hi = offsets[start_seg], offsets[end_seg]
            if hi > lo:
                sub_off = offsets[start_seg : end_seg + 1] - lo
                sub_counts = np.diff(sub_off)
                sub_nz = sub_counts > 0
                gathered = x[flat[lo:hi]]
                sums = np.add.reduceat(gathered, sub_off[:-1][sub_nz], axis=0)
                block = np.zeros((end_seg - start_seg, dim), dtype=np.float64)
                block[sub_nz] = sums / sub_counts[sub_nz, None]
                out[start_seg:end_seg] = block
            start_seg = end_seg
    return out, counts


def _forward_plan(params: SageParams, x: np.ndarray, plan: Plan):
    """Run both layers over a plan; returns logits and backward cache."""
    h = params.hidden_width
    mean0, cnt1 = _segment_mean(x, plan.n1_flat, plan.n1_offsets, len(plan.l1_nodes))
    a1 = np.concatenate([x[plan.l1_nodes], mean0], axis=1)
    z1 = a1 @ params.w1.T
    h1 = np.maximum(z1, 0.0)

    mean1, cnt2 = _segment_mean(h1, plan.n2_flat_pos, plan.n2_offsets, len(plan.batch))
    a2 = np.concatenate([h1[plan.batch_pos], mean1], axis=1)
    z2 = a2 @ params.w2.T
    h2 = np.maximum(z2, 0.0)
    logits = h2 @ params.w_out.T
    cache = (a1, z1, h1, cnt2, a2, z2, h2)
    return logits, cache


def _softmax_rows(logits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise softmax probabilities and log-probabilities, stably."""
    m = logits.max(axis=1, keepdims=True)
    shifted = logits - m
    ex = np.exp(shifted)
    z = ex.sum(axis=1, keepdims=True)
    return ex / z, shifted - np.log(z)


def plan_loss_and_grad(
    params: SageParams, x: np.ndarray, plan: Plan, targets: np.ndarray
) -> tuple[float, SageGrads, np.ndarray]:
    """Cross-entropy loss, analytic gradients, and logits for a fixed plan.

    The plan pins the sampled neighborhoods, so the loss is a deterministic
    differentiable function of the parameters; gradients are exact for that
    function.
    """
    targets = np.asarray(targets, dtype=np.int64)
    b = len(plan.batch)
    logits, (a1, z1, h1, cnt2, a2, z2, h2) = _forward_plan(params, x, plan)
    probs, logp = _softmax_rows(logits)
    rows = np.arange(b)
    loss = float(-logp[rows, targets].mean())

    dlogits = probs.copy()
    dlogits[rows, targets] -= 1.0
    dlogits /= b
    g_wout = dlogits.T @ h2
    dh2 = dlogits @ params.w_out
    dz2 = np.where(z2 > 0.0, dh2, 0.0)
    g_w2 = dz2.T @ a2
    da2 = dz2 @ params.w2

    h = params.hidden_width
    dh1 = np.zeros_like(h1)
    np.add.at(dh1, plan.batch_pos, da2[:, :h])
    if len(plan.n2_flat_pos):
        safe = np.where(cnt2 > 0, cnt2, 1)
        per_parent = da2[:, h:] / safe[:, None]
        seg_ids = np.repeat(np.arange(b), cnt2)
        np.add.at(dh1, plan.n2_flat_pos, per_parent[seg_ids])
    dz1 = np.where(z1 > 0.0, dh1, 0.0)
    g_w1 = dz1.T @ a1
    return loss, SageGrads(w1=g_w1, w2=g_w2, w_out=g_wout), logits


def _stack_features(graph: BoxGraph) -> np.ndarray:
    missing = [n.node_id for n in graph.nodes if n.features is None]
    if missing:
        raise ValueError(
            f"{len(missing)} nodes have no features (first: {missing[:3]}); "
            "attach a feature cache first"
        )
    return np.stack([n.features for n in graph.nodes]).astype(np.float64)


def forward(
    params: SageParams,
    graph: BoxGraph,
    batch: np.ndarray,
    config: TrainConfig | None = None,
    seed: int = 0,
) -> np.ndarray:
    """Logits for a batch of nodes using raw node features as layer 0."""
    cfg = config or TrainConfig()
    x = _stack_features(graph)
    plan = build_plan(graph.adjacency, batch, cfg.sample_sizes, (seed, 0, 0))
    logits, _ = _forward_plan(params, x, plan)
    return logits


def loss_and_grad(
    params: SageParams,
    graph: BoxGraph,
    batch: np.ndarray,
    labels: np.ndarray,
    config: TrainConfig | None = None,
    seed: int = 0,
) -> tuple[float, SageGrads]:
    """Loss and gradients for a batch; labels index all graph nodes."""
    cfg = config or TrainConfig()
    x = _stack_features(graph)
    batch = np.asarray(batch, dtype=np.int64)
    plan = build_plan(graph.adjacency, batch, cfg.sample_sizes, (seed, 0, 0))
    labels = np.asarray(labels, dtype=np.int64)
    loss, grads, _ = plan_loss_and_grad(params, x, plan, labels[batch])
    return loss, grads


def collapse_to_binary(labels: np.ndarray, vocabulary: ClassVocabulary) -> np.ndarray:
    """Map vocabulary class indices to 0 (polyp) or 1 (artifact)."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= len(vocabulary)):
        raise ValueError("labels out of range for the vocabulary")
    return np.where(labels == vocabulary.polyp_index, 0, 1).astype(np.int64)


def compute_standardizer(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature mean and inverse standard deviation (1 where degenerate)."""
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    scale = np.ones_like(std)
    np.divide(1.0, std, out=scale, where=std > 1e-8)
    return mean, scale


def train(
    graph: BoxGraph,
    labels: np.ndarray,
    config: TrainConfig,
    vocabulary: ClassVocabulary,
    features: np.ndarray | None = None,
) -> tuple[SageModel, list[EpochStats]]:
    """Train a classifier on a labeled graph.

    labels are vocabulary class indices per node; with class_mode "binary"
    they are collapsed to polyp/artifact internally. Features default to the
    node features attached to the graph. Training is deterministic given the
    config seed.
    """
    n = graph.num_nodes
    if n == 0:
        raise ValueError("cannot train on an empty graph")
    x = np.asarray(features, dtype=np.float64) if features is not None else _stack_features(graph)
    if x.shape[0] != n:
        raise ValueError(f"feature matrix has {x.shape[0]} rows for {n} nodes")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise ValueError(f"labels must have shape ({n},), got {labels.shape}")

    if config.class_mode == "binary":
        targets = collapse_to_binary(labels, vocabulary)
        class_names = BINARY_LABELS
    else:
        if labels.min() < 0 or labels.max() >= len(vocabulary):
            raise ValueError("labels out of range for the vocabulary")
        targets = labels
        class_names = vocabulary.labels
    if len(np.unique(targets)) < 2:
        raise ValueError("training set contains a single class; nothing to separate")

    mean, scale = compute_standardizer(x)
    xs = (x - mean) * scale
    params = init_params(x.shape[1], config.hidden_width, len(class_names), config.rng_seed)
    lr = config.learning_rate
    trace: list[EpochStats] = []
    for epoch in range(config.epochs):
        perm = np.random.default_rng([config.rng_seed, 7, epoch]).permutation(n)
        loss_sum = 0.0
        correct = 0
        for batch_idx, lo in enumerate(range(0, n, config.batch_size)):
            chunk = perm[lo : lo + config.batch_size]
            plan = build_plan(
                graph.adjacency,
                chunk,
                config.sample_sizes,
                (config.rng_seed, epoch, batch_idx),
            )
            loss, grads, logits = plan_loss_and_grad(params, xs, plan, targets[chunk])
            params.w1 -= lr * grads.w1
            params.w2 -= lr * grads.w2
            params.w_out -= lr * grads.w_out
            loss_sum += loss * len(chunk)
            correct += int((logits.argmax(axis=1) == targets[chunk]).sum())
        trace.append(EpochStats(epoch=epoch, loss=loss_sum / n, accuracy=correct / n))
    model = SageModel(
        params=params,
        feat_mean=mean,
        feat_scale=scale,
        labels=tuple(class_names),
        class_mode=config.class_mode,
        sample_sizes=config.sample_sizes,
    )
    return model, trace


def predict(
    model: SageModel,
    graph: BoxGraph,
    seed: int = 0,
    features: np.ndarray | None = None,
    chunk_size: int = 4096,
) -> tuple[np.ndarray, np.ndarray]:
    """Classify every node of a graph.

    Neighborhoods use all neighbors up to a cap of 4 * max(sample_sizes) per
    node, sampled deterministically from the seed alone, so results do not
    depend on chunking. Returns (argmax class indices, softmax probabilities);
    ties resolve to the lowest class index.
    """
    n = graph.num_nodes
    if n == 0:
        return np.empty(0, dtype=np.int64), np.empty((0, model.num_classes))
    x = np.asarray(features, dtype=np.float64) if features is not None else _stack_features(graph)
    if x.shape[0] != n:
        raise ValueError(f"feature matrix has {x.shape[0]} rows for {n} nodes")
    if x.shape[1] != model.params.feature_dim:
        raise ValueError(
            f"feature dim {x.shape[1]} does not match model {model.params.feature_dim}"
        )
    xs = model.standardize(x)
    cap = 4 * max(model.sample_sizes)
    probs = np.empty((n, model.num_classes), dtype=np.float64)
    for lo in range(0, n, chunk_size):
        chunk = np.arange(lo, min(lo + chunk_size, n), dtype=np.int64)
        plan = build_plan(graph.adjacency, chunk, (cap, cap), (seed, 0, 0))
        logits, _ = _forward_plan(model.params, xs, plan)
        p, _ = _softmax_rows(logits)
        probs[lo : lo + len(chunk)] = p
    classes = probs.argmax(axis=1).astype(np.int64)
    return classes, probs


def write_trace_csv(path: str | Path, trace: list[EpochStats]) -> None:
    """Write per-epoch loss/accuracy as CSV."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "accuracy"])
        for row in trace:
            writer.writerow([row.epoch, f"{row.loss:.10g}", f"{row.accuracy:.10g}"])


def save_model(path: str | Path, model: SageModel) -> None:
    """Write a model to a binary file.

    Layout: magic "BGSM", u32 version, u32 feature dim, u32 hidden width,
    u32 classes, u32 class mode (0 multiclass, 1 binary), u32 s1, u32 s2,
    u32 label count, length-prefixed UTF-8 labels, then float64
    little-endian arrays: feat_mean, feat_scale, w1, w2, w_out (row-major).
    """
    p = model.params
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(
            struct.pack(
                "<IIIIIIII",
                MODEL_VERSION,
                p.feature_dim,
                p.hidden_width,
                p.num_classes,
                0 if model.class_mode == "multiclass" else 1,
                model.sample_sizes[0],
                model.sample_sizes[1],
                len(model.labels),
            )
        )
        for label in model.labels:
            raw = label.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        for arr in (model.feat_mean, model.feat_scale, p.w1, p.w2, p.w_out):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_model(path: str | Path) -> SageModel:
    """Read a model written by save_model."""
    with open(path, "rb") as fh:
        if fh.read(4) != MODEL_MAGIC:
            raise ValueError(f"{path}: not a model file")
        header = fh.read(32)
        if len(header) != 32:
            raise ValueError(f"{path}: truncated model header")
        version, fdim, hidden, classes, mode_code, s1, s2, label_count = struct.unpack(
            "<IIIIIIII", header
        )
        if version != MODEL_VERSION:
            raise ValueError(f"{path}: unsupported model version {version}")
        if label_count != classes:
            raise ValueError(f"{path}: {label_count} labels for {classes} classes")
        labels = []
        for _ in range(label_count):
            (klen,) = struct.unpack("<I", fh.read(4))
            labels.append(fh.read(klen).decode("utf-8"))

        def read_array(shape: tuple[int, ...]) -> np.ndarray:
            count = int(np.prod(shape))
            payload = fh.read(8 * count)
            if len(payload) != 8 * count:
                raise ValueError(f"{path}: truncated model payload")
            return np.frombuffer(payload, dtype="<f8").reshape(shape).copy()

        feat_mean = read_array((fdim,))
        feat_scale = read_array((fdim,))
        w1 = read_array((hidden, 2 * fdim))
        w2 = read_array((hidden, 2 * hidden))
        w_out = read_array((classes, hidden))
        if fh.read(1):
            raise ValueError(f"{path}: trailing bytes after model payload")
    return SageModel(
        params=SageParams(w1=w1, w2=w2, w_out=w_out),
        feat_mean=feat_mean,
        feat_scale=feat_scale,
        labels=tuple(labels),
        class_mode="multiclass" if mode_code == 0 else "binary",
        sample_sizes=(s1, s2),
    )
