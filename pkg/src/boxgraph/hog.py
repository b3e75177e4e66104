"""Appearance features for detection boxes.

Each box is cropped from its frame, resampled to a fixed-size grayscale
patch, and summarized by a histogram-of-oriented-gradients descriptor. A
small binary cache format stores descriptors keyed by detection.
"""

from __future__ import annotations

import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import kernels
from .datasets import Dataset, Detection, FrameRecord, resolve_image_path
from .geometry import BoundingBox

logger = logging.getLogger(__name__)

CACHE_MAGIC = b"BGHF"
CACHE_VERSION = 1

# Luma weights for RGB -> grayscale.
_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float64)


@dataclass(frozen=True)
class HogConfig:
    """Descriptor layout parameters.

    Defaults give a 64x64 patch, 8x8-pixel cells, 2x2-cell blocks sliding
    one cell at a time, and 9 unsigned orientation bins: 7*7 blocks of 36
    values, a 1764-dimensional descriptor.
    """

    patch_size: int = 64
    cell_size: int = 8
    block_cells: int = 2
    block_stride: int = 1
    orientation_bins: int = 9
    clip: float = 0.2
    epsilon: float = 1e-6

    def __post_init__(self) -> None:
        if self.patch_size < 2:
            raise ValueError("patch_size must be at least 2")
        if self.cell_size < 1 or self.patch_size % self.cell_size != 0:
            raise ValueError("cell_size must divide patch_size")
        n_cells = self.patch_size // self.cell_size
        if not 1 <= self.block_cells <= n_cells:
            raise ValueError("block_cells must fit in the cell grid")
        if self.block_stride < 1:
            raise ValueError("block_stride must be positive")
        if (n_cells - self.block_cells) % self.block_stride != 0:
            raise ValueError("block grid must tile the cell grid exactly")
        if self.orientation_bins < 2:
            raise ValueError("orientation_bins must be at least 2")
        if not 0.0 < self.clip <= 1.0:
            raise ValueError("clip must be in (0, 1]")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")

    @property
    def cells_per_side(self) -> int:
        return self.patch_size // self.cell_size

    @property
    def blocks_per_side(self) -> int:
        return (self.cells_per_side - self.block_cells) // self.block_stride + 1

    @property
    def descriptor_length(self) -> int:
        block = self.block_cells * self.block_cells * self.orientation_bins
        return self.blocks_per_side * self.blocks_per_side * block


def load_image(path: str | Path) -> np.ndarray:
    """Load an image file as a uint8 array, (H, W) or (H, W, 3)."""
    with Image.open(path) as img:
        if img.mode not in ("L", "RGB"):
            img = img.convert("RGB")
        return np.asarray(img, dtype=np.uint8)


def to_grayscale(image: np.ndarray) -> np.ndarray:
    """Convert an image array to float64 grayscale in [0, 1].

    Accepts uint8 or float input, 2-D grayscale or 3-channel RGB. Color is
    reduced with luma weights 0.299/0.587/0.114.
    """
    arr = np.asarray(image)
    was_uint8 = arr.dtype == np.uint8
    if arr.ndim == 3:
        if arr.shape[2] != 3:
            raise ValueError(f"expected 3 channels, got {arr.shape[2]}")
        arr = arr.astype(np.float64) @ _LUMA
    elif arr.ndim == 2:
        arr = arr.astype(np.float64)
    else:
        raise ValueError(f"expected a 2-D or 3-D image array, got shape {arr.shape}")
    if was_uint8:
        arr = arr / 255.0
    gray = np.ascontiguousarray(arr, dtype=np.float64)
    if gray.size == 0:
        raise ValueError("image is empty")
    if not np.all(np.isfinite(gray)):
        raise ValueError("image contains non-finite values")
    if gray.min() < 0.0 or gray.max() > 1.0:
        raise ValueError("grayscale values must lie in [0, 1]")
    return gray


def crop_resize(gray: np.ndarray, bbox: BoundingBox, size: int = 64) -> np.ndarray:
    """Crop a box region from a grayscale frame and resample it to size x size.

    Sampling uses bilinear interpolation with half-pixel alignment and border
    clamping. The box must intersect the frame.
    """
    height, width = gray.shape
    bbox.clipped(float(width), float(height))  # raises when fully outside
    return kernels.resize_patch(
        np.ascontiguousarray(gray, dtype=np.float64),
        bbox.x_min,
        bbox.y_min,
        bbox.width,
        bbox.height,
        size,
    )


def hog(patch: np.ndarray, config: HogConfig | None = None) -> np.ndarray:
    """Descriptor for a square grayscale patch with values in [0, 1]."""
    cfg = config or HogConfig()
    arr = np.ascontiguousarray(patch, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"patch must be square, got shape {arr.shape}")
    if arr.shape[0] != cfg.patch_size:
        raise ValueError(f"patch size {arr.shape[0]} does not match config {cfg.patch_size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("patch contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("patch values must lie in [0, 1]")
    return kernels.hog_descriptor(
        arr,
        cfg.cell_size,
        cfg.block_cells,
        cfg.block_stride,
        cfg.orientation_bins,
        cfg.clip,
        cfg.epsilon,
    )


def detection_key(frame_id: str, ordinal: int) -> str:
    """Stable cache key for the ordinal-th detection of a frame."""
    return f"{frame_id}#{ordinal}"


def _frame_features(
    frame: FrameRecord,
    detections: list[Detection],
    image_root: Path,
    cfg: HogConfig,
) -> list[tuple[str, np.ndarray]]:
    path = resolve_image_path(image_root, frame)
    gray = to_grayscale(load_image(path))
    out = []
    for ordinal, det in enumerate(detections):
        patch = crop_resize(gray, det.bbox, cfg.patch_size)
        out.append((detection_key(frame.frame_id, ordinal), hog(patch, cfg)))
    return out


def extract_features(
    dataset: Dataset,
    image_root: str | Path,
    config: HogConfig | None = None,
    threads: int = 1,
) -> dict[str, np.ndarray]:
    """Compute descriptors for every detection in a dataset.

    Returns a dict keyed by "<frame_id>#<ordinal>" where the ordinal is the
    detection's position within its frame's detection list. Frames without
    detections are skipped without touching their image files.
    """
    cfg = config or HogConfig()
    root = Path(image_root)
    work = [
        (frame, dataset.detections_for(frame.frame_id))
        for frame in dataset.frames
        if dataset.detections_for(frame.frame_id)
    ]
    features: dict[str, np.ndarray] = {}
    if threads > 1 and len(work) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = pool.map(
                lambda item: _frame_features(item[0], item[1], root, cfg), work
            )
            for chunk in results:
                features.update(chunk)
    else:
        for frame, dets in work:
            features.update(_frame_features(frame, dets, root, cfg))
    logger.info("extracted %d descriptors from %d frames", len(features), len(work))
    return features


def write_feature_cache(path: str | Path, features: dict[str, np.ndarray]) -> None:
    """Write descriptors to a binary cache file.

    Layout: magic "BGHF", u32 version, u32 descriptor dim, u64 record count,
    then per record a u32-length-prefixed UTF-8 key and dim float32 values.
    All integers and floats are little-endian. Records are written in sorted
    key order so equal inputs produce identical bytes.
    """
    if not features:
        raise ValueError("refusing to write an empty feature cache")
    dims = {len(v) for v in features.values()}
    if len(dims) != 1:
        raise ValueError(f"inconsistent descriptor lengths: {sorted(dims)}")
    dim = dims.pop()
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<IIQ", CACHE_VERSION, dim, len(features)))
        for key in sorted(features):
            raw = key.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(np.asarray(features[key], dtype="<f4").tobytes())


def read_feature_cache(path: str | Path) -> dict[str, np.ndarray]:
    """Read a descriptor cache written by write_feature_cache.

    Descriptors come back as float64 (values pass through float32 storage).
    """
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CACHE_MAGIC:
            raise ValueError(f"not a feature cache file: bad magic {magic!r}")
        header = fh.read(16)
        if len(header) != 16:
            raise ValueError("truncated feature cache header")
        version, dim, count = struct.unpack("<IIQ", header)
        if version != CACHE_VERSION:
            raise ValueError(f"unsupported feature cache version {version}")
        features: dict[str, np.ndarray] = {}
        for _ in range(count):
            klen_raw = fh.read(4)
            if len(klen_raw) != 4:
                raise ValueError("truncated feature cache record")
            (klen,) = struct.unpack("<I", klen_raw)
            key = fh.read(klen).decode("utf-8")
            payload = fh.read(4 * dim)
            if len(payload) != 4 * dim:
                raise ValueError(f"truncated descriptor for key {key!r}")
            features[key] = np.frombuffer(payload, dtype="<f4").astype(np.float64)
        return features
