"""Numpy implementations of the hot kernels.

These are the reference/fallback versions of the routines that the compiled
extension accelerates: bilinear patch resampling, the oriented-gradient
descriptor, the pairwise edge predicate sweep, and the pair-keyed hash RNG.
Both backends must agree: the hash is integer-exact, the float kernels agree
to rounding error.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """splitmix64 finalizer on a 64-bit integer."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def pair_uniform(seed: int, i: int, j: int) -> float:
    """Deterministic uniform draw in [0, 1) keyed by the unordered pair {i, j}."""
    lo, hi = (i, j) if i <= j else (j, i)
    x = mix64((seed & _MASK) ^ _GOLDEN)
    x = mix64(x ^ lo)
    x = mix64(x ^ hi)
    return (x >> 11) * 2.0**-53


def _mix64_arr(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def pair_uniform_matrix(seed: int, ids_i: np.ndarray, ids_j: np.ndarray) -> np.ndarray:
    """Vectorized pair_uniform over the broadcast of ids_i x ids_j."""
    lo = np.minimum(ids_i[:, None], ids_j[None, :]).astype(np.uint64)
    hi = np.maximum(ids_i[:, None], ids_j[None, :]).astype(np.uint64)
    base = np.uint64(mix64((seed & _MASK) ^ _GOLDEN))
    x = _mix64_arr(base ^ lo)
    x = _mix64_arr(x ^ hi)
    return (x >> np.uint64(11)).astype(np.float64) * 2.0**-53


def resize_patch(gray: np.ndarray, x0: float, y0: float, w: float, h: float, size: int) -> np.ndarray:
    """Bilinearly resample the (x0, y0, w, h) region of a grayscale image.

    Output pixel centers map to source coordinates with half-pixel alignment;
    source pixel centers sit at integer coordinates and indices clamp at the
    image border.
    """
    height, width = gray.shape
    rr = np.arange(size, dtype=np.float64)
    sx = x0 + (rr + 0.5) * (w / size) - 0.5
    sy = y0 + (rr + 0.5) * (h / size) - 0.5
    sx = np.clip(sx, 0.0, width - 1.0)
    sy = np.clip(sy, 0.0, height - 1.0)
    ix0 = np.floor(sx).astype(np.int64)
    iy0 = np.floor(sy).astype(np.int64)
    fx = sx - ix0
    fy = sy - iy0
    ix1 = np.minimum(ix0 + 1, width - 1)
    iy1 = np.minimum(iy0 + 1, height - 1)

    g00 = gray[iy0[:, None], ix0[None, :]]
    g01 = gray[iy0[:, None], ix1[None, :]]
    g10 = gray[iy1[:, None], ix0[None, :]]
    g11 = gray[iy1[:, None], ix1[None, :]]
    fxr = fx[None, :]
    fyr = fy[:, None]
    top = (1.0 - fxr) * g00 + fxr * g01
    bot = (1.0 - fxr) * g10 + fxr * g11
    return (1.0 - fyr) * top + fyr * bot


def hog_descriptor(
    patch: np.ndarray,
    cell_size: int,
    block_cells: int,
    block_stride: int,
    bins: int,
    clip: float,
    eps: float,
) -> np.ndarray:
    """Oriented-gradient descriptor of a square patch.

    Central-difference gradients with replicated edges, unsigned orientations
    split linearly between the two nearest bins, per-cell histograms, then
    overlapping blocks normalized L2, clipped, and renormalized.
    """
    size = patch.shape[0]
    p = np.asarray(patch, dtype=np.float64)

    gx = np.empty_like(p)
    gx[:, 1:-1] = (p[:, 2:] - p[:, :-2]) * 0.5
    gx[:, 0] = (p[:, 1] - p[:, 0]) * 0.5
    gx[:, -1] = (p[:, -1] - p[:, -2]) * 0.5
    gy = np.empty_like(p)
    gy[1:-1, :] = (p[2:, :] - p[:-2, :]) * 0.5
    gy[0, :] = (p[1, :] - p[0, :]) * 0.5
    gy[-1, :] = (p[-1, :] - p[-2, :]) * 0.5

    mag = np.sqrt(gx * gx + gy * gy)
    theta = np.arctan2(gy, gx)
    theta = np.mod(theta, np.pi)  # unsigned orientation in [0, pi)

    pos = theta * (bins / np.pi)
    b0 = np.floor(pos).astype(np.int64)
    frac = pos - b0
    b0[b0 >= bins] -= bins  # pos may round up to exactly `bins`
    b1 = b0 + 1
    b1[b1 >= bins] -= bins

    n_cells = size // cell_size
    cell_idx = (
        (np.arange(size) // cell_size)[:, None] * n_cells
        + (np.arange(size) // cell_size)[None, :]
    )
    hist = np.zeros((n_cells * n_cells, bins), dtype=np.float64)
    np.add.at(hist, (cell_idx.ravel(), b0.ravel()), (mag * (1.0 - frac)).ravel())
    np.add.at(hist, (cell_idx.ravel(), b1.ravel()), (mag * frac).ravel())
    hist = hist.reshape(n_cells, n_cells, bins)

    blocks_per_side = (n_cells - block_cells) // block_stride + 1
    block_len = block_cells * block_cells * bins
    out = np.empty(blocks_per_side * blocks_per_side * block_len, dtype=np.float64)
    k = 0
    eps2 = eps * eps
    for br in range(blocks_per_side):
        r0 = br * block_stride
        for bc in range(blocks_per_side):
            c0 = bc * block_stride
            v = hist[r0 : r0 + block_cells, c0 : c0 + block_cells, :].ravel().copy()
            v /= np.sqrt(np.dot(v, v) + eps2)
            np.minimum(v, clip, out=v)
            v /= np.sqrt(np.dot(v, v) + eps2)
            out[k : k + block_len] = v
            k += block_len
    return out


def edge_pairs(
    frame_idx: np.ndarray,
    video_idx: np.ndarray,
    class_idx: np.ndarray,
    polyp_flag: np.ndarray,
    boxes: np.ndarray,
    use_random: bool,
    use_overlap: bool,
    use_same_class: bool,
    use_binary: bool,
    iou_threshold: float,
    random_p: float,
    video_scope: bool,
    seed: int,
) -> np.ndarray:
    """All connected unordered pairs (i, j), i < j, as an (m, 2) int64 array.

    boxes is (n, 4) float64 rows (x_min, y_min, x_max, y_max). Inter-frame
    pairs under the random/same-class/binary criteria require same video when
    video_scope is set; overlap applies in-frame only.
    """
    n = len(frame_idx)
    if n < 2:
        return np.empty((0, 2), dtype=np.int64)
    x0, y0, x1, y1 = boxes[:, 0], boxes[:, 1], boxes[:, 2], boxes[:, 3]
    area = (x1 - x0) * (y1 - y0)
    ids = np.arange(n, dtype=np.int64)

    chunks = []
    block = max(1, min(n, 2_000_000 // max(n, 1)))
    for i0 in range(0, n, block):
        i1 = min(i0 + block, n)
        rows = slice(i0, i1)
        upper = ids[None, :] > ids[rows, None]

        same_frame = frame_idx[rows, None] == frame_idx[None, :]
        if video_scope:
            allowed = same_frame | (video_idx[rows, None] == video_idx[None, :])
        else:
            allowed = np.ones_like(same_frame)

        conn = np.zeros_like(same_frame)
        if use_overlap:
            ix = np.minimum(x1[rows, None], x1[None, :]) - np.maximum(x0[rows, None], x0[None, :])
            iy = np.minimum(y1[rows, None], y1[None, :]) - np.maximum(y0[rows, None], y0[None, :])
            inter = np.where((ix > 0) & (iy > 0), ix * iy, 0.0)
            union = area[rows, None] + area[None, :] - inter
            overlaps = inter > iou_threshold * union
            cont_ij = (
                (x0[None, :] >= x0[rows, None])
                & (y0[None, :] >= y0[rows, None])
                & (x1[None, :] <= x1[rows, None])
                & (y1[None, :] <= y1[rows, None])
            )
            cont_ji = (
                (x0[rows, None] >= x0[None, :])
                & (y0[rows, None] >= y0[None, :])
                & (x1[rows, None] <= x1[None, :])
                & (y1[rows, None] <= y1[None, :])
            )
            conn |= same_frame & (overlaps | cont_ij | cont_ji)
        if use_same_class:
            conn |= allowed & (class_idx[rows, None] == class_idx[None, :])
        if use_binary:
            conn |= allowed & (polyp_flag[rows, None] == polyp_flag[None, :])
        if use_random:
            u = pair_uniform_matrix(seed, ids[rows], ids)
            conn |= allowed & (u < random_p)

        conn &= upper
        ri, rj = np.nonzero(conn)
        if len(ri):
            chunks.append(np.stack([ri + i0, rj], axis=1))
    if not chunks:
        return np.empty((0, 2), dtype=np.int64)
    return np.concatenate(chunks, axis=0).astype(np.int64)
