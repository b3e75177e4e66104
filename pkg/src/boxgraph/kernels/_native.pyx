# cython: language_level=3
"""Compiled implementations of the hot kernels.

Mirrors numpy_impl: the pair-keyed hash is bit-identical, the float kernels
use the same operation order so results agree to rounding error.
"""

import numpy as np

cimport cython
from libc.math cimport atan2, floor, fmod, sqrt, M_PI
from libc.stdint cimport int64_t, uint64_t

BACKEND_NAME = "compiled"

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15u
cdef double INV_2_53 = 1.0 / 9007199254740992.0


cdef inline uint64_t c_mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9u
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBu
    return z ^ (z >> 31)


cdef inline double c_pair_uniform(uint64_t seed, uint64_t lo, uint64_t hi) nogil:
    cdef uint64_t x = c_mix64(seed ^ GOLDEN)
    x = c_mix64(x ^ lo)
    x = c_mix64(x ^ hi)
    return <double>(x >> 11) * INV_2_53


def mix64(z):
    """splitmix64 finalizer on a 64-bit integer."""
    return int(c_mix64(<uint64_t>(z & 0xFFFFFFFFFFFFFFFF)))


def pair_uniform(seed, i, j):
    """Deterministic uniform draw in [0, 1) keyed by the unordered pair {i, j}."""
    cdef uint64_t a = <uint64_t>i
    cdef uint64_t b = <uint64_t>j
    if a <= b:
        return c_pair_uniform(<uint64_t>(seed & 0xFFFFFFFFFFFFFFFF), a, b)
    return c_pair_uniform(<uint64_t>(seed & 0xFFFFFFFFFFFFFFFF), b, a)


@cython.boundscheck(False)
@cython.wraparound(False)
def resize_patch(double[:, ::1] gray, double x0, double y0, double w, double h, int size):
    """Bilinearly resample the (x0, y0, w, h) region of a grayscale image."""
    cdef int height = gray.shape[0]
    cdef int width = gray.shape[1]
    out_arr = np.empty((size, size), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double sx, sy, fx, fy, top, bot
    cdef double step_x = w / size
    cdef double step_y = h / size
    cdef int r, c, ix0, iy0, ix1, iy1
    with nogil:
        for r in range(size):
            sy = y0 + (r + 0.5) * step_y - 0.5
            if sy < 0.0:
                sy = 0.0
            if sy > height - 1.0:
                sy = height - 1.0
            iy0 = <int>floor(sy)
            fy = sy - iy0
            iy1 = iy0 + 1
            if iy1 > height - 1:
                iy1 = height - 1
            for c in range(size):
                sx = x0 + (c + 0.5) * step_x - 0.5
                if sx < 0.0:
                    sx = 0.0
                if sx > width - 1.0:
                    sx = width - 1.0
                ix0 = <int>floor(sx)
                fx = sx - ix0
                ix1 = ix0 + 1
                if ix1 > width - 1:
                    ix1 = width - 1
                top = (1.0 - fx) * gray[iy0, ix0] + fx * gray[iy0, ix1]
                bot = (1.0 - fx) * gray[iy1, ix0] + fx * gray[iy1, ix1]
                out[r, c] = (1.0 - fy) * top + fy * bot
    return out_arr


@cython.boundscheck(False)
@cython.wraparound(False)
def hog_descriptor(double[:, ::1] patch, int cell_size, int block_cells,
                   int block_stride, int bins, double clip, double eps):
    """Oriented-gradient descriptor of a square patch."""
    cdef int size = patch.shape[0]
    cdef int n_cells = size // cell_size
    cdef int blocks_per_side = (n_cells - block_cells) // block_stride + 1
    cdef int block_len = block_cells * block_cells * bins

    hist_arr = np.zeros((n_cells, n_cells, bins), dtype=np.float64)
    cdef double[:, :, ::1] hist = hist_arr
    out_arr = np.empty(blocks_per_side * blocks_per_side * block_len, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double scale = bins / M_PI
    cdef double eps2 = eps * eps
    cdef double gx, gy, mag, theta, t, pos, frac, acc, norm
    cdef int i, j, jl, jr, il, ir, b0, b1, cr, cc
    cdef int br, bc, r0, c0, u, v, k, m

    with nogil:
        for i in range(size):
            il = i - 1 if i > 0 else 0
            ir = i + 1 if i < size - 1 else size - 1
            cr = i // cell_size
            for j in range(size):
                jl = j - 1 if j > 0 else 0
                jr = j + 1 if j < size - 1 else size - 1
                gx = (patch[i, jr] - patch[i, jl]) * 0.5
                gy = (patch[ir, j] - patch[il, j]) * 0.5
                mag = sqrt(gx * gx + gy * gy)
                theta = atan2(gy, gx)
                t = fmod(theta, M_PI)
                if t < 0.0:
                    t += M_PI
                pos = t * scale
                b0 = <int>floor(pos)
                frac = pos - b0
                if b0 >= bins:
                    b0 -= bins
                b1 = b0 + 1
                if b1 >= bins:
                    b1 -= bins
                cc = j // cell_size
                hist[cr, cc, b0] += mag * (1.0 - frac)
                hist[cr, cc, b1] += mag * frac

        k = 0
        for br in range(blocks_per_side):
            r0 = br * block_stride
            for bc in range(blocks_per_side):
                c0 = bc * block_stride
                acc = 0.0
                for u in range(block_cells):
                    for v in range(block_cells):
                        for m in range(bins):
                            t = hist[r0 + u, c0 + v, m]
                            acc += t * t
                norm = sqrt(acc + eps2)
                acc = 0.0
                for u in range(block_cells):
                    for v in range(block_cells):
                        for m in range(bins):
                            t = hist[r0 + u, c0 + v, m] / norm
                            if t > clip:
                                t = clip
                            out[k] = t
                            acc += t * t
                            k += 1
                norm = sqrt(acc + eps2)
                for m in range(k - block_len, k):
                    out[m] /= norm
    return out_arr


@cython.boundscheck(False)
@cython.wraparound(False)
def edge_pairs(long long[::1] frame_idx, long long[::1] video_idx,
               long long[::1] class_idx, unsigned char[::1] polyp_flag,
               double[:, ::1] boxes,
               bint use_random, bint use_overlap, bint use_same_class,
               bint use_binary, double iou_threshold, double random_p,
               bint video_scope, seed):
    """All connected unordered pairs (i, j), i < j, as an (m, 2) int64 array."""
    cdef Py_ssize_t n = frame_idx.shape[0]
    cdef uint64_t useed = <uint64_t>(seed & 0xFFFFFFFFFFFFFFFF)
    if n < 2:
        return np.empty((0, 2), dtype=np.int64)

    cdef Py_ssize_t cap = 4 * n + 16
    buf_arr = np.empty((cap, 2), dtype=np.int64)
    cdef int64_t[:, ::1] buf = buf_arr
    cdef Py_ssize_t m = 0

    cdef Py_ssize_t i, j
    cdef bint same_frame, allowed, conn
    cdef double ax0, ay0, ax1, ay1, aarea
    cdef double ix, iy, inter, union
    cdef double[:, ::1] b = boxes

    for i in range(n - 1):
        ax0 = b[i, 0]
        ay0 = b[i, 1]
        ax1 = b[i, 2]
        ay1 = b[i, 3]
        aarea = (ax1 - ax0) * (ay1 - ay0)
        for j in range(i + 1, n):
            same_frame = frame_idx[i] == frame_idx[j]
            if video_scope:
                allowed = same_frame or (video_idx[i] == video_idx[j])
            else:
                allowed = True
            conn = False
            if use_overlap and same_frame:
                ix = min(ax1, b[j, 2]) - max(ax0, b[j, 0])
                iy = min(ay1, b[j, 3]) - max(ay0, b[j, 1])
                inter = ix * iy if (ix > 0.0 and iy > 0.0) else 0.0
                union = aarea + (b[j, 2] - b[j, 0]) * (b[j, 3] - b[j, 1]) - inter
                if inter > iou_threshold * union:
                    conn = True
                elif (b[j, 0] >= ax0 and b[j, 1] >= ay0
                        and b[j, 2] <= ax1 and b[j, 3] <= ay1):
                    conn = True
                elif (ax0 >= b[j, 0] and ay0 >= b[j, 1]
                        and ax1 <= b[j, 2] and ay1 <= b[j, 3]):
                    conn = True
            if not conn and allowed:
                if use_same_class and class_idx[i] == class_idx[j]:
                    conn = True
                elif use_binary and polyp_flag[i] == polyp_flag[j]:
                    conn = True
                elif use_random and c_pair_uniform(useed, <uint64_t>i, <uint64_t>j) < random_p:
                    conn = True
            if conn:
                if m == cap:
                    cap = cap * 2
                    new_arr = np.empty((cap, 2), dtype=np.int64)
                    new_arr[:m] = buf_arr[:m]
                    buf_arr = new_arr
                    buf = buf_arr
                buf[m, 0] = i
                buf[m, 1] = j
                m += 1
    return buf_arr[:m].copy()
