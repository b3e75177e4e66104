"""Time the compiled kernels against the numpy fallback.

Runs the three array kernels (patch resize, descriptor, edge enumeration)
and the scalar pair hash on both backends, checks that the outputs agree,
and prints per-call timings with the speedup of the compiled path.

Usage: python3 benchmarks/bench_backends.py [--repeats N] [--nodes N]
"""

import argparse
import time

import numpy as np

from boxgraph.kernels import compiled_available, get_kernels


def time_call(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def make_workloads(nodes):
    rng = np.random.default_rng(0)
    image = rng.random((256, 256))
    patch = rng.random((64, 64))
    frame_idx = rng.integers(0, 12, nodes).astype(np.int64)
    video_idx = (frame_idx // 4).astype(np.int64)
    class_idx = rng.integers(0, 7, nodes).astype(np.int64)
    polyp_flag = (class_idx == 0).astype(np.uint8)
    xy = rng.uniform(0, 200, (nodes, 2))
    wh = rng.uniform(8, 40, (nodes, 2))
    boxes = np.hstack([xy, xy + wh]).astype(np.float64)

    def resize(k):
        return k.resize_patch(image, 13.5, 22.0, 140.0, 120.0, 64)

    def descriptor(k):
        return k.hog_descriptor(patch, 8, 2, 1, 9, 0.2, 1e-6)

    def edges(k):
        return k.edge_pairs(
            frame_idx, video_idx, class_idx, polyp_flag, boxes,
            True, True, False, True, 0.25, 0.1, True, 42,
        )

    def pair_hash(k):
        return [k.pair_uniform(7, i, i + 1) for i in range(2000)]

    return [
        ("resize_patch 64x64", resize),
        ("hog_descriptor", descriptor),
        (f"edge_pairs n={nodes}", edges),
        ("pair_uniform x2000", pair_hash),
    ]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=20)
    parser.add_argument("--nodes", type=int, default=400)
    args = parser.parse_args()

    python = get_kernels("python")
    if not compiled_available():
        print("compiled backend not available; timing the numpy fallback only")
        for name, fn in make_workloads(args.nodes):
            print(f"{name:22s} python {time_call(lambda: fn(python), args.repeats) * 1e3:8.3f} ms")
        return

    compiled = get_kernels("compiled")
    print(f"{'kernel':22s} {'python':>10s} {'compiled':>10s} {'speedup':>8s}")
    for name, fn in make_workloads(args.nodes):
        got = fn(compiled)
        want = fn(python)
        np.testing.assert_allclose(np.asarray(got), np.asarray(want), rtol=1e-10, atol=0)
        t_py = time_call(lambda: fn(python), args.repeats)
        t_c = time_call(lambda: fn(compiled), args.repeats)
        print(
            f"{name:22s} {t_py * 1e3:8.3f} ms {t_c * 1e3:8.3f} ms {t_py / t_c:7.1f}x"
        )


if __name__ == "__main__":
    main()
