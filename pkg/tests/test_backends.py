"""Compiled and pure-python kernel backends must agree."""

import os
import subprocess
import sys

import numpy as np
import pytest

from boxgraph import kernels

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

needs_compiled = pytest.mark.skipif(
    not kernels.compiled_available(), reason="compiled extension not built"
)


def reference_splitmix64(seed, count):
    """The published splitmix64 generator, written out step by step."""
    state = seed & MASK
    out = []
    for _ in range(count):
        state = (state + 0x9E3779B97F4A7C15) & MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        out.append(z ^ (z >> 31))
    return out


class TestMix64:
    def test_reference_stream(self):
        # mix64(k * golden) reproduces the splitmix64 stream seeded at 0
        want = reference_splitmix64(0, 5)
        got = [kernels.mix64((k * GOLDEN) & MASK) for k in range(1, 6)]
        assert got == want

    def test_known_first_output(self):
        # first output of splitmix64(seed=0), a published test value
        assert kernels.mix64(GOLDEN) == 0xE220A8397B1DCDAF

    @needs_compiled
    def test_backends_agree(self):
        py = kernels.get_kernels("python")
        co = kernels.get_kernels("compiled")
        rng = np.random.default_rng(0)
        values = [0, 1, MASK, GOLDEN] + [int(v) for v in rng.integers(0, MASK, 200, dtype=np.uint64)]
        for v in values:
            assert py.mix64(v) == co.mix64(v)


class TestPairUniform:
    def test_range_and_symmetry(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            seed = int(rng.integers(0, 2**31))
            i, j = int(rng.integers(0, 10**6)), int(rng.integers(0, 10**6))
            u = kernels.pair_uniform(seed, i, j)
            assert 0.0 <= u < 1.0
            assert u == kernels.pair_uniform(seed, j, i)

    def test_matches_mix64_chain(self):
        seed, i, j = 42, 17, 5
        x = kernels.mix64((seed & MASK) ^ GOLDEN)
        x = kernels.mix64(x ^ min(i, j))
        x = kernels.mix64(x ^ max(i, j))
        want = (x >> 11) * 2.0**-53
        assert kernels.pair_uniform(seed, i, j) == want

    def test_seed_sensitivity(self):
        assert kernels.pair_uniform(0, 1, 2) != kernels.pair_uniform(1, 1, 2)

    @needs_compiled
    def test_backends_agree(self):
        py = kernels.get_kernels("python")
        co = kernels.get_kernels("compiled")
        rng = np.random.default_rng(2)
        for _ in range(300):
            seed = int(rng.integers(0, 2**63))
            i, j = int(rng.integers(0, 2**31)), int(rng.integers(0, 2**31))
            assert py.pair_uniform(seed, i, j) == co.pair_uniform(seed, i, j)


@needs_compiled
class TestArrayKernelsAgree:
    def test_resize_patch(self):
        py = kernels.get_kernels("python")
        co = kernels.get_kernels("compiled")
        rng = np.random.default_rng(3)
        for _ in range(20):
            gray = rng.random((rng.integers(20, 80), rng.integers(20, 80)))
            h, w = gray.shape
            x0 = float(rng.uniform(0, w - 10))
            y0 = float(rng.uniform(0, h - 10))
            bw = float(rng.uniform(4, w - x0))
            bh = float(rng.uniform(4, h - y0))
            a = py.resize_patch(gray, x0, y0, bw, bh, 64)
            b = co.resize_patch(gray, x0, y0, bw, bh, 64)
            np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-13)

    def test_hog_descriptor(self):
        py = kernels.get_kernels("python")
        co = kernels.get_kernels("compiled")
        rng = np.random.default_rng(4)
        for _ in range(10):
            patch = rng.random((64, 64))
            a = py.hog_descriptor(patch, 8, 2, 1, 9, 0.2, 1e-6)
            b = co.hog_descriptor(patch, 8, 2, 1, 9, 0.2, 1e-6)
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)

    def test_edge_pairs(self):
        py = kernels.get_kernels("python")
        co = kernels.get_kernels("compiled")
        rng = np.random.default_rng(5)
        for trial in range(25):
            n = int(rng.integers(2, 120))
            frame_idx = rng.integers(0, 6, n)
            video_idx = rng.integers(0, 3, n)
            class_idx = rng.integers(0, 4, n)
            polyp_flag = (class_idx == 0).astype(np.uint8)
            x0 = rng.uniform(0, 150, n)
            y0 = rng.uniform(0, 150, n)
            boxes = np.column_stack(
                [x0, y0, x0 + rng.uniform(5, 60, n), y0 + rng.uniform(5, 60, n)]
            )
            flags = [bool(int(b)) for b in np.binary_repr(trial % 16, 4)]
            if not any(flags):
                flags = [False, True, False, True]
            args = (
                frame_idx.astype(np.int64),
                video_idx.astype(np.int64),
                class_idx.astype(np.int64),
                polyp_flag,
                boxes.astype(np.float64),
                flags[0],
                flags[1],
                flags[2],
                flags[3],
                0.3,
                0.4,
                bool(trial % 2),
                trial,
            )
            np.testing.assert_array_equal(py.edge_pairs(*args), co.edge_pairs(*args))


class TestSelection:
    def test_active_backend_name(self):
        assert kernels.active_backend() in ("compiled", "python")

    def test_get_kernels(self):
        assert kernels.get_kernels() is kernels.get_kernels(kernels.active_backend())
        assert kernels.get_kernels("python").BACKEND_NAME == "python"
        with pytest.raises(ValueError, match="unknown backend"):
            kernels.get_kernels("fortran")

    def _spawn(self, backend):
        env = dict(os.environ, BOXGRAPH_BACKEND=backend)
        return subprocess.run(
            [sys.executable, "-c",
             "import boxgraph.kernels as k; print(k.active_backend())"],
            capture_output=True,
            text=True,
            env=env,
        )

    def test_env_selects_python(self):
        proc = self._spawn("python")
        assert proc.returncode == 0
        assert proc.stdout.strip() == "python"

    @needs_compiled
    def test_env_selects_compiled(self):
        proc = self._spawn("compiled")
        assert proc.returncode == 0
        assert proc.stdout.strip() == "compiled"

    def test_env_auto(self):
        proc = self._spawn("auto")
        assert proc.returncode == 0
        want = "compiled" if kernels.compiled_available() else "python"
        assert proc.stdout.strip() == want

    def test_env_rejects_unknown(self):
        proc = self._spawn("cuda")
        assert proc.returncode != 0
        assert "BOXGRAPH_BACKEND" in proc.stderr
