"""Kernel backend selection.

Two interchangeable backends implement the hot kernels: a compiled extension
and a pure-numpy fallback. The BOXGRAPH_BACKEND environment variable picks
one: "compiled", "python", or "auto" (default; compiled when available).
"""

from __future__ import annotations

import os

from . import numpy_impl

try:
    from . import _native
except ImportError:  # extension not built
    _native = None

def compiled_available() -> bool:
    """Whether the compiled extension was built and imports cleanly."""
    return _native is not None


def _select():
    choice = os.environ.get("BOXGRAPH_BACKEND", "auto").strip().lower()
    if choice not in ("auto", "compiled", "python"):
        raise RuntimeError(
            f"BOXGRAPH_BACKEND must be 'auto', 'compiled', or 'python', got {choice!r}"
        )
    if choice == "python":
        return numpy_impl
    if choice == "compiled":
        if _native is None:
            raise RuntimeError(
                "BOXGRAPH_BACKEND=compiled but the compiled extension is not available"
            )
        return _native
    return _native if _native is not None else numpy_impl


_active = _select()


def active_backend() -> str:
    """Name of the backend in use: 'compiled' or 'python'."""
    return _active.BACKEND_NAME


def get_kernels(backend: str | None = None):
    """Return the kernel module for a backend (active one by default)."""
    if backend is None:
        return _active
    if backend == "python":
        return numpy_impl
    if backend == "compiled":
        if _native is None:
            raise RuntimeError("compiled backend is not available")
        return _native
    raise ValueError(f"unknown backend {backend!r}")


mix64 = _active.mix64
pair_uniform = _active.pair_uniform
resize_patch = _active.resize_patch
hog_descriptor = _active.hog_descriptor
edge_pairs = _active.edge_pairs
