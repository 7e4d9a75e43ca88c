"""Kernel backend selection.

The compiled extension is preferred when importable; the numpy
implementation is the fallback. ``RFFID_NN_BACKEND`` forces a choice
("cython" or "numpy"); "auto" (default) picks the extension if present.
Both backends satisfy the same contracts and agree to floating rounding,
but summation order differs, so cross-backend results are close rather
than bit-identical. A single backend is always bit-deterministic.
"""

from __future__ import annotations

import os

from . import kernels_numpy
from ..errors import ConfigError


def _load(choice: str):
    if choice == "numpy":
        return kernels_numpy
    try:
        from . import _kernels  # compiled extension, built by setup.py

        return _kernels
    except ImportError:
        if choice == "cython":
            raise ConfigError(
                "RFFID_NN_BACKEND=cython but the compiled extension is not built"
            )
        return kernels_numpy


_active = _load(os.environ.get("RFFID_NN_BACKEND", "auto"))


def active():
    """The kernel module currently in use."""
    return _active


def active_name() -> str:
    return _active.NAME


def set_backend(name: str) -> None:
    """Switch backends at runtime (used by tests and benchmarks)."""
    if name not in ("auto", "cython", "numpy"):
        raise ConfigError(f"unknown backend {name!r}")
    global _active
    _active = _load(name)
