"""Kernel backend selection.

The compiled module is used when it imports; set ``CHAINPLAN_BACKEND=python`` to
force the numpy fallback (or ``cython`` to make a missing extension an error).
"""

from __future__ import annotations

import os

from . import _pykernels

_requested = os.environ.get("CHAINPLAN_BACKEND", "auto").lower()

if _requested == "python":
    kernels = _pykernels
else:
    try:
        from . import _ckernels as kernels  # type: ignore[no-redef]
    except ImportError:
        if _requested == "cython":
            raise
        kernels = _pykernels

BACKEND: str = kernels.BACKEND


def get(name: str):
    """Return kernel module by backend name ('python' or 'cython')."""
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
