"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
fallback. Setting ``BANDITFOREST_BACKEND=python`` forces the fallback.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _fallback


def _load_compiled() -> ModuleType | None:
    try:
        from . import _kernels
    except ImportError:
        return None
    return _kernels


_compiled = _load_compiled()

if os.environ.get("BANDITFOREST_BACKEND", "").lower() == "python" or _compiled is None:
    kernels: ModuleType = _fallback
    BACKEND = "python"
else:
    kernels = _compiled
    BACKEND = "compiled"


def get_kernels(name: str | None = None) -> ModuleType:
    """Return the kernel module for ``name`` ("compiled" or "python")."""
    if name is None:
        return kernels
    if name == "python":
        return _fallback
    if name == "compiled":
        if _compiled is None:
            raise ImportError("compiled kernels are not built")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def compiled_available() -> bool:
    return _compiled is not None
