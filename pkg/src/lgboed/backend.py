"""Kernel backend selection.

The compiled extension ``lgboed._kernels`` is used when it imports; otherwise
the numpy implementations in ``lgboed._fallback`` take over. Setting
``LGBOED_PURE_PYTHON=1`` forces the fallback.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _fallback

compiled: ModuleType | None
try:
    from . import _kernels as compiled
except ImportError:  # extension not built
    compiled = None

fallback = _fallback

if compiled is not None and os.environ.get("LGBOED_PURE_PYTHON", "") not in ("1", "true", "yes"):
    kernels: ModuleType = compiled
    NAME = "compiled"
else:
    kernels = _fallback
    NAME = "python"


def get(name: str | None = None) -> ModuleType:
    """Return the kernel module ``"compiled"`` or ``"python"``; ``None`` gives the active one."""
    if name is None:
        return kernels
    if name == "python":
        return _fallback
    if name == "compiled":
        if compiled is None:
            raise ImportError("compiled kernels are not built")
        return compiled
    raise ValueError(f"unknown backend {name!r}")
