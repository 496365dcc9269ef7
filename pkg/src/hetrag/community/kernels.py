"""Selects the compiled Leiden kernels when available, else the Python ones.

Set ``HETRAG_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _pykernels

python_kernels = _pykernels

try:
    from . import _kernels as compiled_kernels
except ImportError:  # extension not built
    compiled_kernels = None

if compiled_kernels is not None and not os.environ.get("HETRAG_PURE_PYTHON"):
    active = compiled_kernels
    BACKEND = "cython"
else:
    active = _pykernels
    BACKEND = "python"


def get(name: str | None = None):
    """Kernel module by name (``"cython"`` or ``"python"``); the active one by default."""
    if name is None:
        return active
    if name == "python":
        return _pykernels
    if name == "cython":
        if compiled_kernels is None:
            raise ImportError("compiled Leiden kernels are not built")
        return compiled_kernels
    raise ValueError(f"unknown kernel backend {name!r}")
