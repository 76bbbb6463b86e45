"""Kernel backend selection: compiled extension with pure-Python fallback.

The compiled module (``coalpp._kernels``, Cython) is preferred when it built;
set ``COALPP_PURE_PYTHON=1`` to force the pure-Python reference kernels. Both
backends consume the random stream identically and produce bit-identical
output.
"""

from __future__ import annotations

import os

from . import _kernels_py

_force_py = os.environ.get("COALPP_PURE_PYTHON", "").strip().lower() not in ("", "0", "false")

if _force_py:
    _kernels = _kernels_py
else:
    try:
        from . import _kernels  # type: ignore[no-redef]
    except ImportError:
        _kernels = _kernels_py

HAVE_COMPILED = _kernels.BACKEND == "compiled"


def get_kernels():
    """The active kernel module (compiled if available, else pure Python)."""
    return _kernels


def backend_name() -> str:
    return _kernels.BACKEND
