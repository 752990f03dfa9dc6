"""Selects the compiled queue kernel when it is built, else the pure-Python one.

Set ``NFVSCALE_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
PacketQueue = _kernels_py.PacketQueue

if os.environ.get("NFVSCALE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels  # type: ignore[attr-defined]
    except ImportError:
        pass
    else:
        PacketQueue = _kernels.PacketQueue
        BACKEND = "cython"

__all__ = ["PacketQueue", "BACKEND"]
