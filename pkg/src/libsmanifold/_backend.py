"""Select the compiled kernels when available, the pure-Python ones otherwise.

Set ``LIBSMANIFOLD_PURE=1`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _fallback

BACKEND = "python"
dijkstra_rows = _fallback.dijkstra_rows
smo_solve = _fallback.smo_solve

if os.environ.get("LIBSMANIFOLD_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels
    except ImportError:  # extension not built
        pass
    else:
        BACKEND = "cython"
        dijkstra_rows = _kernels.dijkstra_rows
        smo_solve = _kernels.smo_solve

__all__ = ["BACKEND", "dijkstra_rows", "smo_solve"]
