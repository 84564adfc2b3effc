"""Kernel backend selection.

Prefers the compiled Cython extension; falls back to the pure-Python
implementations when the extension is unavailable. Set REXFORGE_PURE=1
to force the fallback (used by the kernel benchmark and tests).
"""

from __future__ import annotations

import os

from . import _pykernels

if os.environ.get("REXFORGE_PURE", "0") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "pure"
else:
    try:
        from . import _cykernels as _impl  # type: ignore[attr-defined]
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "pure"

iou = _impl.iou
best_iou = _impl.best_iou
union_iou = _impl.union_iou
lcs_length = _impl.lcs_length

__all__ = ["BACKEND", "iou", "best_iou", "union_iou", "lcs_length"]
