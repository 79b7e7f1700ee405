"""Kernel backend selection.

The compiled extension is preferred when it imported cleanly; the numpy
reference implementation is the fallback. Set ``STRATEGIST_PURE_PYTHON=1``
to force the fallback (useful for debugging and for the backend benchmark).
"""

from __future__ import annotations

import os

from . import _ref

if os.environ.get("STRATEGIST_PURE_PYTHON", "").strip() not in ("", "0"):
    _impl = _ref
    BACKEND = "numpy"
else:
    try:
        from . import _fast as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _ref
        BACKEND = "numpy"

predict_batch = _impl.predict_batch
ei_batch = _impl.ei_batch
ei_point_and_grad = _impl.ei_point_and_grad

__all__ = ["predict_batch", "ei_batch", "ei_point_and_grad", "BACKEND"]
