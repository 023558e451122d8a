"""Kernel backend selection.

Imports the compiled extension when present, falling back to the pure-Python
implementations.  ``CORACMG_PURE_PYTHON=1`` forces the fallback, which is
how the benchmark and the cross-backend tests exercise both paths.
"""

from __future__ import annotations

import os

import numpy as np

from . import _fallback

if os.environ.get("CORACMG_PURE_PYTHON") == "1":
    _impl = None
    BACKEND = "python"
else:
    try:
        from . import _speedups as _impl  # type: ignore[assignment]

        BACKEND = "cython"
    except ImportError:
        _impl = None
        BACKEND = "python"

if _impl is None:
    lcs_length = _fallback.lcs_length
    bm25_accumulate = _fallback.bm25_accumulate
else:

    def lcs_length(a, b) -> int:
        return _impl.lcs_length(
            np.ascontiguousarray(a, dtype=np.int32),
            np.ascontiguousarray(b, dtype=np.int32),
        )

    bm25_accumulate = _impl.bm25_accumulate
