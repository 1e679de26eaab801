"""Hot-loop kernels with a compiled core and a pure-Python fallback.

The Cython extension ``_native`` is preferred when importable; otherwise
the numpy implementation in ``_fallback`` is used. Both are bit-exact
equivalents (see tests and benchmarks/bench_kernels.py). Set
``GATEWATCH_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

import numpy as np

if os.environ.get("GATEWATCH_PURE_PYTHON"):
    from . import _fallback as _impl

    IMPLEMENTATION = "python"
else:
    try:
        from . import _native as _impl  # type: ignore[no-redef]

        IMPLEMENTATION = "native"
    except ImportError:
        from . import _fallback as _impl  # type: ignore[no-redef]

        IMPLEMENTATION = "python"


def lbp_code_image(gray: np.ndarray) -> np.ndarray:
    """8-bit LBP codes for every interior pixel; shape ``(h-2, w-2)``."""
    return _impl.lbp_code_image(np.ascontiguousarray(gray, dtype=np.uint8))


def count_exceeding(a: np.ndarray, b: np.ndarray, delta: int) -> int:
    """Number of positions where ``|a - b| > delta``."""
    return int(
        _impl.count_exceeding(
            np.ascontiguousarray(a, dtype=np.uint8),
            np.ascontiguousarray(b, dtype=np.uint8),
            delta,
        )
    )


__all__ = ["IMPLEMENTATION", "lbp_code_image", "count_exceeding"]
