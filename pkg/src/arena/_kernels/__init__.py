"""Pixel-level kernels: compiled core when available, numpy fallback otherwise.

Set ARENA_KERNELS=numpy to force the fallback (the benchmark and the
backend-equivalence tests import both implementations directly).
"""

import os

from arena._kernels import _numpy

if os.environ.get("ARENA_KERNELS") == "numpy":
    _impl = _numpy
    BACKEND = "numpy"
else:
    try:
        from arena._kernels import _core as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _numpy
        BACKEND = "numpy"

luma_u8 = _impl.luma_u8
patch_diff_sums = _impl.patch_diff_sums
block_match = _impl.block_match

__all__ = ["BACKEND", "luma_u8", "patch_diff_sums", "block_match"]
