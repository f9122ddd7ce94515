"""Kernel selection: compiled extension when importable, numpy otherwise.

Set ``CAUSALREC_PURE_PYTHON=1`` to force the numpy fallback.
"""
import os

from ._kernels import fallback

BACKEND = "numpy"
_impl = fallback
if os.environ.get("CAUSALREC_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from ._kernels import _masked_mlp as _impl  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:
        _impl = fallback


def _c(a, dtype="float64"):
    import numpy as np
    return np.ascontiguousarray(a, dtype=dtype)


def mlp_forward(hist, mask, w1, b1, w2, b2, slope=0.01):
    return _impl.mlp_forward(_c(hist, "int64"), _c(mask), _c(w1), _c(b1), _c(w2), _c(b2),
                             float(slope))


def mlp_backward(hist, mask, w1, w2, pre, dz, slope=0.01):
    return _impl.mlp_backward(_c(hist, "int64"), _c(mask), _c(w1), _c(w2), _c(pre), _c(dz),
                              float(slope))


def linear_forward(hist, mask, w, b):
    return _impl.linear_forward(_c(hist, "int64"), _c(mask), _c(w), _c(b))


def linear_backward(hist, mask, w, dz):
    return _impl.linear_backward(_c(hist, "int64"), _c(mask), _c(w), _c(dz))
