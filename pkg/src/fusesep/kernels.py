"""Backend selection for the convolution kernels.

The compiled extension is used when it imports; set ``FUSESEP_PURE_PYTHON=1``
to force the NumPy implementation.
"""
import os

import numpy as np

from . import _conv_py

BACKEND = "python"
_impl = _conv_py

if os.environ.get("FUSESEP_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _conv as _compiled
    except ImportError:  # extension not built
        _compiled = None
    if _compiled is not None:
        _impl = _compiled
        BACKEND = "compiled"


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def conv3x3_forward(x, w, b):
    return _impl.conv3x3_forward(_f64(x), _f64(w), _f64(b))


def conv3x3_backward(x, w, gy):
    return _impl.conv3x3_backward(_f64(x), _f64(w), _f64(gy))
