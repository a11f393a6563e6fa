"""Convolution kernel backends.

Two interchangeable implementications of the same-size zero-padded conv2d
forward/backward kernels:

* ``cython`` -- compiled extension (``_conv_ext``), loop nests in C.
* ``numpy``  -- vectorized ``sliding_window_view`` + ``tensordot`` fallback.

The backend is selected once at import: the compiled module when it is
available, numpy otherwise.  ``SLR_RECON_BACKEND={auto,cython,numpy}``
overrides the choice.  ``python -m slr_recon.kernels.bench`` times both.
"""

import os

import numpy as np

from . import numpy_backend

_requested = os.environ.get("SLR_RECON_BACKEND", "auto")
_ext = None
if _requested in ("auto", "cython"):
    try:
        from . import _conv_ext as _ext
    except ImportError:
        if _requested == "cython":
            raise ImportError(
                "SLR_RECON_BACKEND=cython but the compiled kernel module "
                "is not available; rebuild the package or use numpy")
        _ext = None

BACKEND = "cython" if _ext is not None else "numpy"


def _as_f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def conv2d_forward(x, w, b):
    """Same-size cross-correlation. x: (C,H,W), w: (F,C,K,K), b: (F,)."""
    x, w, b = _as_f64(x), _as_f64(w), _as_f64(b)
    if _ext is not None:
        return _ext.conv2d_forward(x, w, b)
    return numpy_backend.conv2d_forward(x, w, b)


def conv2d_backward_input(gout, w, height, width):
    gout, w = _as_f64(gout), _as_f64(w)
    if _ext is not None:
        return _ext.conv2d_backward_input(gout, w, height, width)
    return numpy_backend.conv2d_backward_input(gout, w, height, width)


def conv2d_backward_weights(x, gout, kernel):
    x, gout = _as_f64(x), _as_f64(gout)
    if _ext is not None:
        return _ext.conv2d_backward_weights(x, gout, kernel)
    return numpy_backend.conv2d_backward_weights(x, gout, kernel)
