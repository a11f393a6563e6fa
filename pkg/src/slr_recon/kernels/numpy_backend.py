"""Pure-numpy convolution kernels (fallback for the compiled extension).

Same-size cross-correlation with zero padding and odd square kernels,
vectorized with ``sliding_window_view`` + ``tensordot``.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _pad(x, p):
    return np.pad(x, ((0, 0), (p, p), (p, p)))


def conv2d_forward(x, w, b):
    """x: (C,H,W), w: (F,C,K,K), b: (F,) -> (F,H,W)."""
    k = w.shape[2]
    windows = sliding_window_view(_pad(x, k // 2), (k, k), axis=(1, 2))
    out = np.tensordot(w, windows, axes=([1, 2, 3], [0, 3, 4]))
    return out + b[:, None, None]


def conv2d_backward_input(gout, w, H, W):
    """gout: (F,H,W) -> gin: (C,H,W), transpose of the forward map."""
    k = w.shape[2]
    # Same-size correlation by the spatially flipped, channel-transposed kernel.
    wf = w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
    windows = sliding_window_view(_pad(gout, k // 2), (k, k), axis=(1, 2))
    return np.tensordot(wf, windows, axes=([1, 2, 3], [0, 3, 4]))


def conv2d_backward_weights(x, gout, k):
    """gw[f,c,i,j] = sum_{y,x} gout[f,y,x] * xpad[c,y+i,x+j]; gb = sum gout."""
    windows = sliding_window_view(_pad(x, k // 2), x.shape[1:], axis=(1, 2))
    # windows: (C, K, K, H, W); contract the spatial grid against gout.
    gw = np.tensordot(gout, windows, axes=([1, 2], [3, 4]))
    return np.ascontiguousarray(gw), gout.sum(axis=(1, 2))
