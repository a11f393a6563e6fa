import numpy as np
import pytest

from slr_recon import kernels
from slr_recon.kernels import numpy_backend


def brute_conv2d(x, w, b):
    """Quadruple-loop same-size cross-correlation oracle."""
    C, H, W = x.shape
    F, _, K, _ = w.shape
    p = K // 2
    out = np.zeros((F, H, W))
    for f in range(F):
        for y in range(H):
            for u in range(W):
                acc = b[f]
                for c in range(C):
                    for i in range(K):
                        for j in range(K):
                            yy, uu = y + i - p, u + j - p
                            if 0 <= yy < H and 0 <= uu < W:
                                acc += w[f, c, i, j] * x[c, yy, uu]
                out[f, y, u] = acc
    return out


@pytest.fixture
def small_case():
    rng = np.random.default_rng(42)
    x = rng.standard_normal((3, 6, 5))
    w = rng.standard_normal((4, 3, 3, 3))
    b = rng.standard_normal(4)
    return x, w, b


def test_forward_matches_brute_force(small_case):
    x, w, b = small_case
    assert np.allclose(kernels.conv2d_forward(x, w, b), brute_conv2d(x, w, b),
                       atol=1e-12)


def test_numpy_backend_matches_brute_force(small_case):
    x, w, b = small_case
    assert np.allclose(numpy_backend.conv2d_forward(x, w, b),
                       brute_conv2d(x, w, b), atol=1e-12)


def test_backends_agree(small_case):
    x, w, b = small_case
    ref = numpy_backend.conv2d_forward(x, w, b)
    out = kernels.conv2d_forward(x, w, b)
    assert np.allclose(out, ref, atol=1e-12)

    gout = np.random.default_rng(1).standard_normal(ref.shape)
    gin_ref = numpy_backend.conv2d_backward_input(gout, w, 6, 5)
    gin = kernels.conv2d_backward_input(gout, w, 6, 5)
    assert np.allclose(gin, gin_ref, atol=1e-12)

    gw_ref, gb_ref = numpy_backend.conv2d_backward_weights(x, gout, 3)
    gw, gb = kernels.conv2d_backward_weights(x, gout, 3)
    assert np.allclose(gw, gw_ref, atol=1e-12)
    assert np.allclose(gb, gb_ref, atol=1e-12)


def test_backward_input_is_transpose(small_case):
    # <conv(x), gout> == <x, conv_backward_input(gout)> for zero bias.
    x, w, _ = small_case
    b = np.zeros(4)
    gout = np.random.default_rng(2).standard_normal((4, 6, 5))
    lhs = np.sum(kernels.conv2d_forward(x, w, b) * gout)
    rhs = np.sum(x * kernels.conv2d_backward_input(gout, w, 6, 5))
    assert abs(lhs - rhs) / abs(lhs) < 1e-12


def test_backward_weights_is_gradient(small_case):
    # d<conv(x), gout>/dw == conv2d_backward_weights.
    x, w, b = small_case
    gout = np.random.default_rng(3).standard_normal((4, 6, 5))
    gw, gb = kernels.conv2d_backward_weights(x, gout, 3)
    h = 1e-6
    for idx in [(0, 0, 0, 0), (1, 2, 1, 2), (3, 0, 2, 1)]:
        wp, wm = w.copy(), w.copy()
        wp[idx] += h
        wm[idx] -= h
        fd = (np.sum(kernels.conv2d_forward(x, wp, b) * gout)
              - np.sum(kernels.conv2d_forward(x, wm, b) * gout)) / (2 * h)
        assert abs(fd - gw[idx]) < 1e-5
    assert np.allclose(gb, gout.sum(axis=(1, 2)), atol=1e-12)


def test_averaging_kernel_small_input():
    # 2x2 input, 3x3 all-ones/9 kernel, zero padding: each output is the mean
    # of the in-bounds neighbors.
    x = np.array([[[1.0, 2.0], [3.0, 4.0]]])
    w = np.full((1, 1, 3, 3), 1.0 / 9.0)
    b = np.zeros(1)
    out = kernels.conv2d_forward(x, w, b)
    assert np.allclose(out[0], np.full((2, 2), 10.0 / 9.0), atol=1e-12)


def test_identity_kernel():
    x = np.random.default_rng(4).standard_normal((1, 5, 5))
    w = np.ones((1, 1, 1, 1))
    out = kernels.conv2d_forward(x, w, np.zeros(1))
    assert np.allclose(out, x, atol=1e-15)


def test_forward_deterministic(small_case):
    x, w, b = small_case
    a = kernels.conv2d_forward(x, w, b)
    assert np.array_equal(a, kernels.conv2d_forward(x, w, b))
