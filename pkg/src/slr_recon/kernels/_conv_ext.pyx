# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled 2-D convolution kernels (forward and reverse-mode passes).

Same-size cross-correlation with zero padding and odd square kernels, the hot
inner loop of unrolled-network training.  Loops are tap-major with hoisted
boundary ranges; the innermost loops run over contiguous rows through raw
pointers so the C compiler can vectorize them.  Mirrors the numpy backend in
``slr_recon.kernels.numpy_backend`` up to floating-point ordering.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef inline Py_ssize_t _max(Py_ssize_t a, Py_ssize_t b) noexcept nogil:
    return a if a > b else b


cdef inline Py_ssize_t _min(Py_ssize_t a, Py_ssize_t b) noexcept nogil:
    return a if a < b else b


def conv2d_forward(double[:, :, ::1] x, double[:, :, :, ::1] w, double[::1] b):
    """out[f,y,u] = b[f] + sum_{c,i,j} w[f,c,i,j] * x[c, y+i-p, u+j-p]."""
    cdef Py_ssize_t C = x.shape[0], H = x.shape[1], W = x.shape[2]
    cdef Py_ssize_t F = w.shape[0], K = w.shape[2]
    cdef Py_ssize_t p = K // 2
    cdef Py_ssize_t f, c, i, j, y, t, n, y0, y1, u0, u1, dy, du
    cdef double wv
    cdef double *op
    cdef const double *xp

    out_arr = np.empty((F, H, W), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    with nogil:
        for f in range(F):
            op = &out[f, 0, 0]
            wv = b[f]
            for t in range(H * W):
                op[t] = wv
            for c in range(C):
                for i in range(K):
                    dy = i - p
                    y0 = _max(0, -dy)
                    y1 = _min(H, H - dy)
                    for j in range(K):
                        du = j - p
                        u0 = _max(0, -du)
                        u1 = _min(W, W - du)
                        n = u1 - u0
                        wv = w[f, c, i, j]
                        if wv == 0.0 or n <= 0:
                            continue
                        for y in range(y0, y1):
                            op = &out[f, y, u0]
                            xp = &x[c, y + dy, u0 + du]
                            for t in range(n):
                                op[t] += wv * xp[t]
    return out_arr


def conv2d_backward_input(double[:, :, ::1] gout, double[:, :, :, ::1] w,
                          Py_ssize_t H, Py_ssize_t W):
    """gin[c,y,u] = sum_{f,i,j} w[f,c,i,j] * gout[f, y-i+p, u-j+p]."""
    cdef Py_ssize_t F = w.shape[0], C = w.shape[1], K = w.shape[2]
    cdef Py_ssize_t p = K // 2
    cdef Py_ssize_t f, c, i, j, y, t, n, y0, y1, u0, u1, dy, du
    cdef double wv
    cdef double *gp
    cdef const double *op

    gin_arr = np.zeros((C, H, W), dtype=np.float64)
    cdef double[:, :, ::1] gin = gin_arr
    with nogil:
        for c in range(C):
            for f in range(F):
                for i in range(K):
                    dy = p - i
                    y0 = _max(0, -dy)
                    y1 = _min(H, H - dy)
                    for j in range(K):
                        du = p - j
                        u0 = _max(0, -du)
                        u1 = _min(W, W - du)
                        n = u1 - u0
                        wv = w[f, c, i, j]
                        if wv == 0.0 or n <= 0:
                            continue
                        for y in range(y0, y1):
                            gp = &gin[c, y, u0]
                            op = &gout[f, y + dy, u0 + du]
                            for t in range(n):
                                gp[t] += wv * op[t]
    return gin_arr


def conv2d_backward_weights(double[:, :, ::1] x, double[:, :, ::1] gout,
                            Py_ssize_t K):
    """gw[f,c,i,j] = sum_{y,u} gout[f,y,u] * x[c, y+i-p, u+j-p]; gb = sum gout."""
    cdef Py_ssize_t C = x.shape[0], H = x.shape[1], W = x.shape[2]
    cdef Py_ssize_t F = gout.shape[0]
    cdef Py_ssize_t p = K // 2
    cdef Py_ssize_t f, c, i, j, y, t, n, y0, y1, u0, u1, dy, du
    cdef double acc
    cdef const double *gp
    cdef const double *xp

    gw_arr = np.empty((F, C, K, K), dtype=np.float64)
    gb_arr = np.empty(F, dtype=np.float64)
    cdef double[:, :, :, ::1] gw = gw_arr
    cdef double[::1] gb = gb_arr
    with nogil:
        for f in range(F):
            for c in range(C):
                for i in range(K):
                    dy = i - p
                    y0 = _max(0, -dy)
                    y1 = _min(H, H - dy)
                    for j in range(K):
                        du = j - p
                        u0 = _max(0, -du)
                        u1 = _min(W, W - du)
                        n = u1 - u0
                        acc = 0.0
                        for y in range(y0, y1):
                            gp = &gout[f, y, u0]
                            xp = &x[c, y + dy, u0 + du]
                            for t in range(n):
                                acc += gp[t] * xp[t]
                        gw[f, c, i, j] = acc
            acc = 0.0
            gp = &gout[f, 0, 0]
            for t in range(H * W):
                acc += gp[t]
            gb[f] = acc
    return gw_arr, gb_arr
