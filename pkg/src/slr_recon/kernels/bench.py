"""Benchmark the compiled conv kernels against the numpy fallback.

Run with ``python -m slr_recon.kernels.bench``.  Reports per-call wall time
for the forward and both backward passes on a training-sized problem and a
larger one, and checks that the two backends agree.
"""

import time

import numpy as np

from . import numpy_backend

try:
    from . import _conv_ext
except ImportError:
    _conv_ext = None


def _time(fn, *args, repeats=50):
    fn(*args)  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - t0) / repeats


def run(cases=((8, 16, 3, 32), (16, 64, 3, 64)), repeats=50):
    rng = np.random.default_rng(0)
    rows = []
    for C, F, K, N in cases:
        x = rng.standard_normal((C, N, N))
        w = rng.standard_normal((F, C, K, K))
        b = rng.standard_normal(F)
        gout = rng.standard_normal((F, N, N))

        plans = [("numpy", numpy_backend.conv2d_forward,
                  numpy_backend.conv2d_backward_input,
                  numpy_backend.conv2d_backward_weights)]
        if _conv_ext is not None:
            plans.append(("cython", _conv_ext.conv2d_forward,
                          _conv_ext.conv2d_backward_input,
                          _conv_ext.conv2d_backward_weights))

        ref = None
        for name, fwd, bwd_in, bwd_w in plans:
            t_f = _time(fwd, x, w, b, repeats=repeats)
            t_i = _time(bwd_in, gout, w, N, N, repeats=repeats)
            t_w = _time(bwd_w, x, gout, K, repeats=repeats)
            out = fwd(x, w, b)
            if ref is None:
                ref = out
            else:
                err = np.abs(out - ref).max() / np.abs(ref).max()
                assert err < 1e-12, f"backend mismatch: {err:.2e}"
            rows.append((f"C={C} F={F} K={K} N={N}", name, t_f, t_i, t_w))
    return rows


def main():
    print(f"compiled extension available: {_conv_ext is not None}")
    print(f"{'case':24s} {'backend':8s} {'fwd':>10s} {'bwd_in':>10s} {'bwd_w':>10s}")
    for case, name, t_f, t_i, t_w in run():
        print(f"{case:24s} {name:8s} {t_f * 1e6:8.1f}us {t_i * 1e6:8.1f}us "
              f"{t_w * 1e6:8.1f}us")


if __name__ == "__main__":
    main()
