"""Complex tensor conventions, FFTs, deterministic RNG, and the CTEN file format.

Tensors are plain ``numpy.ndarray`` values in complex double precision
(``complex128``), row-major.  Every function in the package treats them as
immutable values: operations return fresh arrays and never write to their
inputs, so concurrent use is safe.  The single-precision ``complex64`` dtype
exists only in the file format.

FFT conventions
---------------
``fft2`` is the plain unnormalized forward DFT over two axes; ``ifft2``
carries the full ``1/(Nx*Ny)`` factor, so ``ifft2(fft2(x)) == x``.  Arbitrary
(not just power-of-two) extents are supported via numpy's mixed-radix /
Bluestein transforms.  Frequencies are identified with signed integers
``k in {-floor(N/2), ..., ceil(N/2)-1}``; arrays are stored in standard DFT
order and :func:`fftshift2` / :func:`ifftshift2` move between storage order
and the centered (monotone signed-``k``) arrangement.

RNG
---
:class:`Rng` wraps numpy's Philox generator, a 64-bit-seeded counter-based
stream: the same seed and call sequence produce identical output on every
platform.  A stream is single-owner; derive independent child streams with
:meth:`Rng.derive` instead of sharing one across workers.
"""

from __future__ import annotations

import struct

import numpy as np

CTEN_MAGIC = b"CTEN"
CTEN_VERSION = 1
_CTEN_DTYPES = {0: np.dtype("<c16"), 1: np.dtype("<c8")}
_CTEN_CODES = {np.dtype(np.complex128): 0, np.dtype(np.complex64): 1}
# Guard against absurd header extents before allocating.
_MAX_ELEMENTS = 1 << 34


class CtenFormatError(ValueError):
    """Raised for malformed CTEN files (bad magic, truncation, overflow)."""


def _check_axes(x, axes):
    if len(axes) != 2:
        raise ValueError(f"expected two FFT axes, got {axes}")
    for ax in axes:
        if not -x.ndim <= ax < x.ndim:
            raise ValueError(f"axis {ax} out of range for ndim {x.ndim}")
    if x.shape[axes[0]] < 1 or x.shape[axes[1]] < 1:
        raise ValueError("FFT axes must have extent >= 1")


def fft2(x, axes=(-2, -1)):
    """Unnormalized forward DFT over two axes."""
    x = np.asarray(x)
    _check_axes(x, axes)
    return np.fft.fftn(x, axes=axes).astype(np.complex128, copy=False)


def ifft2(x, axes=(-2, -1)):
    """Inverse DFT over two axes, normalized by 1/(Nx*Ny)."""
    x = np.asarray(x)
    _check_axes(x, axes)
    return np.fft.ifftn(x, axes=axes).astype(np.complex128, copy=False)


def fftshift2(x, axes=(-2, -1)):
    """Storage order -> centered order (signed k increases along the axes)."""
    return np.fft.fftshift(x, axes=axes)


def ifftshift2(x, axes=(-2, -1)):
    """Centered order -> storage order; exact inverse of :func:`fftshift2`."""
    return np.fft.ifftshift(x, axes=axes)


def freq_grid(shape):
    """Signed integer frequency grids ``(kx, ky)`` in storage order.

    ``kx`` varies along axis 0 (rows), ``ky`` along axis 1, both as
    ``float64`` arrays of the given 2-D shape, in cycles per field of view.
    """
    h, w = shape
    kx = np.fft.fftfreq(h) * h
    ky = np.fft.fftfreq(w) * w
    return np.broadcast_to(kx[:, None], (h, w)).copy(), \
        np.broadcast_to(ky[None, :], (h, w)).copy()


class Rng:
    """Deterministic random stream (numpy Philox, counter-based).

    Same seed + same call sequence gives identical draws on all platforms.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.Generator(np.random.Philox(self.seed))

    def derive(self, index: int) -> "Rng":
        """Independent child stream for a work item (seed XOR index)."""
        return Rng(self.seed ^ int(index))

    def standard_normal(self, shape=()):
        return self._gen.standard_normal(shape)

    def normal(self, loc=0.0, scale=1.0, shape=()):
        return self._gen.normal(loc, scale, shape)

    def uniform(self, low=0.0, high=1.0, shape=()):
        return self._gen.uniform(low, high, shape)

    def integers(self, low, high=None, shape=()):
        return self._gen.integers(low, high, shape)

    def random(self, shape=()):
        return self._gen.random(shape)

    def permutation(self, n: int):
        return self._gen.permutation(n)

    def complex_normal(self, shape=(), sigma=1.0):
        """I.i.d. complex Gaussian with per-component std ``sigma``."""
        re = self._gen.standard_normal(shape)
        im = self._gen.standard_normal(shape)
        return sigma * (re + 1j * im)


def save_tensor(path, x) -> None:
    """Write a complex tensor in the CTEN binary format (byte-exact roundtrip).

    Layout, all little-endian: magic ``CTEN``, u8 version=1, u8 dtype
    (0=complex128, 1=complex64), u8 ndim, ndim u64 extents, then row-major
    interleaved (re, im) IEEE-754 payload.
    """
    x = np.asarray(x)
    if x.dtype not in _CTEN_CODES:
        x = x.astype(np.complex128)
    code = _CTEN_CODES[x.dtype]
    header = CTEN_MAGIC + struct.pack("<BBB", CTEN_VERSION, code, x.ndim)
    header += struct.pack(f"<{x.ndim}Q", *x.shape)
    payload = np.ascontiguousarray(x, dtype=_CTEN_DTYPES[code]).tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def load_tensor(path):
    """Read a CTEN file back into a complex ndarray."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 7 or raw[:4] != CTEN_MAGIC:
        raise CtenFormatError(f"{path}: not a CTEN file (bad magic)")
    version, code, ndim = struct.unpack("<BBB", raw[4:7])
    if version != CTEN_VERSION:
        raise CtenFormatError(f"{path}: unsupported version {version}")
    if code not in _CTEN_DTYPES:
        raise CtenFormatError(f"{path}: unknown dtype code {code}")
    offset = 7 + 8 * ndim
    if len(raw) < offset:
        raise CtenFormatError(f"{path}: truncated header")
    shape = struct.unpack(f"<{ndim}Q", raw[7:offset])
    count = 1
    for extent in shape:
        count *= extent
        if count > _MAX_ELEMENTS:
            raise CtenFormatError(f"{path}: dimension overflow {shape}")
    dtype = _CTEN_DTYPES[code]
    expected = count * dtype.itemsize
    if len(raw) - offset != expected:
        raise CtenFormatError(
            f"{path}: payload has {len(raw) - offset} bytes, expected {expected}")
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
    return data.reshape(shape).astype(
        np.complex128 if code == 0 else np.complex64)
