"""Annihilation algebra: weighting, Hankel lifting, null spaces, filterbanks.

Two liftings are supported, selected by :class:`LiftingSpec`:

* ``vertical-gradient`` -- a single-channel k-space array is expanded into
  two copies weighted by ``j*2*pi*kx`` and ``j*2*pi*ky`` (the spectrum of the
  image gradient); their Hankel blocks are stacked by rows.  Edges of a
  piecewise-constant image that lie on the zero set of a bandlimited function
  put this matrix's smallest singular values at zero.
* ``horizontal-multichannel`` -- the per-channel Hankel blocks are stacked by
  columns.  Bandlimited coil sensitivities induce one exact annihilating
  filter per channel pair, again collapsing the rank.  (The same stacking
  with identity weighting covers multi-shot phase-consistency recovery.)

Convention: the lifted matrix times a stacked tap vector equals the *valid*
linear convolution of the bands with the filter, rows ordered
lexicographically by valid position and columns by window offset.  Lifted
quantities always live on the centered (signed-frequency) arrangement, where
gradient weights are monotone and calibration regions are contiguous;
:func:`lifting_bands` moves a storage-order k-space array into that domain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .acquisition import MultiChannelKSpace, centered_block
from .tensor_io import fft2, fftshift2, freq_grid, ifft2, ifftshift2

STACKINGS = ("vertical-gradient", "horizontal-multichannel")


@dataclass
class LiftingSpec:
    """Declares stacking mode, filter window, grid shape, and channel count.

    ``channels`` is the k-space channel count of the *input*; the vertical
    gradient lifting takes one channel and expands it to two internal bands.
    """

    stacking: str
    window: tuple[int, int]
    grid: tuple[int, int]
    channels: int = 1

    def __post_init__(self):
        if self.stacking not in STACKINGS:
            raise ValueError(f"unknown stacking {self.stacking!r}")
        fx, fy = self.window
        h, w = self.grid
        if fx > h or fy > w:
            raise ValueError("filter window larger than the grid")
        if self.channels < 1:
            raise ValueError("channel count must be >= 1")
        if self.stacking == "vertical-gradient" and self.channels != 1:
            raise ValueError("vertical-gradient lifting takes one channel")

    @property
    def bands(self) -> int:
        return 2 if self.stacking == "vertical-gradient" else self.channels

    @property
    def taps(self) -> int:
        return self.window[0] * self.window[1]

    @property
    def cols(self) -> int:
        """Column count of the lifted matrix (filter length incl. bands)."""
        if self.stacking == "vertical-gradient":
            return self.taps
        return self.taps * self.channels

    @property
    def valid_shape(self) -> tuple[int, int]:
        return (self.grid[0] - self.window[0] + 1,
                self.grid[1] - self.window[1] + 1)

    @property
    def valid_count(self) -> int:
        return self.valid_shape[0] * self.valid_shape[1]


@dataclass
class LiftedMatrix:
    """Dense lifted matrix plus its row/column bookkeeping."""

    matrix: np.ndarray
    spec: LiftingSpec

    def __post_init__(self):
        rows = self.spec.valid_count
        if self.spec.stacking == "vertical-gradient":
            rows *= 2
        if self.matrix.shape != (rows, self.spec.cols):
            raise ValueError(
                f"lifted matrix shape {self.matrix.shape} does not match "
                f"spec ({rows}, {self.spec.cols})")


@dataclass
class NullSpaceBasis:
    """Annihilating filter collection: columns of ``matrix`` are filters.

    ``origin`` is ``irls-weight`` for the full Hermitian inverse-power weight
    or ``calibration-nullspace`` for a thin orthonormal basis estimated from
    a fully sampled region; ``eps`` records the shift used by the former.
    """

    matrix: np.ndarray
    origin: str
    eps: float | None = None

    def __post_init__(self):
        if self.origin not in ("irls-weight", "calibration-nullspace"):
            raise ValueError(f"unknown origin {self.origin!r}")

    @property
    def nfilters(self) -> int:
        return self.matrix.shape[1]


@dataclass
class FilterBank:
    """Spatial-tap form of a filter collection.

    ``filters`` has shape ``(V, fx, fy)`` for the single-input layout (each
    filter hits every band) and ``(V, M, fx, fy)`` for the multi-input layout
    (per-column per-channel taps, summed over channels).
    """

    filters: np.ndarray
    stacking: str
    bands: int

    @property
    def window(self) -> tuple[int, int]:
        return self.filters.shape[-2], self.filters.shape[-1]

    @property
    def nfilters(self) -> int:
        return self.filters.shape[0]


def grad_weight(kspace) -> np.ndarray:
    """Two gradient-weighted copies of a single-channel k-space array.

    Band 0 carries ``j*2*pi*kx``, band 1 ``j*2*pi*ky``, with signed integer
    frequencies (cycles per field of view) in storage order.
    """
    kspace = np.asarray(kspace, dtype=np.complex128)
    if kspace.ndim == 3 and kspace.shape[0] == 1:
        kspace = kspace[0]
    if kspace.ndim != 2:
        raise ValueError("gradient weighting takes a single-channel array")
    kx, ky = freq_grid(kspace.shape)
    return np.stack([2j * np.pi * kx * kspace, 2j * np.pi * ky * kspace])


def grad_weight_adjoint(bands) -> np.ndarray:
    """Adjoint of :func:`grad_weight`: ``-(j*2*pi*kx*z0 + j*2*pi*ky*z1)``."""
    bands = np.asarray(bands, dtype=np.complex128)
    if bands.ndim != 3 or bands.shape[0] != 2:
        raise ValueError("expected exactly two gradient bands")
    kx, ky = freq_grid(bands.shape[1:])
    return -(2j * np.pi * kx * bands[0] + 2j * np.pi * ky * bands[1])


def grad_weight_squared(shape) -> np.ndarray:
    """Pointwise weights of the normal operator: ``4*pi^2*(kx^2+ky^2)``."""
    kx, ky = freq_grid(shape)
    return 4.0 * np.pi ** 2 * (kx ** 2 + ky ** 2)


def lifting_bands(kspace, spec: LiftingSpec) -> np.ndarray:
    """Storage-order k-space -> centered lifting-domain bands.

    Applies the spec's weighting (gradient expansion or identity), then moves
    every band to the centered arrangement where valid convolution windows
    are contiguous in signed frequency.
    """
    kspace = np.asarray(kspace, dtype=np.complex128)
    if kspace.ndim == 2:
        kspace = kspace[None]
    if kspace.shape[0] != spec.channels or kspace.shape[1:] != spec.grid:
        raise ValueError("k-space shape does not match the lifting spec")
    if spec.stacking == "vertical-gradient":
        bands = grad_weight(kspace[0])
    else:
        bands = kspace
    return fftshift2(bands)


def lifting_bands_adjoint(bands, spec: LiftingSpec) -> np.ndarray:
    """Adjoint of :func:`lifting_bands`; returns storage-order k-space."""
    unshifted = ifftshift2(np.asarray(bands, dtype=np.complex128))
    if spec.stacking == "vertical-gradient":
        return grad_weight_adjoint(unshifted)[None]
    return unshifted


def _conv_windows(z, window):
    """Sliding windows in convolution orientation.

    ``win[a, b, mx, my] = z[a + fx-1 - mx, b + fy-1 - my]`` so that
    ``win.reshape(P, taps) @ q.ravel()`` is the valid linear convolution.
    """
    fx, fy = window
    win = sliding_window_view(z, (fx, fy))
    return win[:, :, ::-1, ::-1]


def _band_block(z, window):
    """Hankel block of one band: (valid positions) x (taps)."""
    fx, fy = window
    hp, wp = z.shape[0] - fx + 1, z.shape[1] - fy + 1
    return _conv_windows(z, window).reshape(hp * wp, fx * fy)


def hankel_lift(bands, spec: LiftingSpec) -> LiftedMatrix:
    """Lift centered band arrays into the structured (block-)Hankel matrix.

    Row ``n`` (lexicographic over valid positions) against a stacked tap
    vector reproduces the valid linear convolution of the bands with the
    filter; vertical stacking concatenates band blocks by rows, horizontal
    by columns.
    """
    bands = np.asarray(bands, dtype=np.complex128)
    if bands.ndim == 2:
        bands = bands[None]
    if bands.shape[0] != spec.bands:
        raise ValueError(f"expected {spec.bands} bands, got {bands.shape[0]}")
    if bands.shape[1:] != spec.grid:
        raise ValueError("band grid does not match the lifting spec")
    blocks = [_band_block(b, spec.window) for b in bands]
    if spec.stacking == "vertical-gradient":
        matrix = np.vstack(blocks)
    else:
        matrix = np.hstack(blocks)
    return LiftedMatrix(matrix=matrix, spec=spec)


def _padded_correlations(z, maps, window):
    """All tap-lag correlations sum_n conj(z[n-m]) * maps[c, n] via FFT.

    ``maps`` are stacked on the valid grid; returns ``(len(maps), taps)``.
    """
    fx, fy = window
    h, w = z.shape
    ph, pw = h + fx - 1, w + fy - 1
    scattered = np.zeros((maps.shape[0], ph, pw), dtype=np.complex128)
    scattered[:, fx - 1:h, fy - 1:w] = maps
    spec_z = np.fft.fftn(z, s=(ph, pw), axes=(0, 1))
    spec_m = np.fft.fftn(scattered, axes=(-2, -1))
    corr = np.fft.ifftn(spec_z.conj()[None] * spec_m, axes=(-2, -1))
    return corr[:, :fx, :fy].reshape(maps.shape[0], fx * fy)


def lift_gram(bands, spec: LiftingSpec, method: str = "auto") -> np.ndarray:
    """Hermitian Gram matrix of the lifted operator.

    ``method='explicit'`` forms the lifted matrix and multiplies;
    ``method='fft'`` assembles the same matrix from padded FFT correlations
    without materializing the lift.  ``'auto'`` picks by problem size.
    """
    bands = np.asarray(bands, dtype=np.complex128)
    if bands.ndim == 2:
        bands = bands[None]
    if method == "auto":
        work = (bands.shape[0] * spec.valid_count) * spec.cols
        method = "explicit" if work <= 2_000_000 else "fft"
    if method == "explicit":
        lifted = hankel_lift(bands, spec).matrix
        return lifted.conj().T @ lifted
    if method != "fft":
        raise ValueError(f"unknown method {method!r}")

    taps = spec.taps
    if spec.stacking == "vertical-gradient":
        gram = np.zeros((taps, taps), dtype=np.complex128)
        for band in bands:
            crops = _conv_windows(band, spec.window)
            maps = crops.reshape(-1, taps).T.reshape(taps, *spec.valid_shape)
            gram += _padded_correlations(band, maps, spec.window).T
        return gram
    m = spec.channels
    gram = np.zeros((m * taps, m * taps), dtype=np.complex128)
    for j in range(m):
        crops = _conv_windows(bands[j], spec.window)
        maps = crops.reshape(-1, taps).T.reshape(taps, *spec.valid_shape)
        for i in range(m):
            block = _padded_correlations(bands[i], maps, spec.window)
            gram[i * taps:(i + 1) * taps, j * taps:(j + 1) * taps] = block.T
    return gram


def nullspace_weight(gram, eps: float) -> NullSpaceBasis:
    """Inverse fourth-root weight of the shifted Gram matrix.

    Returns the full Hermitian matrix ``U diag((s+eps)^(-1/4)) U^H`` from the
    eigendecomposition ``gram = U diag(s) U^H``; its fourth power inverts
    ``gram + eps*I`` exactly.
    """
    gram = np.asarray(gram, dtype=np.complex128)
    if gram.ndim != 2 or gram.shape[0] != gram.shape[1]:
        raise ValueError("gram must be square")
    scale = max(np.linalg.norm(gram), 1e-300)
    if np.linalg.norm(gram - gram.conj().T) > 1e-8 * scale:
        raise ValueError("gram must be Hermitian")
    if eps <= 0:
        raise ValueError("eps must be positive")
    vals, vecs = np.linalg.eigh(gram)
    weights = (vals + eps) ** (-0.25)
    matrix = (vecs * weights[None, :]) @ vecs.conj().T
    return NullSpaceBasis(matrix=matrix, origin="irls-weight", eps=eps)


def calibrated_nullspace(calib_ksp: MultiChannelKSpace, spec: LiftingSpec,
                         rank_tol: float = 1e-6) -> NullSpaceBasis:
    """Null-space estimate from the fully sampled calibration region.

    Lifts the centered calibration sub-grid, takes its SVD, and returns the
    right singular vectors whose singular values fall below
    ``rank_tol * sigma_max`` as an orthonormal filter basis.
    """
    mask = calib_ksp.mask
    if mask.calib is None:
        raise ValueError("measurements carry no calibration region")
    ch, cw = mask.calib
    fx, fy = spec.window
    if ch < 2 * fx + 1 or cw < 2 * fy + 1:
        raise ValueError(
            f"calibration region {(ch, cw)} too small for window {(fx, fy)}; "
            f"need at least {(2 * fx + 1, 2 * fy + 1)}")
    bands = lifting_bands(calib_ksp.data, spec)
    calib_bands = centered_block(bands, (ch, cw))
    sub = LiftingSpec(stacking=spec.stacking, window=spec.window,
                      grid=(ch, cw), channels=spec.channels)
    lifted = hankel_lift(calib_bands, sub).matrix
    _, svals, vh = np.linalg.svd(lifted, full_matrices=True)
    sigma_max = svals[0] if len(svals) else 0.0
    keep = np.zeros(vh.shape[0], dtype=bool)
    keep[:len(svals)] = svals < rank_tol * sigma_max
    keep[len(svals):] = True   # exact null directions beyond the rank
    basis = vh.conj().T[:, keep]
    return NullSpaceBasis(matrix=basis, origin="calibration-nullspace")


def build_filterbank(basis: NullSpaceBasis | np.ndarray,
                     spec: LiftingSpec) -> FilterBank:
    """Reshape filter columns into spatial taps laid out per the stacking."""
    matrix = basis.matrix if isinstance(basis, NullSpaceBasis) else basis
    matrix = np.asarray(matrix, dtype=np.complex128)
    if matrix.ndim != 2 or matrix.shape[0] != spec.cols:
        raise ValueError(
            f"filter matrix has {matrix.shape[0]} taps, spec wants {spec.cols}")
    fx, fy = spec.window
    nfilters = matrix.shape[1]
    if spec.stacking == "vertical-gradient":
        filters = matrix.T.reshape(nfilters, fx, fy)
        return FilterBank(filters=filters, stacking="simo", bands=2)
    filters = matrix.T.reshape(nfilters, spec.channels, fx, fy)
    return FilterBank(filters=filters, stacking="mimo", bands=spec.channels)


def apply_filterbank(bank: FilterBank, bands) -> np.ndarray:
    """Valid convolutions per the bank layout.

    Single-input (simo): every filter hits every band; output
    ``(V, bands, H', W')``.  Multi-input (mimo): per-channel taps convolve
    their channel and sum; output ``(V, H', W')``.
    """
    bands = np.asarray(bands, dtype=np.complex128)
    if bands.ndim == 2:
        bands = bands[None]
    if bands.shape[0] != bank.bands:
        raise ValueError(f"expected {bank.bands} bands, got {bands.shape[0]}")
    fx, fy = bank.window
    hp, wp = bands.shape[1] - fx + 1, bands.shape[2] - fy + 1
    v = bank.nfilters
    if bank.stacking == "simo":
        taps = bank.filters.reshape(v, fx * fy)
        out = np.empty((v, bank.bands, hp, wp), dtype=np.complex128)
        for b in range(bank.bands):
            block = _band_block(bands[b], (fx, fy))
            out[:, b] = (block @ taps.T).T.reshape(v, hp, wp)
        return out
    taps = bank.filters.reshape(v, bank.bands * fx * fy)
    block = np.hstack([_band_block(bands[c], (fx, fy))
                       for c in range(bank.bands)])
    return (block @ taps.T).T.reshape(v, hp, wp)


def apply_filterbank_adjoint(bank: FilterBank, outputs) -> np.ndarray:
    """Adjoint of :func:`apply_filterbank`: correlation with flipped filters,
    scattered back onto the full grid."""
    outputs = np.asarray(outputs, dtype=np.complex128)
    fx, fy = bank.window
    v = bank.nfilters
    if bank.stacking == "simo":
        _, nb, hp, wp = outputs.shape
        h, w = hp + fx - 1, wp + fy - 1
        taps = bank.filters.reshape(v, fx * fy)
        acc = np.zeros((nb, h, w), dtype=np.complex128)
        for b in range(nb):
            grad_windows = (outputs[:, b].reshape(v, hp * wp).T
                            @ taps.conj()).reshape(hp, wp, fx, fy)
            _scatter_windows(acc[b], grad_windows, (fx, fy))
        return acc
    _, hp, wp = outputs.shape
    h, w = hp + fx - 1, wp + fy - 1
    taps = bank.filters.reshape(v, bank.bands * fx * fy)
    grad_cols = outputs.reshape(v, hp * wp).T @ taps.conj()
    acc = np.zeros((bank.bands, h, w), dtype=np.complex128)
    for c in range(bank.bands):
        grad_windows = grad_cols[:, c * fx * fy:(c + 1) * fx * fy] \
            .reshape(hp, wp, fx, fy)
        _scatter_windows(acc[c], grad_windows, (fx, fy))
    return acc


def _scatter_windows(acc, grad_windows, window):
    """Accumulate window-oriented gradients back onto the source grid."""
    fx, fy = window
    hp, wp = grad_windows.shape[:2]
    for mx in range(fx):
        for my in range(fy):
            acc[fx - 1 - mx:fx - 1 - mx + hp,
                fy - 1 - my:fy - 1 - my + wp] += grad_windows[:, :, mx, my]


def residual_project(bank: FilterBank, bands, ratio: float) -> np.ndarray:
    """First-order projector ``bands - ratio * J^H(J(bands))``.

    With an annihilating bank this removes the component the filters respond
    to while passing exactly-annihilated inputs through unchanged.
    """
    return bands - ratio * apply_filterbank_adjoint(
        bank, apply_filterbank(bank, bands))
