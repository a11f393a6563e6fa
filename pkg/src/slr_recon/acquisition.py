"""Measurement simulation: phantoms, coil maps, masks, forward model, datasets.

The forward operator maps an M-channel image ``(M, H, W)`` to masked k-space
per channel: unnormalized FFT followed by zeroing of unsampled locations.
Its adjoint (mask then normalized inverse FFT) is the zero-filled
reconstruction; the two are adjoint under the Parseval pairing in which
k-space inner products carry a ``1/(H*W)`` weight (:func:`kspace_inner`).

Masks and k-space arrays are stored in standard DFT order; "centered"
quantities (calibration regions, variable-density profiles) live on the
signed-frequency grid and are mapped to storage order with the shift helpers
from :mod:`slr_recon.tensor_io`.

All functions are pure and deterministic given an :class:`~slr_recon.tensor_io.Rng`;
dataset synthesis derives one child stream per example so that chunked or
parallel synthesis writes identical files.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .tensor_io import (Rng, fft2, fftshift2, ifft2, ifftshift2, load_tensor,
                        save_tensor)

MASK_KINDS = ("uniform-lines", "variable-density-lines", "variable-density-2d")

MANIFEST_VERSION = 1


@dataclass
class SamplingMask:
    """Boolean k-space sampling indicator in storage (DFT) order.

    ``calib`` gives the extents of a fully sampled rectangle centered on the
    zero frequency (in the shifted arrangement), or ``None``.
    """

    mask: np.ndarray
    calib: tuple[int, int] | None = None

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.ndim != 2:
            raise ValueError("mask must be 2-D")
        if self.calib is not None:
            ch, cw = self.calib
            if ch > self.mask.shape[0] or cw > self.mask.shape[1]:
                raise ValueError("calibration region exceeds the grid")
            if ch > 0 and cw > 0 and not np.all(
                    centered_block(fftshift2(self.mask), (ch, cw))):
                raise ValueError("calibration region is not fully sampled")

    @property
    def shape(self):
        return self.mask.shape

    def fraction(self) -> float:
        return float(self.mask.mean())


@dataclass
class CoilSensitivities:
    """Per-channel complex sensitivity maps ``(M, H, W)``.

    ``bandwidth`` is the extent of the centered k-space window holding all
    energy of each raw map; ``normalized`` records whether the maps were
    rescaled to unit sum-of-squares at every pixel (which widens the spectral
    support slightly).
    """

    maps: np.ndarray
    bandwidth: int
    normalized: bool = True

    def __post_init__(self):
        self.maps = np.asarray(self.maps, dtype=np.complex128)
        if self.maps.ndim != 3:
            raise ValueError("sensitivity maps must be (M, H, W)")
        if self.normalized:
            sos = np.sum(np.abs(self.maps) ** 2, axis=0)
            if not np.allclose(sos, 1.0, atol=1e-10):
                raise ValueError("sum-of-squares over channels must be 1")

    @property
    def nchannels(self):
        return self.maps.shape[0]


@dataclass
class Phantom:
    """Complex ground-truth image with an integer region label per pixel."""

    image: np.ndarray
    regions: np.ndarray

    def __post_init__(self):
        self.image = np.asarray(self.image, dtype=np.complex128)
        self.regions = np.asarray(self.regions, dtype=np.int64)
        if self.image.shape != self.regions.shape:
            raise ValueError("image and region map shapes differ")


@dataclass
class MultiChannelKSpace:
    """Measured multi-channel k-space ``(M, H, W)`` paired with its mask."""

    data: np.ndarray
    mask: SamplingMask

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.complex128)
        if self.data.ndim != 3:
            raise ValueError("k-space data must be (M, H, W)")
        if self.data.shape[1:] != self.mask.shape:
            raise ValueError("k-space grid does not match the mask")

    @property
    def nchannels(self):
        return self.data.shape[0]


@dataclass
class Acquisition:
    """Ground-truth channel images plus their simulated measurements."""

    truth: np.ndarray            # (M, H, W) channel images s_i * image
    kspace: MultiChannelKSpace
    noise_sigma: float = 0.0


def centered_block(arr, extents):
    """View of the centered ``extents`` block of a shifted (centered) array."""
    h, w = arr.shape[-2:]
    ch, cw = extents
    r0, c0 = h // 2 - ch // 2, w // 2 - cw // 2
    return arr[..., r0:r0 + ch, c0:c0 + cw]


def kspace_inner(a, b):
    """Inner product with the Parseval weight 1/(H*W) on the k-space grid."""
    n = a.shape[-2] * a.shape[-1]
    return np.vdot(b, a) / n


def make_phantom(rng: Rng, shape, n_shapes: int = 6) -> Phantom:
    """Piecewise-constant complex phantom from overlapping ellipses/rectangles.

    Each shape gets a random complex amplitude with modulus in [0.2, 1];
    later shapes overwrite earlier ones, so the image is constant on every
    labeled region.  ``n_shapes = 0`` yields the zero background.
    """
    h, w = shape
    if h < 16 or w < 16:
        raise ValueError("phantom grid must be at least 16x16")
    image = np.zeros((h, w), dtype=np.complex128)
    regions = np.zeros((h, w), dtype=np.int64)
    yy, xx = np.mgrid[0:h, 0:w]
    for label in range(1, n_shapes + 1):
        cy = rng.uniform(0.2 * h, 0.8 * h)
        cx = rng.uniform(0.2 * w, 0.8 * w)
        ay = rng.uniform(0.08 * h, 0.3 * h)
        ax = rng.uniform(0.08 * w, 0.3 * w)
        modulus = rng.uniform(0.2, 1.0)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        amplitude = modulus * np.exp(1j * phase)
        if rng.random() < 0.5:
            theta = rng.uniform(0.0, np.pi)
            u = (yy - cy) * np.cos(theta) + (xx - cx) * np.sin(theta)
            v = -(yy - cy) * np.sin(theta) + (xx - cx) * np.cos(theta)
            inside = (u / ay) ** 2 + (v / ax) ** 2 <= 1.0
        else:
            inside = (np.abs(yy - cy) <= ay) & (np.abs(xx - cx) <= ax)
        image[inside] = amplitude
        regions[inside] = label
    return Phantom(image=image, regions=regions)


def _jump_coefficients(positions, values, freqs):
    """Fourier coefficients of a 1-D piecewise-constant periodic function.

    ``positions`` are the sorted jump locations in [0, 1); segment ``j`` holds
    ``values[j]`` on [positions[j], positions[j+1]).  Analytic, exact.
    """
    positions = np.asarray(positions, dtype=float)
    values = np.asarray(values, dtype=complex)
    ends = np.roll(positions, -1)
    ends[-1] += 1.0
    coeffs = np.zeros(len(freqs), dtype=complex)
    for k_idx, k in enumerate(freqs):
        if k == 0:
            coeffs[k_idx] = np.sum(values * (ends - positions))
        else:
            jk = 2j * np.pi * k
            coeffs[k_idx] = np.sum(
                values * (np.exp(-jk * positions) - np.exp(-jk * ends)) / jk)
    return coeffs


def make_separable_edge_phantom(rng: Rng, shape, jumps: int = 2,
                                terms: int = 2, offset: complex = 0.0):
    """Piecewise-constant phantom whose edges are zero sets of a bandlimited
    function, built so the gradient annihilation relation holds exactly.

    The image is ``offset`` plus a sum of separable terms ``g_p(x) h_p(y)``
    of 1-D piecewise-constant functions sharing ``jumps`` jump lines per axis
    (``jumps`` must be even for the edge function to be periodic).  A nonzero
    offset raises the flat background without touching the gradient bands.
    Returns ``(kspace, annihilator, edge_pixels)``: the exact
    Fourier-coefficient window in storage order, the
    ``(jumps+1) x (jumps+1)`` annihilating filter taps (centered
    arrangement), and a boolean map of pixels adjacent to the jump lines.
    """
    h, w = shape
    if jumps % 2 != 0 or jumps < 2:
        raise ValueError("the jump count per axis must be even and >= 2")
    kx = np.arange(-(h // 2), (h + 1) // 2)
    ky = np.arange(-(w // 2), (w + 1) // 2)

    # Common jump lines; margins keep the lines separated on the grid.
    pos_x = np.sort(rng.uniform(0.1, 0.9, jumps))
    pos_y = np.sort(rng.uniform(0.1, 0.9, jumps))

    spectrum = np.zeros((h, w), dtype=complex)
    for _ in range(terms):
        gx = _jump_coefficients(pos_x, rng.complex_normal(jumps), kx)
        hy = _jump_coefficients(pos_y, rng.complex_normal(jumps), ky)
        spectrum += np.outer(gx, hy)
    spectrum[h // 2, w // 2] += offset * h * w   # zero-frequency bin

    # Edge function: product over jump lines of sin(pi(t - a_j)) per axis;
    # with an even jump count it is 1-periodic with bandwidth jumps/2, so the
    # uniform quadrature below recovers its Fourier coefficients exactly.
    half = jumps // 2
    fx = np.arange(-half, half + 1)
    grid = np.linspace(0.0, 1.0, 4 * (jumps + 1), endpoint=False)
    mu_x = np.prod(np.sin(np.pi * (grid[:, None] - pos_x[None, :])), axis=1)
    mu_y = np.prod(np.sin(np.pi * (grid[:, None] - pos_y[None, :])), axis=1)
    basis = np.exp(-2j * np.pi * np.outer(fx, grid))
    taps_x = basis @ mu_x / len(grid)
    taps_y = basis @ mu_y / len(grid)
    annihilator = np.outer(taps_x, taps_y)

    edge_pixels = np.zeros((h, w), dtype=bool)
    for a in pos_x:
        edge_pixels[int(np.floor(a * h)) % h, :] = True
        edge_pixels[(int(np.floor(a * h)) + 1) % h, :] = True
    for a in pos_y:
        edge_pixels[:, int(np.floor(a * w)) % w] = True
        edge_pixels[:, (int(np.floor(a * w)) + 1) % w] = True

    return ifftshift2(spectrum), annihilator, edge_pixels


def make_sensitivities(rng: Rng, shape, nchannels: int, bandwidth: int,
                       normalize: bool = True) -> CoilSensitivities:
    """Smooth coil maps: inverse FFT of random coefficients confined to a
    centered ``bandwidth x bandwidth`` window, optionally normalized to unit
    sum of squares per pixel.

    The raw (``normalize=False``) maps are exactly bandlimited, which makes
    the cross-channel annihilation relations exact with any filter window at
    least as large as ``bandwidth``.
    """
    h, w = shape
    if nchannels < 1:
        raise ValueError("need at least one channel")
    if bandwidth > min(h, w):
        raise ValueError("bandwidth larger than the grid")
    maps = np.zeros((nchannels, h, w), dtype=np.complex128)
    for i in range(nchannels):
        coeffs = np.zeros((h, w), dtype=np.complex128)
        block = rng.complex_normal((bandwidth, bandwidth))
        # Taper keeps the maps smooth; a deterministic low-frequency offset
        # keeps the sum of squares bounded away from zero.
        ix = np.arange(bandwidth) - bandwidth // 2
        taper = np.exp(-(ix[:, None] ** 2 + ix[None, :] ** 2)
                       / max(1.0, (bandwidth / 2.0) ** 2))
        block = block * taper
        block[bandwidth // 2, bandwidth // 2] += 2.0 * bandwidth
        centered_block(coeffs, (bandwidth, bandwidth))[:] = block
        maps[i] = ifft2(ifftshift2(coeffs))
    if normalize:
        sos = np.sqrt(np.sum(np.abs(maps) ** 2, axis=0))
        maps = maps / sos
    return CoilSensitivities(maps=maps, bandwidth=bandwidth,
                             normalized=normalize)


def _renormalize(p, target):
    """Scale a probability profile so its expected count hits ``target``,
    clipping at 1 and redistributing the surplus to unsaturated entries."""
    p = np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
    for _ in range(60):
        total = p.sum()
        if total <= 0 or abs(total - target) < 1e-9:
            break
        unsat = p < 1.0
        deficit = target - p[~unsat].sum()
        if deficit <= 0 or not np.any(unsat):
            p = np.clip(p * (target / total), 0.0, 1.0)
            break
        p = np.where(unsat, np.minimum(p * (deficit / p[unsat].sum()), 1.0), p)
    return np.clip(p, 0.0, 1.0)


def make_mask(rng: Rng, shape, kind: str, acceleration: float,
              calib_extent: int = 0) -> SamplingMask:
    """Sampling mask with expected fraction ~ 1/acceleration.

    Kinds: ``uniform-lines`` keeps phase-encode rows with signed frequency
    divisible by the acceleration; ``variable-density-lines`` draws rows with
    probability proportional to ``exp(-(k/sigma)^2)``, ``sigma = H/6``;
    ``variable-density-2d`` does the same pointwise with
    ``sigma = min(shape)/6``.  A ``calib_extent`` > 0 forces a fully sampled
    centered band of rows (line kinds) or square (2-D kind); the random part
    is renormalized so the total expected fraction still hits the target.
    """
    h, w = shape
    if acceleration < 1:
        raise ValueError("acceleration must be >= 1")
    if kind not in MASK_KINDS:
        raise ValueError(f"unknown mask kind {kind!r}")
    if calib_extent > min(h, w):
        raise ValueError("calibration extent exceeds the grid")

    rows_k = np.arange(h) - h // 2   # signed frequency per shifted row
    cols_k = np.arange(w) - w // 2

    if kind == "uniform-lines":
        step = int(round(acceleration))
        shifted = np.zeros((h, w), dtype=bool)
        shifted[rows_k % step == 0, :] = True
    elif kind == "variable-density-lines":
        profile = np.exp(-((rows_k / (h / 6.0)) ** 2))
        calib_rows = np.zeros(h, dtype=bool)
        if calib_extent > 0:
            lo = h // 2 - calib_extent // 2
            calib_rows[lo:lo + calib_extent] = True
        target = h / acceleration - calib_rows.sum()
        p = np.zeros(h)
        p[~calib_rows] = _renormalize(profile[~calib_rows], max(0.0, target))
        p[calib_rows] = 1.0
        shifted = (rng.random(h) < p)[:, None] & np.ones((1, w), dtype=bool)
    else:
        sigma = min(h, w) / 6.0
        profile = np.exp(-(rows_k[:, None] ** 2 + cols_k[None, :] ** 2)
                         / sigma ** 2)
        calib = np.zeros((h, w), dtype=bool)
        if calib_extent > 0:
            centered_block(calib, (calib_extent, calib_extent))[:] = True
        target = h * w / acceleration - calib.sum()
        p = np.ones((h, w))
        p[~calib] = _renormalize(profile[~calib], max(0.0, target))
        shifted = rng.random((h, w)) < p

    calib_desc = None
    if calib_extent > 0:
        calib_desc = (calib_extent, calib_extent) \
            if kind == "variable-density-2d" else (calib_extent, w)
        centered_block(shifted, calib_desc)[:] = True
    return SamplingMask(mask=ifftshift2(shifted), calib=calib_desc)


def apply_forward(channel_images, mask: SamplingMask) -> MultiChannelKSpace:
    """Per-channel unnormalized FFT followed by the sampling mask."""
    imgs = np.asarray(channel_images, dtype=np.complex128)
    if imgs.ndim != 3:
        raise ValueError("expected channel images shaped (M, H, W)")
    if imgs.shape[1:] != mask.shape:
        raise ValueError("image grid does not match the mask")
    data = fft2(imgs) * mask.mask
    return MultiChannelKSpace(data=data, mask=mask)


def apply_adjoint(measured: MultiChannelKSpace):
    """Mask then normalized inverse FFT: the zero-filled reconstruction."""
    return ifft2(measured.data * measured.mask.mask)


def add_noise(measured: MultiChannelKSpace, rng: Rng,
              sigma: float) -> MultiChannelKSpace:
    """Add i.i.d. complex Gaussian noise (per-component std ``sigma``) on the
    sampled locations only."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return MultiChannelKSpace(data=measured.data.copy(), mask=measured.mask)
    noise = rng.complex_normal(measured.data.shape, sigma=sigma)
    data = measured.data + noise * measured.mask.mask
    return MultiChannelKSpace(data=data, mask=measured.mask)


def simulate(rng: Rng, shape, nchannels: int, bandwidth: int, n_shapes: int,
             mask_kind: str, acceleration: float, calib_extent: int,
             noise_sigma: float) -> Acquisition:
    """One full synthetic acquisition: phantom, coils, mask, measurements."""
    phantom = make_phantom(rng, shape, n_shapes)
    coils = make_sensitivities(rng, shape, nchannels, bandwidth)
    mask = make_mask(rng, shape, mask_kind, acceleration, calib_extent)
    truth = coils.maps * phantom.image[None]
    measured = apply_forward(truth, mask)
    measured = add_noise(measured, rng, noise_sigma)
    return Acquisition(truth=truth, kspace=measured, noise_sigma=noise_sigma)


@dataclass
class SynthConfig:
    """Dataset synthesis parameters (one mask and phantom per example)."""

    counts: dict = field(default_factory=lambda: {"train": 0, "val": 0,
                                                  "test": 0})
    shape: tuple = (32, 32)
    channels: int = 4
    bandwidth: int = 7
    n_shapes: int = 6
    mask_kind: str = "variable-density-2d"
    acceleration: float = 4.0
    calib_extent: int = 8
    noise_sigma: float = 0.0
    seed: int = 0


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        digest.update(fh.read())
    return digest.hexdigest()


def synth_dataset(config: SynthConfig, out_dir) -> dict:
    """Write per-example CTEN triples plus a JSON manifest; returns the
    manifest.  Fully reproducible from ``config.seed``."""
    os.makedirs(out_dir, exist_ok=True)
    examples = []
    index = 0
    for split in ("train", "val", "test"):
        for _ in range(int(config.counts.get(split, 0))):
            rng = Rng(config.seed).derive(index + 1)
            acq = simulate(rng, tuple(config.shape), config.channels,
                           config.bandwidth, config.n_shapes,
                           config.mask_kind, config.acceleration,
                           config.calib_extent, config.noise_sigma)
            ex_id = f"{split}-{index:04d}"
            paths = {key: f"{ex_id}.{key}.cten" for key in ("gt", "ksp", "mask")}
            save_tensor(os.path.join(out_dir, paths["gt"]), acq.truth)
            save_tensor(os.path.join(out_dir, paths["ksp"]), acq.kspace.data)
            save_tensor(os.path.join(out_dir, paths["mask"]),
                        acq.kspace.mask.mask.astype(np.complex128))
            examples.append({
                "id": ex_id,
                "gt_path": paths["gt"],
                "ksp_path": paths["ksp"],
                "mask_path": paths["mask"],
                "sha256s": {key: _sha256(os.path.join(out_dir, p))
                            for key, p in paths.items()},
            })
            index += 1
    manifest = {
        "version": MANIFEST_VERSION,
        "seed": config.seed,
        "shape": list(config.shape),
        "channels": config.channels,
        "mask_kind": config.mask_kind,
        "acceleration": config.acceleration,
        "noise_sigma": config.noise_sigma,
        "calib_extent": config.calib_extent,
        "examples": examples,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return manifest


def load_dataset(manifest_path, split: str | None = None):
    """Load dataset examples back as ``Acquisition`` values.

    ``split`` filters by the id prefix written by :func:`synth_dataset`.
    """
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    base = os.path.dirname(os.path.abspath(manifest_path))
    calib_extent = int(manifest.get("calib_extent", 0))
    out = []
    for entry in manifest["examples"]:
        if split is not None and not entry["id"].startswith(split + "-"):
            continue
        truth = load_tensor(os.path.join(base, entry["gt_path"]))
        data = load_tensor(os.path.join(base, entry["ksp_path"]))
        mask_arr = load_tensor(os.path.join(base, entry["mask_path"])).real > 0.5
        calib = None
        if calib_extent > 0:
            if manifest["mask_kind"] == "variable-density-2d":
                calib = (calib_extent, calib_extent)
            else:
                calib = (calib_extent, mask_arr.shape[1])
        mask = SamplingMask(mask=mask_arr, calib=calib)
        out.append(Acquisition(
            truth=truth, kspace=MultiChannelKSpace(data=data, mask=mask),
            noise_sigma=float(manifest.get("noise_sigma", 0.0))))
    return out
