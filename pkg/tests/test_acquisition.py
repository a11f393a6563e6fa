import json

import numpy as np
import pytest

from slr_recon.acquisition import (MultiChannelKSpace, SamplingMask,
                                   add_noise, apply_adjoint, apply_forward,
                                   centered_block, kspace_inner, load_dataset,
                                   make_mask, make_phantom,
                                   make_sensitivities,
                                   make_separable_edge_phantom, simulate,
                                   synth_dataset, SynthConfig)
from slr_recon.tensor_io import Rng, fft2, fftshift2


def valid_conv2(z, q):
    """Brute-force valid linear 2-D convolution oracle."""
    H, W = z.shape
    fx, fy = q.shape
    out = np.zeros((H - fx + 1, W - fy + 1), dtype=complex)
    for a in range(H - fx + 1):
        for b in range(W - fy + 1):
            acc = 0.0
            for mx in range(fx):
                for my in range(fy):
                    acc += z[a + fx - 1 - mx, b + fy - 1 - my] * q[mx, my]
            out[a, b] = acc
    return out


class TestPhantom:
    def test_zero_shapes_gives_zero_image(self):
        ph = make_phantom(Rng(0), (16, 16), n_shapes=0)
        assert np.all(ph.image == 0)

    def test_deterministic_under_seed(self):
        a = make_phantom(Rng(11), (32, 32))
        b = make_phantom(Rng(11), (32, 32))
        assert np.array_equal(a.image, b.image)
        assert np.array_equal(a.regions, b.regions)

    def test_piecewise_constant_on_regions(self):
        ph = make_phantom(Rng(3), (48, 48), n_shapes=5)
        for label in np.unique(ph.regions):
            vals = ph.image[ph.regions == label]
            assert np.all(vals == vals[0])

    def test_gradient_sparsity(self):
        # Fraction of pixels with a nonzero discrete gradient stays below 25%.
        fractions = []
        for seed in range(5):
            ph = make_phantom(Rng(seed), (64, 64))
            gx = np.diff(ph.image, axis=0, prepend=ph.image[:1])
            gy = np.diff(ph.image, axis=1, prepend=ph.image[:, :1])
            fractions.append(np.mean((np.abs(gx) + np.abs(gy)) > 1e-12))
        assert np.mean(fractions) < 0.25

    def test_rejects_tiny_grid(self):
        with pytest.raises(ValueError):
            make_phantom(Rng(0), (8, 8))


class TestSeparableEdgePhantom:
    def test_gradient_annihilation_is_exact(self):
        # Both gradient-weighted copies are annihilated by the returned taps,
        # verified against the brute-force valid-convolution oracle.
        kspace, taps, _ = make_separable_edge_phantom(Rng(5), (24, 24))
        spec = fftshift2(kspace)
        h, w = spec.shape
        kx = np.arange(-(h // 2), (h + 1) // 2)[:, None]
        ky = np.arange(-(w // 2), (w + 1) // 2)[None, :]
        scale = np.linalg.norm(spec)
        for band in (2j * np.pi * kx * spec, 2j * np.pi * ky * spec):
            residual = valid_conv2(band, taps)
            assert np.abs(residual).max() < 1e-10 * scale

    def test_edge_pixels_flag_jump_lines(self):
        _, _, edges = make_separable_edge_phantom(Rng(7), (32, 32))
        assert edges.any() and not edges.all()


class TestSensitivities:
    def test_single_channel_has_unit_modulus(self):
        coils = make_sensitivities(Rng(0), (24, 24), 1, bandwidth=5)
        assert np.allclose(np.abs(coils.maps[0]), 1.0, atol=1e-12)

    def test_sum_of_squares_is_one(self):
        coils = make_sensitivities(Rng(1), (32, 32), 4, bandwidth=7)
        sos = np.sum(np.abs(coils.maps) ** 2, axis=0)
        assert np.allclose(sos, 1.0, atol=1e-10)

    def test_raw_maps_exactly_bandlimited(self):
        coils = make_sensitivities(Rng(2), (32, 32), 4, bandwidth=5,
                                   normalize=False)
        for m in coils.maps:
            spec = fftshift2(fft2(m))
            outside = spec.copy()
            centered_block(outside, (5, 5))[:] = 0
            assert np.abs(outside).max() < 1e-10 * np.abs(spec).max()

    def test_normalized_maps_mostly_in_band(self):
        coils = make_sensitivities(Rng(3), (32, 32), 4, bandwidth=5)
        for m in coils.maps:
            spec = fftshift2(fft2(m))
            total = np.sum(np.abs(spec) ** 2)
            outside = spec.copy()
            centered_block(outside, (5, 5))[:] = 0
            assert np.sum(np.abs(outside) ** 2) < 0.10 * total

    def test_sos_energy_conservation(self):
        coils = make_sensitivities(Rng(4), (24, 24), 6, bandwidth=5)
        image = Rng(5).complex_normal((24, 24))
        sos = np.sum(np.abs(coils.maps * image[None]) ** 2, axis=0)
        assert np.allclose(sos, np.abs(image) ** 2, atol=1e-10)

    def test_bandwidth_validation(self):
        with pytest.raises(ValueError):
            make_sensitivities(Rng(0), (16, 16), 2, bandwidth=20)


class TestMask:
    def test_acceleration_one_full(self):
        mask = make_mask(Rng(0), (16, 16), "variable-density-2d", 1.0)
        assert mask.mask.all()

    def test_uniform_lines_every_other_row(self):
        mask = make_mask(Rng(0), (8, 8), "uniform-lines", 2)
        rows = mask.mask[:, 0]
        assert mask.mask.sum() == 8 * 4
        assert np.array_equal(rows, np.tile([True, False], 4)) \
            or np.array_equal(rows, np.tile([False, True], 4))
        assert np.all(mask.mask == rows[:, None])

    def test_vd2d_fraction_near_quarter(self):
        fractions = [make_mask(Rng(seed), (64, 64), "variable-density-2d", 4.0)
                     .fraction() for seed in range(100)]
        assert 0.20 <= np.mean(fractions) <= 0.30

    def test_vd_lines_fraction(self):
        fractions = [make_mask(Rng(seed), (64, 64), "variable-density-lines",
                               2.0).fraction() for seed in range(50)]
        assert abs(np.mean(fractions) - 0.5) < 0.1

    def test_calibration_region_fully_sampled(self):
        mask = make_mask(Rng(1), (32, 32), "variable-density-2d", 4.0,
                         calib_extent=8)
        assert mask.calib == (8, 8)
        shifted = fftshift2(mask.mask)
        assert centered_block(shifted, (8, 8)).all()

    def test_mask_idempotent_and_reproducible(self):
        a = make_mask(Rng(9), (32, 32), "variable-density-2d", 4.0)
        b = make_mask(Rng(9), (32, 32), "variable-density-2d", 4.0)
        assert np.array_equal(a.mask, b.mask)
        assert np.array_equal(a.mask & a.mask, a.mask)

    def test_calib_exceeding_grid_rejected(self):
        with pytest.raises(ValueError):
            make_mask(Rng(0), (16, 16), "uniform-lines", 2, calib_extent=20)


class TestForwardAdjoint:
    def _random_instance(self, rng, shape, channels=3):
        x = rng.complex_normal((channels,) + shape)
        mask = make_mask(Rng(int(rng.integers(0, 1 << 30))), shape,
                         "variable-density-2d", 2.0)
        return x, mask

    def test_full_mask_is_plain_fft(self):
        rng = Rng(0)
        x = rng.complex_normal((2, 8, 8))
        mask = SamplingMask(mask=np.ones((8, 8), dtype=bool))
        measured = apply_forward(x, mask)
        assert np.allclose(measured.data, fft2(x), atol=1e-12)

    def test_zero_image_zero_measurements(self):
        mask = make_mask(Rng(0), (8, 8), "uniform-lines", 2)
        measured = apply_forward(np.zeros((2, 8, 8), dtype=complex), mask)
        assert np.all(measured.data == 0)

    @pytest.mark.parametrize("shape", [(16, 16), (32, 48), (64, 64)])
    def test_adjoint_dot_product(self, shape):
        # <A x, y>_k == <x, A^H y> under the Parseval-weighted k-space pairing.
        rng = Rng(sum(shape))
        for _ in range(50):
            x, mask = self._random_instance(rng, shape)
            y = MultiChannelKSpace(data=rng.complex_normal(x.shape), mask=mask)
            lhs = sum(kspace_inner(apply_forward(x, mask).data[i], y.data[i])
                      for i in range(x.shape[0]))
            rhs = np.vdot(apply_adjoint(y), x)
            assert abs(lhs - rhs) / abs(rhs) < 1e-10

    def test_adjoint_of_forward_full_mask_is_identity(self):
        rng = Rng(1)
        x = rng.complex_normal((2, 12, 12))
        mask = SamplingMask(mask=np.ones((12, 12), dtype=bool))
        back = apply_adjoint(apply_forward(x, mask))
        assert np.abs(back - x).max() < 1e-12

    def test_normal_operator_idempotent_in_fourier(self):
        rng = Rng(2)
        x = rng.complex_normal((1, 16, 16))
        mask = make_mask(Rng(3), (16, 16), "variable-density-2d", 3.0)
        once = fft2(apply_adjoint(apply_forward(x, mask)))
        assert np.allclose(once * mask.mask, once, atol=1e-9)
        assert np.allclose(once[:, ~mask.mask], 0.0, atol=1e-9)


class TestNoise:
    def test_zero_sigma_unchanged(self):
        rng = Rng(0)
        mask = make_mask(Rng(1), (16, 16), "uniform-lines", 2)
        measured = apply_forward(rng.complex_normal((2, 16, 16)), mask)
        noisy = add_noise(measured, rng, 0.0)
        assert np.array_equal(noisy.data, measured.data)

    def test_off_mask_stays_zero(self):
        rng = Rng(2)
        mask = make_mask(Rng(3), (16, 16), "uniform-lines", 2)
        measured = apply_forward(rng.complex_normal((2, 16, 16)), mask)
        noisy = add_noise(measured, rng, 0.1)
        assert np.all(noisy.data[:, ~mask.mask] == 0)

    def test_component_std(self):
        rng = Rng(4)
        mask = make_mask(Rng(5), (64, 64), "variable-density-2d", 2.0)
        measured = apply_forward(np.zeros((4, 64, 64), dtype=complex), mask)
        noisy = add_noise(measured, rng, 0.05)
        samples = noisy.data[:, mask.mask]
        assert abs(samples.real.std() - 0.05) / 0.05 < 0.05
        assert abs(samples.imag.std() - 0.05) / 0.05 < 0.05


class TestDataset:
    def test_empty_dataset(self, tmp_path):
        cfg = SynthConfig(counts={"train": 0, "val": 0, "test": 0},
                          shape=(16, 16), channels=2, bandwidth=5, seed=1)
        manifest = synth_dataset(cfg, tmp_path)
        assert manifest["examples"] == []

    def test_reproducible_bytes(self, tmp_path):
        cfg = SynthConfig(counts={"train": 2, "val": 0, "test": 0},
                          shape=(16, 16), channels=2, bandwidth=5, seed=7)
        m1 = synth_dataset(cfg, tmp_path / "a")
        m2 = synth_dataset(cfg, tmp_path / "b")
        for e1, e2 in zip(m1["examples"], m2["examples"]):
            assert e1["sha256s"] == e2["sha256s"]
        for name in ("manifest.json",):
            assert (tmp_path / "a" / name).read_bytes() == \
                (tmp_path / "b" / name).read_bytes()

    def test_checksums_match_recomputed(self, tmp_path):
        import hashlib
        cfg = SynthConfig(counts={"train": 1, "val": 0, "test": 0},
                          shape=(16, 16), channels=2, bandwidth=5, seed=2)
        manifest = synth_dataset(cfg, tmp_path)
        entry = manifest["examples"][0]
        for key, rel in (("gt", entry["gt_path"]), ("ksp", entry["ksp_path"]),
                         ("mask", entry["mask_path"])):
            digest = hashlib.sha256((tmp_path / rel).read_bytes()).hexdigest()
            assert digest == entry["sha256s"][key]

    def test_roundtrip_load(self, tmp_path):
        cfg = SynthConfig(counts={"train": 1, "val": 1, "test": 0},
                          shape=(16, 16), channels=3, bandwidth=5,
                          noise_sigma=0.01, seed=3)
        synth_dataset(cfg, tmp_path)
        examples = load_dataset(tmp_path / "manifest.json", split="val")
        assert len(examples) == 1
        acq = examples[0]
        assert acq.truth.shape == (3, 16, 16)
        assert acq.kspace.data.shape == (3, 16, 16)
        # Measured data is zero off-mask by construction.
        assert np.all(acq.kspace.data[:, ~acq.kspace.mask.mask] == 0)

    def test_manifest_fields(self, tmp_path):
        cfg = SynthConfig(counts={"train": 1, "val": 0, "test": 0},
                          shape=(16, 16), channels=2, bandwidth=5, seed=4)
        synth_dataset(cfg, tmp_path)
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        for key in ("version", "seed", "shape", "channels", "mask_kind",
                    "acceleration", "noise_sigma", "examples"):
            assert key in manifest


def test_simulate_measured_matches_truth_on_mask():
    acq = simulate(Rng(0), (24, 24), 3, 5, 4, "variable-density-2d", 2.0, 6,
                   0.0)
    expected = fft2(acq.truth) * acq.kspace.mask.mask
    assert np.allclose(acq.kspace.data, expected, atol=1e-9)
