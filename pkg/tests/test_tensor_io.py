import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slr_recon.tensor_io import (CtenFormatError, Rng, fft2, fftshift2,
                                 freq_grid, ifft2, ifftshift2, load_tensor,
                                 save_tensor)


def rand_complex(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


class TestFft:
    def test_impulse_to_ones(self):
        x = np.zeros((4, 4), dtype=complex)
        x[0, 0] = 1.0
        assert np.allclose(fft2(x), np.ones((4, 4)), atol=1e-14)

    def test_ones_to_scaled_impulse(self):
        x = np.ones((4, 4), dtype=complex)
        expected = np.zeros((4, 4), dtype=complex)
        expected[0, 0] = 16.0
        assert np.allclose(fft2(x), expected, atol=1e-12)

    def test_ifft_of_ones_is_unit_impulse(self):
        x = np.ones((4, 4), dtype=complex)
        expected = np.zeros((4, 4), dtype=complex)
        expected[0, 0] = 1.0
        assert np.allclose(ifft2(x), expected, atol=1e-14)

    def test_roundtrip_identity(self):
        rng = np.random.default_rng(0)
        x = rand_complex(rng, (8, 8))
        err = np.linalg.norm(ifft2(fft2(x)) - x) / np.linalg.norm(x)
        assert err < 1e-12

    def test_ifft_linearity(self):
        rng = np.random.default_rng(1)
        x, y = rand_complex(rng, (6, 5)), rand_complex(rng, (6, 5))
        a, b = 2.0 - 1.0j, -0.5 + 3.0j
        lhs = ifft2(a * x + b * y)
        rhs = a * ifft2(x) + b * ifft2(y)
        assert np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs) < 1e-12

    @pytest.mark.parametrize("shape", [(3, 7), (16, 16), (30, 12), (64, 64)])
    def test_parseval(self, shape):
        rng = np.random.default_rng(sum(shape))
        x = rand_complex(rng, shape)
        image_energy = np.sum(np.abs(x) ** 2)
        kspace_energy = np.sum(np.abs(fft2(x)) ** 2) / (shape[0] * shape[1])
        assert abs(image_energy - kspace_energy) / image_energy < 1e-10

    @given(st.integers(2, 12), st.integers(2, 12), st.integers(0, 11),
           st.integers(0, 11))
    @settings(max_examples=25, deadline=None)
    def test_shift_theorem(self, h, w, sx, sy):
        # Circular shift in image domain <-> linear phase in k-space.
        rng = np.random.default_rng(h * 13 + w)
        x = rand_complex(rng, (h, w))
        kx, ky = freq_grid((h, w))
        shifted = np.roll(x, (sx % h, sy % w), axis=(0, 1))
        phase = np.exp(-2j * np.pi * (kx * (sx % h) / h + ky * (sy % w) / w))
        err = np.linalg.norm(fft2(shifted) - phase * fft2(x))
        assert err / np.linalg.norm(fft2(x)) < 1e-10

    def test_axis_out_of_range(self):
        with pytest.raises(ValueError):
            fft2(np.zeros((4, 4), dtype=complex), axes=(0, 5))

    def test_shift_helpers_invert(self):
        rng = np.random.default_rng(2)
        x = rand_complex(rng, (5, 8))
        assert np.array_equal(ifftshift2(fftshift2(x)), x)

    def test_freq_grid_signed_range(self):
        kx, ky = freq_grid((4, 5))
        assert kx[:, 0].tolist() == [0.0, 1.0, -2.0, -1.0]
        assert ky[0, :].tolist() == [0.0, 1.0, 2.0, -2.0, -1.0]


class TestRng:
    def test_reproducible_streams(self):
        a, b = Rng(1234), Rng(1234)
        assert np.array_equal(a.standard_normal(10_000), b.standard_normal(10_000))

    def test_distinct_seeds_differ(self):
        assert not np.array_equal(Rng(1).standard_normal(100),
                                  Rng(2).standard_normal(100))

    def test_derived_streams_independent(self):
        base = Rng(7)
        a, b = base.derive(1), base.derive(2)
        assert not np.array_equal(a.standard_normal(64), b.standard_normal(64))

    def test_complex_normal_component_std(self):
        z = Rng(3).complex_normal((200, 200), sigma=0.5)
        assert abs(z.real.std() - 0.5) < 0.01
        assert abs(z.imag.std() - 0.5) < 0.01


class TestCten:
    def test_roundtrip_bit_identical(self, tmp_path):
        rng = np.random.default_rng(5)
        x = rand_complex(rng, (3, 4, 5))
        path = tmp_path / "t.cten"
        save_tensor(path, x)
        y = load_tensor(path)
        assert y.shape == x.shape
        assert np.array_equal(y, x)  # exact, not approximate

    def test_scalar_roundtrip(self, tmp_path):
        path = tmp_path / "s.cten"
        save_tensor(path, np.array(1.5 - 2.5j))
        y = load_tensor(path)
        assert y.shape == ()
        assert y == np.array(1.5 - 2.5j)

    def test_complex64_roundtrip(self, tmp_path):
        x = np.array([[1 + 2j, 3 - 4j]], dtype=np.complex64)
        path = tmp_path / "c8.cten"
        save_tensor(path, x)
        y = load_tensor(path)
        assert y.dtype == np.complex64
        assert np.array_equal(y, x)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.cten"
        path.write_bytes(b"NOPE" + bytes(16))
        with pytest.raises(CtenFormatError):
            load_tensor(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "t.cten"
        save_tensor(path, np.ones((4, 4), dtype=complex))
        raw = path.read_bytes()
        path.write_bytes(raw[:-8])
        with pytest.raises(CtenFormatError):
            load_tensor(path)

    def test_dimension_overflow(self, tmp_path):
        import struct
        path = tmp_path / "o.cten"
        header = b"CTEN" + struct.pack("<BBB", 1, 0, 2)
        header += struct.pack("<2Q", 1 << 40, 1 << 40)
        path.write_bytes(header)
        with pytest.raises(CtenFormatError):
            load_tensor(path)

    def test_save_is_deterministic(self, tmp_path):
        x = rand_complex(np.random.default_rng(9), (6, 6))
        p1, p2 = tmp_path / "a.cten", tmp_path / "b.cten"
        save_tensor(p1, x)
        save_tensor(p2, x)
        assert p1.read_bytes() == p2.read_bytes()
