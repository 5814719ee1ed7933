import numpy as np
import pytest

from helpers import slice_conv3d
from sthcsim.errors import DimensionError, NumericalConsistencyError
from sthcsim.spectral_engine import (
    FeatureVolume,
    FftConvBank,
    KernelSet,
    KernelShape,
    VideoVolume,
    direct_conv3d,
    fft_conv3d,
    fft_conv3d_bank,
    forward_st_fft,
    inverse_st_fft,
)


def rel_err(a, b):
    return float((np.abs(a - b) / np.maximum(1.0, np.abs(b))).max())


class TestVideoVolume:
    def test_valid(self):
        v = VideoVolume(np.zeros((2, 3, 4, 1)))
        assert (v.height, v.width, v.frames, v.channels) == (2, 3, 4, 1)

    def test_rejects_wrong_rank(self):
        with pytest.raises(DimensionError):
            VideoVolume(np.zeros((2, 3, 4)))

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            VideoVolume(-0.1 * np.ones((2, 2, 2, 1)))
        with pytest.raises(ValueError):
            VideoVolume(1.1 * np.ones((2, 2, 2, 1)))

    def test_rejects_non_finite(self):
        bad = np.zeros((2, 2, 2, 1))
        bad[0, 0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            VideoVolume(bad)


class TestKernelTypes:
    def test_kernel_shape_positive(self):
        with pytest.raises(DimensionError):
            KernelShape(0, 1, 1, 1)

    def test_kernel_set_validation(self):
        with pytest.raises(DimensionError):
            KernelSet(np.zeros((2, 3, 3, 2, 1)), np.zeros(3))
        ks = KernelSet(np.zeros((2, 3, 3, 2, 1)), np.zeros(2))
        assert ks.count == 2
        assert ks.shape == KernelShape(3, 3, 2, 1)

    def test_feature_volume_rank(self):
        with pytest.raises(DimensionError):
            FeatureVolume(np.zeros((2, 3, 4)))


class TestForwardStFft:
    def test_zero_volume_zero_spectrum(self):
        spec = forward_st_fft(np.zeros((3, 4, 2)), (5, 6, 3))
        assert spec.shape == (5, 6, 3)
        assert np.all(spec == 0)

    def test_unit_impulse_flat_spectrum(self):
        v = np.zeros((3, 3, 2))
        v[0, 0, 0] = 1.0
        spec = forward_st_fft(v, (7, 5, 4))
        assert np.allclose(spec, 1.0 + 0.0j, atol=1e-14)

    def test_round_trip(self):
        rng = np.random.default_rng(11)
        v = rng.random((4, 4, 3))
        back = inverse_st_fft(forward_st_fft(v, v.shape), v.shape)
        assert rel_err(back, v) <= 1e-12

    def test_parseval(self):
        rng = np.random.default_rng(12)
        for _ in range(5):
            v = rng.normal(size=(5, 4, 3))
            spec = forward_st_fft(v, (6, 6, 4))
            lhs = np.sum(np.abs(spec) ** 2)
            rhs = spec.size * np.sum(v**2)
            assert abs(lhs - rhs) <= 1e-12 * rhs

    def test_hermitian_symmetry(self):
        rng = np.random.default_rng(13)
        spec = forward_st_fft(rng.random((4, 5, 3)), (6, 7, 4))
        idx = [(-np.arange(n)) % n for n in spec.shape]
        mirrored = spec[np.ix_(*idx)]
        assert np.allclose(mirrored, np.conj(spec), atol=1e-12)

    def test_shape_errors(self):
        with pytest.raises(DimensionError):
            forward_st_fft(np.zeros((3, 3)), (3, 3, 3))
        with pytest.raises(DimensionError):
            forward_st_fft(np.zeros((3, 3, 3)), (2, 3, 3))


class TestInverseStFft:
    def test_constant_spectrum_is_impulse(self):
        out = inverse_st_fft(np.ones((4, 4, 3), dtype=complex), (4, 4, 3))
        expect = np.zeros((4, 4, 3))
        expect[0, 0, 0] = 1.0
        assert np.allclose(out, expect, atol=1e-14)

    def test_hermitian_violation_detected(self):
        spec = forward_st_fft(np.random.default_rng(14).random((4, 4, 3)), (4, 4, 3))
        spec[1, 2, 1] += 3.0
        with pytest.raises(NumericalConsistencyError):
            inverse_st_fft(spec, (4, 4, 3))

    def test_crop_bounds_checked(self):
        spec = np.ones((4, 4, 4), dtype=complex)
        with pytest.raises(DimensionError):
            inverse_st_fft(spec, (4, 4, 4), offset=(1, 0, 0))
        with pytest.raises(DimensionError):
            inverse_st_fft(spec, (5, 4, 4))

    def test_offset_crop(self):
        rng = np.random.default_rng(15)
        v = rng.random((5, 5, 4))
        spec = forward_st_fft(v, (5, 5, 4))
        out = inverse_st_fft(spec, (3, 3, 2), offset=(1, 2, 1))
        assert rel_err(out, v[1:4, 2:5, 1:3]) <= 1e-12


class TestDirectConv3d:
    def test_identity_kernel_crops_input(self):
        rng = np.random.default_rng(16)
        x = rng.random((5, 6, 4, 1))
        k = np.zeros((2, 2, 2, 1))
        k[0, 0, 0, 0] = 1.0
        out = direct_conv3d(x, k)
        assert np.array_equal(out, x[:4, :5, :3, 0])

    def test_counting_all_ones(self):
        out = direct_conv3d(np.ones((3, 3, 3, 1)), np.ones((2, 2, 2, 1)))
        assert out.shape == (2, 2, 2)
        assert np.all(out == 8.0)

    def test_cross_check_second_implementation(self):
        rng = np.random.default_rng(17)
        x = rng.random((8, 8, 6, 1))
        k = rng.normal(size=(3, 3, 2, 1))
        assert np.allclose(direct_conv3d(x, k), slice_conv3d(x, k), atol=1e-12)

    def test_multichannel_sums(self):
        rng = np.random.default_rng(18)
        x = rng.random((5, 5, 4, 2))
        k = rng.normal(size=(2, 2, 2, 2))
        assert np.allclose(direct_conv3d(x, k), slice_conv3d(x, k), atol=1e-12)

    def test_kernel_too_large(self):
        with pytest.raises(DimensionError):
            direct_conv3d(np.zeros((3, 3, 3, 1)), np.zeros((4, 2, 2, 1)))
        with pytest.raises(DimensionError):
            direct_conv3d(np.zeros((3, 3, 3, 1)), np.zeros((2, 2, 2, 3)))


class TestFftConv3d:
    def test_delta_kernel(self):
        rng = np.random.default_rng(19)
        x = rng.random((6, 5, 4, 1))
        k = np.zeros((3, 2, 2, 1))
        k[0, 0, 0, 0] = 1.0
        assert rel_err(fft_conv3d(x, k), x[:4, :4, :3, 0]) <= 1e-9

    @pytest.mark.parametrize("channels", [1, 2])
    def test_matches_direct(self, channels):
        rng = np.random.default_rng(20 + channels)
        for _ in range(10):
            h, w, t = rng.integers(3, 9), rng.integers(3, 9), rng.integers(2, 7)
            kh = rng.integers(1, min(3, h) + 1)
            kw = rng.integers(1, min(3, w) + 1)
            kt = rng.integers(1, min(2, t) + 1)
            x = rng.random((h, w, t, channels))
            k = rng.normal(size=(kh, kw, kt, channels))
            assert rel_err(fft_conv3d(x, k), direct_conv3d(x, k)) <= 1e-9

    def test_full_scale_extents(self):
        x = np.zeros((60, 80, 16, 1))
        k = np.zeros((30, 40, 8, 1))
        assert fft_conv3d(x, k).shape == (31, 41, 9)

    def test_linearity(self):
        rng = np.random.default_rng(23)
        x1 = rng.random((6, 6, 5, 1))
        x2 = rng.random((6, 6, 5, 1))
        k = rng.normal(size=(3, 3, 2, 1))
        a, b = -1.7, 0.4
        lhs = fft_conv3d(a * x1 + b * x2, k)
        rhs = a * fft_conv3d(x1, k) + b * fft_conv3d(x2, k)
        assert rel_err(lhs, rhs) <= 1e-12

    def test_shift_covariance(self):
        rng = np.random.default_rng(24)
        x = rng.random((5, 6, 4))
        k = rng.normal(size=(2, 3, 2))
        di, dj, dt = 2, 1, 1
        c1 = np.zeros((9, 10, 7))
        c2 = np.zeros((9, 10, 7))
        c1[:5, :6, :4] = x
        c2[di : di + 5, dj : dj + 6, dt : dt + 4] = x
        y1 = fft_conv3d(c1, k)
        y2 = fft_conv3d(c2, k)
        assert np.allclose(
            y2[di:, dj:, dt:], y1[: y1.shape[0] - di, : y1.shape[1] - dj, : y1.shape[2] - dt],
            atol=1e-12,
        )

    def test_bank_matches_per_kernel(self):
        rng = np.random.default_rng(25)
        x = rng.random((7, 8, 5, 1))
        weights = rng.normal(size=(3, 3, 2, 2, 1))
        stacked = fft_conv3d_bank(x, weights)
        for i in range(3):
            assert np.array_equal(stacked[i], FftConvBank(weights, x.shape[:3]).maps(x)[i])
            assert rel_err(stacked[i], direct_conv3d(x, weights[i])) <= 1e-9

    def test_bank_shape_mismatch(self):
        bank = FftConvBank(np.zeros((1, 2, 2, 2, 1)), (5, 5, 5))
        with pytest.raises(DimensionError):
            bank.maps(np.zeros((4, 5, 5, 1)))
