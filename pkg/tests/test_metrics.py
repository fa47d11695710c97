import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.lib.stride_tricks import sliding_window_view

from xsplat.errors import InvalidParameterError
from xsplat.metrics import (
    MetricReport,
    gaussian_window,
    psnr,
    ssim,
    ssim_and_gradient,
)


def reference_ssim(pred, ref, data_range=1.0):
    """Independent SSIM: per-window statistics computed directly from pixel
    windows (no convolution), same 11x11 sigma-1.5 Gaussian weighting."""
    win = 11
    half = (win - 1) / 2.0
    coords = np.arange(win) - half
    g = np.exp(-(coords**2) / (2.0 * 1.5**2))
    w = np.outer(g, g)
    w /= w.sum()

    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    px = sliding_window_view(pred, (win, win))
    rx = sliding_window_view(ref, (win, win))
    vals = []
    for i in range(px.shape[0]):
        for j in range(px.shape[1]):
            x = px[i, j]
            y = rx[i, j]
            mx = (w * x).sum()
            my = (w * y).sum()
            vx = (w * x * x).sum() - mx * mx
            vy = (w * y * y).sum() - my * my
            cxy = (w * x * y).sum() - mx * my
            vals.append(
                ((2 * mx * my + c1) * (2 * cxy + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2))
            )
    return float(np.mean(vals))


class TestPSNR:
    def test_identical_is_infinite(self, rng):
        a = rng.uniform(size=(8, 8))
        assert psnr(a, a) == float("inf")

    def test_20db_closed_form(self):
        ref = np.full((10, 10), 0.5)
        pred = ref + 0.1  # MSE = 0.01, PSNR = 10 log10(1 / 0.01) = 20
        assert abs(psnr(pred, ref) - 20.0) < 1e-9

    def test_40db_closed_form(self):
        ref = np.zeros((10, 10))
        pred = ref + 0.01  # MSE = 1e-4 -> 40 dB
        assert abs(psnr(pred, ref) - 40.0) < 1e-9

    def test_mixed_error_closed_form(self):
        # Half the pixels off by 0.2, half exact: MSE = 0.02.
        ref = np.zeros((2, 2))
        pred = np.array([[0.2, 0.0], [0.2, 0.0]])
        assert psnr(pred, ref) == pytest.approx(10 * np.log10(1 / 0.02), abs=1e-12)

    def test_data_range(self):
        ref = np.zeros((4, 4))
        pred = ref + 25.5
        assert psnr(pred, ref, data_range=255.0) == pytest.approx(20.0, abs=1e-9)

    def test_symmetric(self, rng):
        a, b = rng.uniform(size=(12, 12)), rng.uniform(size=(12, 12))
        assert psnr(a, b) == psnr(b, a)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidParameterError):
            psnr(np.zeros((4, 4)), np.zeros((4, 5)))

    @given(
        lo=st.floats(min_value=1e-6, max_value=0.5),
        ratio=st.floats(min_value=1.001, max_value=100.0),
    )
    def test_monotone_in_error(self, lo, ratio):
        ref = np.zeros((4, 4))
        assert psnr(ref + lo, ref) > psnr(ref + lo * ratio, ref)


class TestGaussianWindow:
    def test_normalized_and_symmetric(self):
        w = gaussian_window()
        assert w.shape == (11, 11)
        assert w.sum() == pytest.approx(1.0, abs=1e-15)
        assert np.array_equal(w, w.T)
        assert np.array_equal(w, w[::-1, ::-1])

    def test_peak_at_center(self):
        w = gaussian_window()
        assert w[5, 5] == w.max()


class TestSSIM:
    def test_identical_is_one(self, rng):
        a = rng.uniform(size=(16, 16))
        assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)

    def test_negative_image_less_than_one(self, rng):
        a = rng.uniform(0.1, 0.9, size=(16, 16))
        assert ssim(a, 1.0 - a) < 1.0

    def test_matches_independent_reference(self, rng):
        a = rng.uniform(size=(64, 64))
        b = np.clip(a + rng.normal(scale=0.1, size=(64, 64)), 0, 1)
        assert abs(ssim(a, b) - reference_ssim(a, b)) < 1e-6

    def test_reference_agreement_structured(self, rng):
        # Smooth, structured content rather than noise.
        yy, xx = np.mgrid[0:32, 0:32] / 31.0
        a = 0.5 + 0.4 * np.sin(6 * xx) * np.cos(4 * yy)
        b = 0.5 + 0.4 * np.sin(6 * xx + 0.2) * np.cos(4 * yy)
        assert abs(ssim(a, b) - reference_ssim(a, b)) < 1e-6

    def test_symmetric(self, rng):
        a, b = rng.uniform(size=(20, 20)), rng.uniform(size=(20, 20))
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)

    def test_too_small_raises(self):
        with pytest.raises(InvalidParameterError):
            ssim(np.zeros((10, 10)), np.zeros((10, 10)))

    def test_shape_mismatch(self):
        with pytest.raises(InvalidParameterError):
            ssim(np.zeros((16, 16)), np.zeros((16, 17)))

    def test_scale_invariance_with_data_range(self, rng):
        a = rng.uniform(size=(16, 16))
        b = rng.uniform(size=(16, 16))
        assert ssim(10 * a, 10 * b, data_range=10.0) == pytest.approx(ssim(a, b), rel=1e-12)


class TestSSIMGradient:
    def test_value_matches_ssim(self, rng):
        a = rng.uniform(size=(16, 16))
        b = rng.uniform(size=(16, 16))
        val, _ = ssim_and_gradient(a, b)
        assert val == pytest.approx(ssim(a, b), abs=1e-15)

    def test_gradient_shape(self, rng):
        a = rng.uniform(size=(13, 17))
        g = ssim_and_gradient(a, rng.uniform(size=(13, 17)))[1]
        assert g.shape == (13, 17)

    def test_matches_finite_differences(self, rng):
        a = rng.uniform(0.2, 0.8, size=(14, 14))
        b = np.clip(a + rng.normal(scale=0.05, size=(14, 14)), 0, 1)
        _, grad = ssim_and_gradient(a, b)
        eps = 1e-6
        # Spot-check a grid of pixels including corners and center.
        for i in (0, 3, 7, 13):
            for j in (0, 6, 13):
                bump = np.zeros_like(a)
                bump[i, j] = eps
                fd = (ssim(a + bump, b) - ssim(a - bump, b)) / (2 * eps)
                assert grad[i, j] == pytest.approx(fd, rel=1e-5, abs=1e-9)

    def test_zero_at_identity(self, rng):
        # SSIM attains its maximum at pred == ref, so the gradient vanishes.
        a = rng.uniform(0.2, 0.8, size=(16, 16))
        _, grad = ssim_and_gradient(a, a)
        assert np.allclose(grad, 0.0, atol=1e-12)


class TestMetricReport:
    def test_table_layout(self):
        report = MetricReport(
            psnr=31.5,
            ssim=0.95,
            per_view=[{"view": 1, "angle": 0.5, "psnr": 31.5, "ssim": 0.95}],
        )
        lines = report.as_table().splitlines()
        assert lines[0].split("\t") == ["view", "angle", "psnr", "ssim"]
        assert lines[1].startswith("1\t0.500000\t31.500000")
        assert lines[-1].startswith("mean\t-\t31.500000")
