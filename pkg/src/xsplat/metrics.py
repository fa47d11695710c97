"""Image fidelity metrics (PSNR, SSIM) and the SSIM gradient used in training."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import convolve2d

from .errors import InvalidParameterError

SSIM_WINDOW_SIZE = 11
SSIM_WINDOW_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass
class MetricReport:
    """Aggregate and per-view quality figures for one evaluation pass."""

    psnr: float
    ssim: float
    per_view: list[dict] = field(default_factory=list)

    def as_table(self) -> str:
        lines = ["view\tangle\tpsnr\tssim"]
        for v in self.per_view:
            lines.append(
                f"{v['view']}\t{v['angle']:.6f}\t{v['psnr']:.6f}\t{v['ssim']:.6f}"
            )
        lines.append(f"mean\t-\t{self.psnr:.6f}\t{self.ssim:.6f}")
        return "\n".join(lines)


def psnr(pred: np.ndarray, ref: np.ndarray, data_range: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; +inf for identical images."""
    pred = np.asarray(pred, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if pred.shape != ref.shape:
        raise InvalidParameterError(f"shape mismatch {pred.shape} vs {ref.shape}")
    mse = float(np.mean((pred - ref) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(data_range**2 / mse)


def gaussian_window(size: int = SSIM_WINDOW_SIZE, sigma: float = SSIM_WINDOW_SIGMA) -> np.ndarray:
    """Normalized 2-D Gaussian window, symmetric, sums to 1."""
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def _ssim_terms(pred, ref, data_range, window):
    mu_x = convolve2d(pred, window, mode="valid")
    mu_y = convolve2d(ref, window, mode="valid")
    # E[x^2] - E[x]^2; tiny negatives from cancellation are harmless in B2
    var_x = convolve2d(pred * pred, window, mode="valid") - mu_x**2
    var_y = convolve2d(ref * ref, window, mode="valid") - mu_y**2
    cov = convolve2d(pred * ref, window, mode="valid") - mu_x * mu_y
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    a1 = 2.0 * mu_x * mu_y + c1
    a2 = 2.0 * cov + c2
    b1 = mu_x**2 + mu_y**2 + c1
    b2 = var_x + var_y + c2
    return mu_x, mu_y, a1, a2, b1, b2


def ssim(pred: np.ndarray, ref: np.ndarray, data_range: float = 1.0) -> float:
    """Mean structural similarity over all fully-interior 11x11 windows."""
    pred = np.asarray(pred, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if pred.shape != ref.shape:
        raise InvalidParameterError(f"shape mismatch {pred.shape} vs {ref.shape}")
    if pred.ndim != 2 or min(pred.shape) < SSIM_WINDOW_SIZE:
        raise InvalidParameterError(
            f"images must be 2-D and at least {SSIM_WINDOW_SIZE} px per side"
        )
    window = gaussian_window()
    _, _, a1, a2, b1, b2 = _ssim_terms(pred, ref, data_range, window)
    return float(np.mean(a1 * a2 / (b1 * b2)))


def ssim_and_gradient(
    pred: np.ndarray, ref: np.ndarray, data_range: float = 1.0
) -> tuple[float, np.ndarray]:
    """Mean SSIM and d(mean SSIM)/d(pred), both exact.

    The windowed statistics are valid-mode convolutions, so their adjoint is
    a full-mode convolution with the (symmetric) window; the per-window
    partials are taken w.r.t. the three maps that depend on ``pred``:
    mean(x), mean(x^2) and mean(x*y).
    """
    pred = np.asarray(pred, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if pred.shape != ref.shape:
        raise InvalidParameterError(f"shape mismatch {pred.shape} vs {ref.shape}")
    if pred.ndim != 2 or min(pred.shape) < SSIM_WINDOW_SIZE:
        raise InvalidParameterError(
            f"images must be 2-D and at least {SSIM_WINDOW_SIZE} px per side"
        )
    window = gaussian_window()
    mu_x, mu_y, a1, a2, b1, b2 = _ssim_terms(pred, ref, data_range, window)
    denom = b1 * b2
    s_map = a1 * a2 / denom
    g = 1.0 / s_map.size  # upstream weight of each window in the mean

    # Partials w.r.t. mean(x), mean(x^2), mean(x*y) per window.
    g_mu = g * (
        2.0 * mu_y * (a2 - a1) / denom + 2.0 * mu_x * s_map * (1.0 / b2 - 1.0 / b1)
    )
    g_q = -g * s_map / b2
    g_r = 2.0 * g * a1 / denom

    grad = (
        convolve2d(g_mu, window, mode="full")
        + 2.0 * pred * convolve2d(g_q, window, mode="full")
        + ref * convolve2d(g_r, window, mode="full")
    )
    return float(np.mean(s_map)), grad
