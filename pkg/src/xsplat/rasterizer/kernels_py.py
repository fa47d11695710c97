"""Pure-numpy tile blending kernels (fallback backend).

Same contract as the compiled extension: sequential over tiles, vectorized
over the pixels of a tile, exact front-to-back semantics per pixel.  The
compiled backend is preferred at import time when available; this module
keeps the package fully functional without a C toolchain.
"""

from __future__ import annotations

import numpy as np

TILE_SIZE = 16
# Pixels with log-density below this never contribute (identical rule in the
# brute-force oracle, so the paths agree to well below blending tolerance).
POWER_CUTOFF = -30.0
# Blending stops once transmittance falls below this floor.
TRANSMITTANCE_FLOOR = 1e-4
SIGMA_CLAMP = 0.99


def _tile_pixels(tile_idx: int, n_tx: int, h: int, w: int):
    x0 = TILE_SIZE * (tile_idx % n_tx)
    y0 = TILE_SIZE * (tile_idx // n_tx)
    xs = np.arange(x0, min(x0 + TILE_SIZE, w), dtype=np.float64)
    ys = np.arange(y0, min(y0 + TILE_SIZE, h), dtype=np.float64)
    px, py = np.meshgrid(xs, ys)
    return px.ravel(), py.ravel()


def _sigma_at(px, py, mean, conic, alpha):
    dx = px - mean[0]
    dy = py - mean[1]
    a, b, c = conic
    power = -0.5 * (a * dx * dx + c * dy * dy) - b * dx * dy
    valid = (power <= 0.0) & (power >= POWER_CUTOFF)
    dens = np.exp(np.where(valid, power, -np.inf))
    sigma = np.minimum(alpha * dens, SIGMA_CLAMP)
    return dx, dy, dens, np.where(valid, sigma, 0.0)


def forward_tiles(
    h: int,
    w: int,
    means2d: np.ndarray,
    conics: np.ndarray,
    intensities: np.ndarray,
    opacities: np.ndarray,
    entry_splat: np.ndarray,
    tile_ranges: np.ndarray,
) -> np.ndarray:
    image = np.zeros((h, w))
    n_tx = (w + TILE_SIZE - 1) // TILE_SIZE
    for t in range(tile_ranges.shape[0]):
        start, end = tile_ranges[t]
        if start == end:
            continue
        px, py = _tile_pixels(t, n_tx, h, w)
        acc = np.zeros(px.shape[0])
        trans = np.ones(px.shape[0])
        for k in range(start, end):
            alive = trans >= TRANSMITTANCE_FLOOR
            if not alive.any():
                break
            j = entry_splat[k]
            _, _, _, sigma = _sigma_at(px, py, means2d[j], conics[j], opacities[j])
            sigma = np.where(alive, sigma, 0.0)
            acc += intensities[j] * sigma * trans
            trans *= 1.0 - sigma
        image[
            TILE_SIZE * (t // n_tx) : TILE_SIZE * (t // n_tx) + TILE_SIZE,
            TILE_SIZE * (t % n_tx) : TILE_SIZE * (t % n_tx) + TILE_SIZE,
        ] = acc.reshape(
            min(TILE_SIZE, h - TILE_SIZE * (t // n_tx)),
            min(TILE_SIZE, w - TILE_SIZE * (t % n_tx)),
        )
    return image


def backward_tiles(
    h: int,
    w: int,
    means2d: np.ndarray,
    conics: np.ndarray,
    intensities: np.ndarray,
    opacities: np.ndarray,
    entry_splat: np.ndarray,
    tile_ranges: np.ndarray,
    dl_dimage: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-splat gradients w.r.t. screen mean, conic, intensity and opacity.

    Replays the forward blend per tile (nothing is cached per pixel), then a
    second front-to-back pass forms each splat's suffix sum, giving
    d(pixel)/d(sigma_j) = i_j T_j - suffix_j / (1 - sigma_j).
    """
    n = means2d.shape[0]
    g_mean = np.zeros((n, 2))
    g_conic = np.zeros((n, 3))
    g_int = np.zeros(n)
    g_alpha = np.zeros(n)
    n_tx = (w + TILE_SIZE - 1) // TILE_SIZE
    for t in range(tile_ranges.shape[0]):
        start, end = tile_ranges[t]
        if start == end:
            continue
        px, py = _tile_pixels(t, n_tx, h, w)
        g_pix = dl_dimage[
            TILE_SIZE * (t // n_tx) : TILE_SIZE * (t // n_tx) + TILE_SIZE,
            TILE_SIZE * (t % n_tx) : TILE_SIZE * (t % n_tx) + TILE_SIZE,
        ].ravel()

        # Pass 1: total blended intensity per pixel (with early stop).
        acc = np.zeros(px.shape[0])
        trans = np.ones(px.shape[0])
        for k in range(start, end):
            alive = trans >= TRANSMITTANCE_FLOOR
            if not alive.any():
                break
            j = entry_splat[k]
            _, _, _, sigma = _sigma_at(px, py, means2d[j], conics[j], opacities[j])
            sigma = np.where(alive, sigma, 0.0)
            acc += intensities[j] * sigma * trans
            trans *= 1.0 - sigma

        # Pass 2: same traversal, accumulating gradients.
        prefix = np.zeros(px.shape[0])
        trans = np.ones(px.shape[0])
        for k in range(start, end):
            alive = trans >= TRANSMITTANCE_FLOOR
            if not alive.any():
                break
            j = entry_splat[k]
            a, b, c = conics[j]
            dx, dy, dens, sigma = _sigma_at(px, py, means2d[j], conics[j], opacities[j])
            sigma = np.where(alive, sigma, 0.0)
            weight = sigma * trans
            contrib = intensities[j] * weight
            suffix = acc - prefix - contrib
            d_sigma = g_pix * (intensities[j] * trans - suffix / (1.0 - sigma))
            g_int[j] += np.sum(g_pix * weight)
            # Through the clamp the density derivative is zero.
            live = (sigma > 0.0) & (opacities[j] * dens < SIGMA_CLAMP)
            d_sigma = np.where(live, d_sigma, 0.0)
            g_alpha[j] += np.sum(d_sigma * dens)
            g_power = d_sigma * opacities[j] * np.where(live, dens, 0.0)
            g_mean[j, 0] += np.sum(g_power * (a * dx + b * dy))
            g_mean[j, 1] += np.sum(g_power * (b * dx + c * dy))
            g_conic[j, 0] += np.sum(g_power * (-0.5 * dx * dx))
            g_conic[j, 1] += np.sum(g_power * (-dx * dy))
            g_conic[j, 2] += np.sum(g_power * (-0.5 * dy * dy))
            prefix += contrib
            trans *= 1.0 - sigma
    return g_mean, g_conic, g_int, g_alpha
