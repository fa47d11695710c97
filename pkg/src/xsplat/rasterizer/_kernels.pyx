# cython: language_level=3, boundscheck=False, wraparound=False
# cython: initializedcheck=False, cdivision=True
"""Compiled tile blending kernels (hot loops of forward/backward rendering).

Scalar C loops over tiles, pixels and splat entries; semantics are kept in
exact lockstep with ``kernels_py`` (same cutoffs, clamp, termination floor
and traversal order), so the two backends are interchangeable.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()

DEF TILE_SIZE = 16
DEF POWER_CUTOFF = -30.0
DEF TRANSMITTANCE_FLOOR = 1e-4
DEF SIGMA_CLAMP = 0.99


def forward_tiles(
    int h,
    int w,
    double[:, ::1] means2d,
    double[:, ::1] conics,
    double[::1] intensities,
    double[::1] opacities,
    cnp.int32_t[::1] entry_splat,
    cnp.int64_t[:, ::1] tile_ranges,
):
    out = np.zeros((h, w))
    cdef double[:, ::1] image = out
    cdef int n_tx = (w + TILE_SIZE - 1) // TILE_SIZE
    cdef Py_ssize_t t, k, j
    cdef int x0, y0, px, py, x_end, y_end
    cdef cnp.int64_t start, end
    cdef double fx, fy, dx, dy, a, b, c, power, sigma, trans, acc

    for t in range(tile_ranges.shape[0]):
        start = tile_ranges[t, 0]
        end = tile_ranges[t, 1]
        if start == end:
            continue
        x0 = TILE_SIZE * (t % n_tx)
        y0 = TILE_SIZE * (t // n_tx)
        x_end = min(x0 + TILE_SIZE, w)
        y_end = min(y0 + TILE_SIZE, h)
        for py in range(y0, y_end):
            fy = py
            for px in range(x0, x_end):
                fx = px
                trans = 1.0
                acc = 0.0
                for k in range(start, end):
                    if trans < TRANSMITTANCE_FLOOR:
                        break
                    j = entry_splat[k]
                    dx = fx - means2d[j, 0]
                    dy = fy - means2d[j, 1]
                    a = conics[j, 0]
                    b = conics[j, 1]
                    c = conics[j, 2]
                    power = -0.5 * (a * dx * dx + c * dy * dy) - b * dx * dy
                    if power > 0.0 or power < POWER_CUTOFF:
                        continue
                    sigma = opacities[j] * exp(power)
                    if sigma >= SIGMA_CLAMP:
                        sigma = SIGMA_CLAMP
                    acc += intensities[j] * sigma * trans
                    trans *= 1.0 - sigma
                image[py, px] = acc
    return out


def backward_tiles(
    int h,
    int w,
    double[:, ::1] means2d,
    double[:, ::1] conics,
    double[::1] intensities,
    double[::1] opacities,
    cnp.int32_t[::1] entry_splat,
    cnp.int64_t[:, ::1] tile_ranges,
    double[:, ::1] dl_dimage,
):
    cdef Py_ssize_t n = means2d.shape[0]
    g_mean_out = np.zeros((n, 2))
    g_conic_out = np.zeros((n, 3))
    g_int_out = np.zeros(n)
    g_alpha_out = np.zeros(n)
    cdef double[:, ::1] g_mean = g_mean_out
    cdef double[:, ::1] g_conic = g_conic_out
    cdef double[::1] g_int = g_int_out
    cdef double[::1] g_alpha = g_alpha_out

    cdef int n_tx = (w + TILE_SIZE - 1) // TILE_SIZE
    cdef Py_ssize_t t, k, j
    cdef int x0, y0, px, py, x_end, y_end
    cdef cnp.int64_t start, end
    cdef double fx, fy, dx, dy, a, b, c, power, dens, sigma, trans, acc
    cdef double g, prefix, weight, contrib, suffix, d_sigma, g_power
    cdef bint clamped

    for t in range(tile_ranges.shape[0]):
        start = tile_ranges[t, 0]
        end = tile_ranges[t, 1]
        if start == end:
            continue
        x0 = TILE_SIZE * (t % n_tx)
        y0 = TILE_SIZE * (t // n_tx)
        x_end = min(x0 + TILE_SIZE, w)
        y_end = min(y0 + TILE_SIZE, h)
        for py in range(y0, y_end):
            fy = py
            for px in range(x0, x_end):
                fx = px
                g = dl_dimage[py, px]

                # Pass 1: replay the blend for this pixel's total.
                trans = 1.0
                acc = 0.0
                for k in range(start, end):
                    if trans < TRANSMITTANCE_FLOOR:
                        break
                    j = entry_splat[k]
                    dx = fx - means2d[j, 0]
                    dy = fy - means2d[j, 1]
                    a = conics[j, 0]
                    b = conics[j, 1]
                    c = conics[j, 2]
                    power = -0.5 * (a * dx * dx + c * dy * dy) - b * dx * dy
                    if power > 0.0 or power < POWER_CUTOFF:
                        continue
                    sigma = opacities[j] * exp(power)
                    if sigma >= SIGMA_CLAMP:
                        sigma = SIGMA_CLAMP
                    acc += intensities[j] * sigma * trans
                    trans *= 1.0 - sigma

                # Pass 2: front-to-back suffix-sum gradient accumulation.
                trans = 1.0
                prefix = 0.0
                for k in range(start, end):
                    if trans < TRANSMITTANCE_FLOOR:
                        break
                    j = entry_splat[k]
                    dx = fx - means2d[j, 0]
                    dy = fy - means2d[j, 1]
                    a = conics[j, 0]
                    b = conics[j, 1]
                    c = conics[j, 2]
                    power = -0.5 * (a * dx * dx + c * dy * dy) - b * dx * dy
                    if power > 0.0 or power < POWER_CUTOFF:
                        continue
                    dens = exp(power)
                    sigma = opacities[j] * dens
                    clamped = sigma >= SIGMA_CLAMP
                    if clamped:
                        sigma = SIGMA_CLAMP
                    weight = sigma * trans
                    contrib = intensities[j] * weight
                    g_int[j] += g * weight
                    if not clamped:
                        # Through the clamp the density derivative is zero.
                        suffix = acc - prefix - contrib
                        d_sigma = g * (intensities[j] * trans - suffix / (1.0 - sigma))
                        g_alpha[j] += d_sigma * dens
                        g_power = d_sigma * opacities[j] * dens
                        g_mean[j, 0] += g_power * (a * dx + b * dy)
                        g_mean[j, 1] += g_power * (b * dx + c * dy)
                        g_conic[j, 0] -= 0.5 * g_power * dx * dx
                        g_conic[j, 1] -= g_power * dx * dy
                        g_conic[j, 2] -= 0.5 * g_power * dy * dy
                    prefix += contrib
                    trans *= 1.0 - sigma
    return g_mean_out, g_conic_out, g_int_out, g_alpha_out
