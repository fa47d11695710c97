"""Analytic backward pass: pixel gradients -> per-Gaussian attribute gradients.

The kernel backend supplies gradients w.r.t. screen means, conics, intensity
and opacity; this module chains them through conic inversion, the projected
covariance (including the Jacobian's own dependence on camera position), the
R S S^T R^T composition, quaternion normalization, and the two sigmoids.
All per-splat state is recomputed from the SplatList and the (unchanged)
cloud rather than cached per pixel.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidParameterError, StaleSplatsError
from ..gaussians import GaussianCloud, quaternions_to_rotations
from .backend import get_kernels
from .frontend import RenderGradients, SplatList, _screen_jacobian


def render_backward(
    cloud: GaussianCloud, splats: SplatList, dl_dimage: np.ndarray
) -> RenderGradients:
    """Exact gradients of the loss w.r.t. every learnable cloud attribute."""
    if cloud.fingerprint() != splats.cloud_fingerprint:
        raise StaleSplatsError(
            "cloud was mutated after the forward render; re-render before backward"
        )
    dl_dimage = np.asarray(dl_dimage, dtype=np.float64)
    h, w = splats.image_shape
    if dl_dimage.shape != (h, w):
        raise InvalidParameterError(
            f"pixel gradient shape {dl_dimage.shape} != image shape {(h, w)}"
        )

    n = cloud.n_points
    grads = RenderGradients(
        positions=np.zeros((n, 3)),
        rotations=np.zeros((n, 4)),
        log_scales=np.zeros((n, 3)),
        raw_opacities=np.zeros(n),
        features=np.zeros((n, cloud.n_features)),
        screen_norms=np.zeros(n),
        visible=np.zeros(n, dtype=bool),
    )
    if splats.n_active == 0:
        return grads

    g_mean, g_conic, g_int, g_alpha = get_kernels().backward_tiles(
        h,
        w,
        splats.means2d,
        splats.conics,
        splats.intensities,
        splats.opacities,
        splats.entry_splat,
        splats.tile_ranges,
        dl_dimage,
    )

    idx = splats.active_indices
    a = splats.n_active
    focal = splats.focal
    rot_w = splats.view_rotation

    # Conic -> 2D covariance (Y = X^-1 gives dL/dX = -Y dL/dY Y).  The
    # off-diagonal conic entry is one parameter appearing in two slots, so
    # its matrix gradient carries half per slot.
    k_mat = np.empty((a, 2, 2))
    k_mat[:, 0, 0] = splats.conics[:, 0]
    k_mat[:, 0, 1] = k_mat[:, 1, 0] = splats.conics[:, 1]
    k_mat[:, 1, 1] = splats.conics[:, 2]
    g_tilde = np.empty((a, 2, 2))
    g_tilde[:, 0, 0] = g_conic[:, 0]
    g_tilde[:, 0, 1] = g_tilde[:, 1, 0] = 0.5 * g_conic[:, 1]
    g_tilde[:, 1, 1] = g_conic[:, 2]
    g2 = -k_mat @ g_tilde @ k_mat

    # Recompute the forward per-splat quantities (cheap, and the fingerprint
    # check above guarantees they match the forward pass bit-for-bit).
    scales = cloud.scales[idx]
    rot = quaternions_to_rotations(cloud.rotations[idx])
    m_mat = rot * scales[:, None, :]
    sigma3 = m_mat @ m_mat.swapaxes(1, 2)
    t = splats.t_cam
    tx, ty, tz = t[:, 0], t[:, 1], t[:, 2]
    j2 = _screen_jacobian(t, focal)
    u2 = j2 @ rot_w

    g_sigma3 = u2.swapaxes(1, 2) @ g2 @ u2
    g_u2 = 2.0 * g2 @ u2 @ sigma3
    g_j2 = g_u2 @ rot_w.T

    # Camera-position gradient: direct screen-mean path plus the Jacobian's
    # own dependence on t.
    g_t = np.empty((a, 3))
    g_t[:, 0] = g_mean[:, 0] * focal / tz - g_j2[:, 0, 2] * focal / tz**2
    g_t[:, 1] = g_mean[:, 1] * focal / tz - g_j2[:, 1, 2] * focal / tz**2
    g_t[:, 2] = (
        -focal * (g_mean[:, 0] * tx + g_mean[:, 1] * ty) / tz**2
        - focal * (g_j2[:, 0, 0] + g_j2[:, 1, 1]) / tz**2
        + 2.0 * focal * (g_j2[:, 0, 2] * tx + g_j2[:, 1, 2] * ty) / tz**3
    )
    g_pos = g_t @ rot_w

    g_m = 2.0 * g_sigma3 @ m_mat
    g_log_scale = np.einsum("aik,aik->ak", rot, g_m) * scales
    g_rot_mat = g_m * scales[:, None, :]

    g_quat = _quaternion_gradient(cloud.rotations[idx], g_rot_mat)

    ints = splats.intensities
    g_feature = (g_int * ints * (1.0 - ints))[:, None] * cloud.basis_weights[None, :]
    alphas = splats.opacities
    g_raw_opacity = g_alpha * alphas * (1.0 - alphas)

    grads.positions[idx] = g_pos
    grads.rotations[idx] = g_quat
    grads.log_scales[idx] = g_log_scale
    grads.raw_opacities[idx] = g_raw_opacity
    grads.features[idx] = g_feature
    grads.screen_norms[idx] = np.hypot(g_mean[:, 0], g_mean[:, 1])
    grads.visible[idx] = True
    return grads


def _quaternion_gradient(quats: np.ndarray, g_rot: np.ndarray) -> np.ndarray:
    """Chain a rotation-matrix gradient through R(q/|q|).

    Contracts g_rot with dR/d(unit quaternion), then projects through the
    normalization (I - qq^T)/|q|.
    """
    norm = np.linalg.norm(quats, axis=1, keepdims=True)
    qn = quats / norm
    qw, qx, qy, qz = qn.T
    g = g_rot
    g_unit = np.empty_like(qn)
    g_unit[:, 0] = 2.0 * (
        -g[:, 0, 1] * qz + g[:, 0, 2] * qy + g[:, 1, 0] * qz
        - g[:, 1, 2] * qx - g[:, 2, 0] * qy + g[:, 2, 1] * qx
    )
    g_unit[:, 1] = 2.0 * (
        g[:, 0, 1] * qy + g[:, 0, 2] * qz + g[:, 1, 0] * qy
        - 2.0 * g[:, 1, 1] * qx - g[:, 1, 2] * qw + g[:, 2, 0] * qz
        + g[:, 2, 1] * qw - 2.0 * g[:, 2, 2] * qx
    )
    g_unit[:, 2] = 2.0 * (
        -2.0 * g[:, 0, 0] * qy + g[:, 0, 1] * qx + g[:, 0, 2] * qw
        + g[:, 1, 0] * qx + g[:, 1, 2] * qz - g[:, 2, 0] * qw
        + g[:, 2, 1] * qz - 2.0 * g[:, 2, 2] * qy
    )
    g_unit[:, 3] = 2.0 * (
        -2.0 * g[:, 0, 0] * qz - g[:, 0, 1] * qw + g[:, 0, 2] * qx
        + g[:, 1, 0] * qw - 2.0 * g[:, 1, 1] * qz + g[:, 1, 2] * qy
        + g[:, 2, 0] * qx + g[:, 2, 1] * qy
    )
    inner = np.sum(qn * g_unit, axis=1, keepdims=True)
    return (g_unit - qn * inner) / norm
