"""Differentiable tile-based rasterization of radiative Gaussian clouds."""

from .backend import active_backend, available_backends, get_kernels, set_backend
from .backward import render_backward
from .frontend import (
    CUTOFF_SIGMA,
    Projection,
    RenderGradients,
    SplatList,
    blend_pixel,
    brute_force_render,
    project_splats,
    render,
    render_view,
)
from .kernels_py import POWER_CUTOFF, SIGMA_CLAMP, TILE_SIZE, TRANSMITTANCE_FLOOR

__all__ = [
    "CUTOFF_SIGMA",
    "POWER_CUTOFF",
    "SIGMA_CLAMP",
    "TILE_SIZE",
    "TRANSMITTANCE_FLOOR",
    "Projection",
    "RenderGradients",
    "SplatList",
    "active_backend",
    "available_backends",
    "blend_pixel",
    "brute_force_render",
    "get_kernels",
    "project_splats",
    "render",
    "render_backward",
    "render_view",
    "set_backend",
]
