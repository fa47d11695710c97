"""Radiative Gaussian splatting for X-ray novel view synthesis.

A self-contained pipeline for circular cone-beam scans: analytic camera
geometry, a point cloud of radiative 3D Gaussians with view-independent
intensities, a differentiable tile-based rasterizer (compiled or numpy
backend), an Adam trainer with adaptive density control, and synthetic
phantom datasets for end-to-end evaluation.
"""

from .acui import CuboidSpec, init_alternative, init_cloud, sample_cuboid
from .cloudio import export_viewer_ply, load_cloud, save_cloud
from .dataset import ProjectionSet, add_noise, load_dataset, make_projection_set, save_dataset
from .errors import (
    ConfigError,
    DatasetError,
    InvalidParameterError,
    NumericalDegeneracyError,
    StaleSplatsError,
    TooManyPointsError,
    TrainingDivergenceError,
    XSplatError,
)
from .gaussians import GaussianCloud, RadiativeGaussian, covariance_2d, covariance_3d, rirf
from .geometry import (
    ExtrinsicMatrix,
    IntrinsicMatrix,
    ScannerConfig,
    camera_to_image,
    equal_interval_angles,
    extrinsic_from_angle,
    intrinsic_from_config,
    projection_jacobian,
    viewing_rotation,
    world_to_camera,
)
from .metrics import psnr, ssim
from .phantom import Cuboid, Ellipsoid, VoxelPhantom, make_phantom, project_phantom
from .rasterizer import (
    Projection,
    RenderGradients,
    SplatList,
    active_backend,
    blend_pixel,
    brute_force_render,
    render,
    render_backward,
    render_view,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "Cuboid",
    "CuboidSpec",
    "DatasetError",
    "Ellipsoid",
    "ExtrinsicMatrix",
    "GaussianCloud",
    "IntrinsicMatrix",
    "InvalidParameterError",
    "NumericalDegeneracyError",
    "Projection",
    "ProjectionSet",
    "RadiativeGaussian",
    "RenderGradients",
    "ScannerConfig",
    "SplatList",
    "StaleSplatsError",
    "TooManyPointsError",
    "TrainingDivergenceError",
    "VoxelPhantom",
    "XSplatError",
    "active_backend",
    "add_noise",
    "blend_pixel",
    "brute_force_render",
    "camera_to_image",
    "covariance_2d",
    "covariance_3d",
    "equal_interval_angles",
    "export_viewer_ply",
    "extrinsic_from_angle",
    "init_alternative",
    "init_cloud",
    "intrinsic_from_config",
    "load_cloud",
    "load_dataset",
    "make_phantom",
    "make_projection_set",
    "project_phantom",
    "projection_jacobian",
    "psnr",
    "render",
    "render_backward",
    "render_view",
    "rirf",
    "sample_cuboid",
    "save_cloud",
    "save_dataset",
    "ssim",
    "viewing_rotation",
    "world_to_camera",
]
