"""Analytic voxel phantoms and a ray-marching cone-beam projector.

Stands in for a physical scan: builds a density volume from additive
primitives, casts rays from the source through each detector pixel center,
and accumulates trilinear line integrals.  Images are normalized by the
global maximum over a whole projection set, so training targets live in
[0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import map_coordinates

from .errors import InvalidParameterError
from .geometry import ScannerConfig, viewing_rotation

# Ray-march step as a fraction of the smallest voxel edge.  Anything <= 0.5
# meets the discretization contract; 0.25 keeps the convergence margin wide.
DEFAULT_STEP_FACTOR = 0.25

DEFAULT_NOISE_LEVEL = 0.03


def _check_primitive(center, size, density, what):
    center = np.asarray(center, dtype=np.float64)
    size = np.asarray(size, dtype=np.float64)
    if center.shape != (3,) or size.shape != (3,):
        raise InvalidParameterError(f"{what}: center and size must be 3-vectors")
    if np.any(size <= 0):
        raise InvalidParameterError(f"{what}: size must be positive, got {size}")
    if density < 0:
        raise InvalidParameterError(f"{what}: density must be >= 0, got {density}")
    return center, size, float(density)


@dataclass
class Ellipsoid:
    """Axis-aligned ellipsoid; density adds inside the surface."""

    center: np.ndarray
    semi_axes: np.ndarray
    density: float

    def __post_init__(self):
        self.center, self.semi_axes, self.density = _check_primitive(
            self.center, self.semi_axes, self.density, "ellipsoid"
        )

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.center - self.semi_axes, self.center + self.semi_axes

    def evaluate(self, x, y, z):
        u = (x - self.center[0]) / self.semi_axes[0]
        v = (y - self.center[1]) / self.semi_axes[1]
        w = (z - self.center[2]) / self.semi_axes[2]
        return np.where(u * u + v * v + w * w <= 1.0, self.density, 0.0)

    def to_dict(self) -> dict:
        return {
            "kind": "ellipsoid",
            "center": self.center.tolist(),
            "semi_axes": self.semi_axes.tolist(),
            "density": self.density,
        }


@dataclass
class Cuboid:
    """Axis-aligned box; density adds inside."""

    center: np.ndarray
    half_extents: np.ndarray
    density: float

    def __post_init__(self):
        self.center, self.half_extents, self.density = _check_primitive(
            self.center, self.half_extents, self.density, "cuboid"
        )

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.center - self.half_extents, self.center + self.half_extents

    def evaluate(self, x, y, z):
        inside = (
            (np.abs(x - self.center[0]) <= self.half_extents[0])
            & (np.abs(y - self.center[1]) <= self.half_extents[1])
            & (np.abs(z - self.center[2]) <= self.half_extents[2])
        )
        return np.where(inside, self.density, 0.0)

    def to_dict(self) -> dict:
        return {
            "kind": "cuboid",
            "center": self.center.tolist(),
            "half_extents": self.half_extents.tolist(),
            "density": self.density,
        }


def primitive_from_dict(d: dict):
    kind = d.get("kind")
    if kind == "ellipsoid":
        return Ellipsoid(d["center"], d["semi_axes"], d["density"])
    if kind == "cuboid":
        return Cuboid(d["center"], d["half_extents"], d["density"])
    raise InvalidParameterError(f"unknown primitive kind {kind!r}")


@dataclass
class VoxelPhantom:
    """Density volume on a regular grid, centred on the world origin."""

    densities: np.ndarray  # (M1, M2, M3), >= 0
    voxel_size: np.ndarray  # mm per voxel, per axis
    primitives: list = field(default_factory=list)

    def __post_init__(self):
        self.densities = np.asarray(self.densities, dtype=np.float64)
        self.voxel_size = np.asarray(self.voxel_size, dtype=np.float64)
        if self.densities.ndim != 3:
            raise InvalidParameterError("densities must be a 3-D array")
        if self.voxel_size.shape != (3,) or np.any(self.voxel_size <= 0):
            raise InvalidParameterError("voxel_size must be three positive reals")
        if not np.all(np.isfinite(self.densities)) or np.any(self.densities < 0):
            raise InvalidParameterError("densities must be finite and >= 0")

    @property
    def grid(self) -> tuple[int, int, int]:
        return self.densities.shape

    @property
    def extent(self) -> np.ndarray:
        """Physical size per axis in mm (= ACUI cuboid extent)."""
        return np.array(self.grid) * self.voxel_size


def make_phantom(primitives, grid, voxel_size) -> VoxelPhantom:
    """Rasterize additive primitives onto a voxel grid (sampled at centers)."""
    grid = tuple(int(m) for m in grid)
    voxel_size = np.broadcast_to(np.asarray(voxel_size, dtype=np.float64), (3,)).copy()
    if any(m < 1 for m in grid) or np.any(voxel_size <= 0):
        raise InvalidParameterError("grid must be >= 1 and voxel_size positive")
    extent = np.array(grid) * voxel_size
    axes = [
        (np.arange(m) + 0.5) * vs - e / 2.0
        for m, vs, e in zip(grid, voxel_size, extent)
    ]
    x, y, z = np.meshgrid(*axes, indexing="ij")
    densities = np.zeros(grid)
    for p in primitives:
        lo, hi = p.bounds()
        if np.any(lo < -extent / 2.0 - 1e-9) or np.any(hi > extent / 2.0 + 1e-9):
            raise InvalidParameterError(
                f"primitive {p.to_dict()['kind']} extends outside the volume"
            )
        densities += p.evaluate(x, y, z)
    return VoxelPhantom(densities, voxel_size, list(primitives))


def default_phantom_primitives(extent) -> list:
    """A structured test object: soft body with embedded blobs and boxes.

    Positions and sizes are fractions of the volume extent, so the same
    layout works at any scale.
    """
    s = np.asarray(extent, dtype=np.float64)
    return [
        Ellipsoid(0.0 * s, 0.40 * s, 0.35),
        Ellipsoid(np.array([0.10, -0.06, 0.05]) * s, np.array([0.16, 0.20, 0.14]) * s, 0.45),
        Ellipsoid(np.array([-0.15, 0.12, -0.08]) * s, np.array([0.10, 0.08, 0.12]) * s, 0.60),
        Ellipsoid(np.array([0.18, 0.15, -0.12]) * s, 0.05 * s, 1.00),
        Ellipsoid(np.array([-0.05, 0.02, -0.18]) * s, 0.035 * s, 1.20),
        Cuboid(np.array([-0.12, -0.16, 0.10]) * s, np.array([0.08, 0.06, 0.10]) * s, 0.55),
        Cuboid(np.array([0.02, 0.18, 0.14]) * s, np.array([0.05, 0.09, 0.04]) * s, 0.80),
    ]


def project_phantom(
    ph: VoxelPhantom,
    scanner: ScannerConfig,
    phi: float,
    step_factor: float = DEFAULT_STEP_FACTOR,
) -> np.ndarray:
    """Raw line integrals (H, W) for one scan angle, un-normalized.

    One ray per pixel center, clipped to the volume bounding box, sampled at
    midpoints of equal sub-steps no longer than step_factor * min voxel edge.
    Rays that miss the volume integrate to zero.
    """
    if not 0 < step_factor <= 0.5:
        raise InvalidParameterError("step_factor must be in (0, 0.5]")
    h, w = scanner.detector_height, scanner.detector_width
    rot = viewing_rotation(phi)
    source = np.array(
        [scanner.source_object_distance * np.cos(phi),
         scanner.source_object_distance * np.sin(phi),
         0.0]
    )
    # Camera-frame ray directions through pixel centers, rotated to world.
    u = np.arange(w) - w / 2.0
    v = np.arange(h) - h / 2.0
    uu, vv = np.meshgrid(u, v)  # (H, W), row = v
    focal = scanner.focal_pixels
    dirs_cam = np.stack(
        [uu / focal, vv / focal, np.ones_like(uu)], axis=-1
    ).reshape(-1, 3)
    dirs = dirs_cam @ rot  # R^T d for each row
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)

    # Slab intersection with the volume box [-extent/2, extent/2].
    half = ph.extent / 2.0
    with np.errstate(divide="ignore"):
        inv = 1.0 / dirs
    t_lo = (-half - source) * inv
    t_hi = (half - source) * inv
    t_near = np.minimum(t_lo, t_hi).max(axis=1)
    t_far = np.maximum(t_lo, t_hi).min(axis=1)
    t_near = np.maximum(t_near, 0.0)
    span = np.maximum(t_far - t_near, 0.0)

    step = step_factor * float(ph.voxel_size.min())
    n_steps = max(int(np.ceil(span.max() / step)), 1)
    dt = span / n_steps  # per-ray substep, each <= step
    k = np.arange(n_steps) + 0.5

    out = np.empty(h * w)
    chunk = max(1, 8_388_608 // n_steps)  # cap the sample buffer at ~8M points
    for lo in range(0, h * w, chunk):
        sl = slice(lo, min(lo + chunk, h * w))
        ts = t_near[sl, None] + dt[sl, None] * k[None, :]
        pts = source[None, None, :] + dirs[sl, None, :] * ts[..., None]
        # World -> fractional voxel index (centers at (i + 0.5) * voxel).
        idx = (pts + half) / ph.voxel_size - 0.5
        samples = map_coordinates(
            ph.densities, idx.reshape(-1, 3).T, order=1, mode="constant", cval=0.0
        ).reshape(-1, n_steps)
        out[sl] = samples.sum(axis=1) * dt[sl]
    return out.reshape(h, w)


def project_all(
    ph: VoxelPhantom, scanner: ScannerConfig, step_factor: float = DEFAULT_STEP_FACTOR
) -> np.ndarray:
    """Raw projections for every configured angle, stacked (n, H, W)."""
    return np.stack(
        [project_phantom(ph, scanner, phi, step_factor) for phi in scanner.angles]
    )
