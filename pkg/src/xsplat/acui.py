"""Cloud initialization from scanner-side knowledge only.

Centers are seeded on a uniform lattice inside a cuboid that encloses the
scanned object (no structure-from-motion, no reconstruction); the remaining
attributes are drawn deterministically from a seeded generator.  Alternative
center strategies (uniform in the cuboid volume, uniform in the enclosing
ball) exist for ablations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, TooManyPointsError
from .gaussians import GaussianCloud, logit

DEFAULT_POINT_CAP = 5_000_000

INIT_OPACITY = 0.1
FEATURE_INIT_RANGE = 0.1


@dataclass
class CuboidSpec:
    """Axis-aligned cuboid centred on the world origin.

    ``extent`` is the physical size in mm, ``grid`` the voxel resolution used
    to express the sampling interval, and ``interval`` the lattice stride in
    voxels.
    """

    extent: tuple[float, float, float]
    grid: tuple[int, int, int]
    interval: int = 8

    def __post_init__(self):
        self.extent = tuple(float(s) for s in self.extent)
        self.grid = tuple(int(m) for m in self.grid)
        if len(self.extent) != 3 or len(self.grid) != 3:
            raise InvalidParameterError("extent and grid must have three components")
        if any(s <= 0 for s in self.extent):
            raise InvalidParameterError(f"extent must be positive, got {self.extent}")
        if any(m < 1 for m in self.grid):
            raise InvalidParameterError(f"grid must be >= 1 per axis, got {self.grid}")
        self.interval = int(self.interval)
        if not 1 <= self.interval <= max(self.grid):
            raise InvalidParameterError(
                f"interval must be in [1, {max(self.grid)}], got {self.interval}"
            )

    @property
    def spacings(self) -> np.ndarray:
        """Lattice step per axis in mm: extent * interval / grid."""
        return np.array(
            [s * self.interval / m for s, m in zip(self.extent, self.grid)]
        )

    def axis_counts(self) -> tuple[int, int, int]:
        d = self.interval
        return tuple(2 * (m // (2 * d)) + 3 for m in self.grid)

    def point_count(self) -> int:
        c = self.axis_counts()
        return c[0] * c[1] * c[2]

    def to_dict(self) -> dict:
        return {"extent": list(self.extent), "grid": list(self.grid), "interval": self.interval}

    @classmethod
    def from_dict(cls, d: dict) -> "CuboidSpec":
        return cls(extent=tuple(d["extent"]), grid=tuple(d["grid"]), interval=d["interval"])


def sample_cuboid(spec: CuboidSpec, cap: int = DEFAULT_POINT_CAP) -> np.ndarray:
    """Uniform lattice of world points, (N, 3), symmetric about the origin.

    Per axis the integer index runs through +-(grid // (2 * interval) + 1),
    so the outermost shell sits one step outside the cuboid faces.
    """
    count = spec.point_count()
    if count > cap:
        raise TooManyPointsError(count, cap)
    axes = []
    for s, m in zip(spec.extent, spec.grid):
        half = m // (2 * spec.interval) + 1
        n = np.arange(-half, half + 1, dtype=np.float64)
        axes.append(n * (s * spec.interval / m))
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])


def init_cloud(
    points: np.ndarray,
    n_features: int,
    rng_seed: int,
    spacing: float | None = None,
    basis_weights: np.ndarray | None = None,
) -> GaussianCloud:
    """Build a cloud with the given centers and randomized attributes.

    Deterministic for a fixed seed.  Initial scale is half the lattice
    spacing (isotropic), so neighbouring Gaussians overlap at roughly one
    standard deviation; when ``spacing`` is not given it is estimated from
    the bounding-box volume per point.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3 or points.shape[0] == 0:
        raise InvalidParameterError("points must be a non-empty (N, 3) array")
    n = points.shape[0]
    if spacing is None:
        span = np.ptp(points, axis=0)
        span = np.where(span > 0, span, 1.0)
        spacing = float(np.prod(span) ** (1.0 / 3.0) / max(n, 2) ** (1.0 / 3.0))
    if spacing <= 0:
        raise InvalidParameterError(f"spacing must be positive, got {spacing}")
    rng = np.random.default_rng(rng_seed)
    rotations = np.zeros((n, 4))
    rotations[:, 0] = 1.0
    features = rng.uniform(-FEATURE_INIT_RANGE, FEATURE_INIT_RANGE, size=(n, n_features))
    return GaussianCloud(
        positions=points,
        rotations=rotations,
        log_scales=np.full((n, 3), np.log(spacing / 2.0)),
        raw_opacities=np.full(n, logit(INIT_OPACITY)),
        features=features,
        basis_weights=basis_weights,
    )


def init_alternative(
    strategy: str,
    spec: CuboidSpec,
    n_features: int,
    rng_seed: int,
    n_points: int | None = None,
    radius: float | None = None,
    basis_weights: np.ndarray | None = None,
    cap: int = DEFAULT_POINT_CAP,
) -> GaussianCloud:
    """Center-initialization strategies for the ablation study.

    ``cuboid`` is the lattice strategy (identical to ``sample_cuboid`` +
    ``init_cloud``); ``random`` draws uniformly inside the cuboid volume and
    ``spherical`` uniformly inside the enclosing ball.  ``n_points`` defaults
    to the lattice count so strategies are size-matched.
    """
    if strategy == "cuboid":
        pts = sample_cuboid(spec, cap=cap)
        return init_cloud(
            pts, n_features, rng_seed,
            spacing=float(spec.spacings.mean()),
            basis_weights=basis_weights,
        )

    if n_points is None:
        n_points = spec.point_count()
    if n_points < 1:
        raise InvalidParameterError("n_points must be >= 1")
    if n_points > cap:
        raise TooManyPointsError(n_points, cap)
    rng = np.random.default_rng((rng_seed, 0xACB1))
    extent = np.asarray(spec.extent)
    if strategy == "random":
        pts = rng.uniform(-extent / 2.0, extent / 2.0, size=(n_points, 3))
        spacing = float((np.prod(extent) / n_points) ** (1.0 / 3.0))
    elif strategy == "spherical":
        if radius is None:
            radius = float(np.linalg.norm(extent) / 2.0)
        if radius <= 0:
            raise InvalidParameterError(f"radius must be positive, got {radius}")
        direction = rng.normal(size=(n_points, 3))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        r = radius * rng.uniform(size=n_points) ** (1.0 / 3.0)
        pts = direction * r[:, None]
        spacing = float((4.0 / 3.0 * np.pi * radius**3 / n_points) ** (1.0 / 3.0))
    else:
        raise InvalidParameterError(
            f"unknown strategy {strategy!r}; expected random, spherical or cuboid"
        )
    return init_cloud(pts, n_features, rng_seed, spacing=spacing, basis_weights=basis_weights)
