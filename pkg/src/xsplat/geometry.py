"""Analytic camera model for circular cone-beam X-ray scanners.

All camera quantities (extrinsics, intrinsics, viewing rotation, projection
Jacobian) are closed-form functions of the scanner parameters; nothing is
estimated from images.

Coordinate conventions
======================
World frame (right-handed, millimetres):
  - Origin at the centre of the scanned object.
  - The X-ray source orbits in the world XY plane at radius
    ``source_object_distance``; at azimuth ``phi`` it sits at
    ``(L_SO * cos(phi), L_SO * sin(phi), 0)``.
  - Elevation of the source is fixed at zero.

Camera frame (right-handed):
  - Origin at the source, +Z along the optical axis towards the detector,
    so the world origin maps to ``(0, 0, L_SO)``.
  - +X to the right and +Y downwards on the detector.

Image frame:
  - Coordinates in pixels; pixel ``(ix, iy)`` samples the point ``(ix, iy)``,
    i.e. pixel centres lie on the integer lattice and the principal point
    ``(W/2, H/2)`` coincides with a pixel centre for even detectors.

Angles are radians everywhere in this module; the CLI converts from degrees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError

# Points closer to the source than this fraction of the source-object
# distance are culled during rendering (the projection Jacobian is singular
# at zero depth).
NEAR_PLANE_FACTOR = 0.01


@dataclass
class ScannerConfig:
    """Full description of a circular cone-beam acquisition.

    Distances are millimetres, ``pixel_pitch`` is millimetres per pixel and
    ``angles`` holds the source azimuths (radians, strictly increasing,
    inside ``[0, pi)``).
    """

    source_object_distance: float
    source_detector_distance: float
    detector_width: int
    detector_height: int
    pixel_pitch: float = 1.0
    angles: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.angles = np.atleast_1d(np.asarray(self.angles, dtype=np.float64))
        if not (self.source_detector_distance > self.source_object_distance > 0):
            raise InvalidParameterError(
                "need source_detector_distance > source_object_distance > 0, got "
                f"{self.source_detector_distance} and {self.source_object_distance}"
            )
        if self.detector_width < 1 or self.detector_height < 1:
            raise InvalidParameterError("detector must be at least 1x1 pixels")
        if not self.pixel_pitch > 0:
            raise InvalidParameterError(f"pixel_pitch must be > 0, got {self.pixel_pitch}")
        if self.angles.size:
            if not np.all(np.isfinite(self.angles)):
                raise InvalidParameterError("angles must be finite")
            if np.any(self.angles < 0) or np.any(self.angles >= np.pi):
                raise InvalidParameterError("angles must lie in [0, pi)")
            if self.angles.size > 1 and np.any(np.diff(self.angles) <= 0):
                raise InvalidParameterError("angles must be strictly increasing")

    @property
    def focal_pixels(self) -> float:
        """Focal length expressed in pixels."""
        return self.source_detector_distance / self.pixel_pitch

    @property
    def near_plane(self) -> float:
        return NEAR_PLANE_FACTOR * self.source_object_distance

    def to_dict(self) -> dict:
        return {
            "source_object_distance": self.source_object_distance,
            "source_detector_distance": self.source_detector_distance,
            "detector_width": self.detector_width,
            "detector_height": self.detector_height,
            "pixel_pitch": self.pixel_pitch,
            "angles": self.angles.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScannerConfig":
        return cls(
            source_object_distance=float(d["source_object_distance"]),
            source_detector_distance=float(d["source_detector_distance"]),
            detector_width=int(d["detector_width"]),
            detector_height=int(d["detector_height"]),
            pixel_pitch=float(d["pixel_pitch"]),
            angles=np.asarray(d["angles"], dtype=np.float64),
        )


def equal_interval_angles(n_views: int) -> np.ndarray:
    """``n_views`` azimuths covering [0, pi) at equal spacing."""
    if n_views < 1:
        raise InvalidParameterError("n_views must be >= 1")
    return np.arange(n_views, dtype=np.float64) * (np.pi / n_views)


@dataclass(frozen=True)
class ExtrinsicMatrix:
    """4x4 world-homogeneous to camera-homogeneous transform."""

    m: np.ndarray

    @property
    def rotation(self) -> np.ndarray:
        return self.m[:3, :3]

    @property
    def source_object_distance(self) -> float:
        return float(self.m[2, 3])

    @property
    def angle(self) -> float:
        """Source azimuth recovered from the rotation block."""
        return math.atan2(-self.m[0, 0], self.m[0, 1])


@dataclass(frozen=True)
class IntrinsicMatrix:
    """3x4 camera-homogeneous to image-homogeneous transform."""

    m: np.ndarray

    @property
    def focal(self) -> float:
        return float(self.m[0, 0])

    @property
    def principal_point(self) -> tuple[float, float]:
        return float(self.m[0, 2]), float(self.m[1, 2])


def viewing_rotation(phi: float) -> np.ndarray:
    """3x3 world-to-camera rotation for source azimuth ``phi``."""
    if not math.isfinite(phi):
        raise InvalidParameterError(f"angle must be finite, got {phi}")
    s, c = math.sin(phi), math.cos(phi)
    return np.array(
        [
            [-s, c, 0.0],
            [0.0, 0.0, -1.0],
            [-c, -s, 0.0],
        ]
    )


def extrinsic_from_angle(cfg: ScannerConfig, phi: float) -> ExtrinsicMatrix:
    """Extrinsic matrix for azimuth ``phi``.

    The rotation block is bit-identical to :func:`viewing_rotation`; the
    translation places the world origin at depth ``source_object_distance``.
    """
    dist = cfg.source_object_distance
    if not math.isfinite(dist):
        raise InvalidParameterError("source_object_distance must be finite")
    m = np.zeros((4, 4))
    m[:3, :3] = viewing_rotation(phi)
    m[2, 3] = dist
    m[3, 3] = 1.0
    return ExtrinsicMatrix(m)


def intrinsic_from_config(cfg: ScannerConfig) -> IntrinsicMatrix:
    """Intrinsic matrix: focal ``L_SD / pixel_pitch``, principal point (W/2, H/2)."""
    f = cfg.focal_pixels
    m = np.array(
        [
            [f, 0.0, cfg.detector_width / 2.0, 0.0],
            [0.0, f, cfg.detector_height / 2.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
        ]
    )
    return IntrinsicMatrix(m)


def world_to_camera(point: np.ndarray, ext: ExtrinsicMatrix) -> np.ndarray:
    """Map a world point (mm) to camera coordinates; ``t[2]`` is the depth."""
    point = np.asarray(point, dtype=np.float64)
    if not np.all(np.isfinite(point)):
        raise InvalidParameterError("world point must be finite")
    return ext.rotation @ point + ext.m[:3, 3]


def camera_to_image(
    t: np.ndarray, intr: IntrinsicMatrix, near_plane: float = 0.0
) -> np.ndarray | None:
    """Perspective-project a camera point to pixel coordinates.

    Returns ``None`` when the point lies at or behind the near plane (culled,
    as opposed to raising for malformed input).
    """
    t = np.asarray(t, dtype=np.float64)
    if not np.all(np.isfinite(t)):
        raise InvalidParameterError("camera point must be finite")
    tz = t[2]
    if tz <= near_plane:
        return None
    u_h = intr.m @ np.array([t[0], t[1], tz, 1.0])
    return u_h[:2] / tz


def projection_jacobian(t: np.ndarray, source_detector_distance: float) -> np.ndarray:
    """Jacobian of the affine approximation of the perspective projection.

    Expressed in detector millimetres; divide by the pixel pitch for the
    pixel-space Jacobian (they coincide at unit pitch).
    """
    t = np.asarray(t, dtype=np.float64)
    tx, ty, tz = t
    if not tz > 0:
        raise InvalidParameterError(f"depth must be positive, got {tz}")
    d = source_detector_distance
    return np.array(
        [
            [d / tz, 0.0, -d * tx / tz**2],
            [0.0, d / tz, -d * ty / tz**2],
            [0.0, 0.0, 0.0],
        ]
    )
