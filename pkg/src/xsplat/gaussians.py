"""Learnable scene representation: 3D Gaussians with an isotropic radiation
feature vector.

The intensity of a Gaussian is a sigmoid of the inner product between its
learned feature vector and a fixed set of basis weights.  No operation in
this module takes a view direction: intensity is a property of the point,
not of the ray.

Storage follows the usual splatting parametrization so constraints hold by
construction: rotation as a quaternion (w, x, y, z), scale as log-scale
(``exp`` > 0), opacity as a raw logit (``sigmoid`` in (0, 1)).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError, NumericalDegeneracyError

# Tikhonov floor applied before inverting a 3D covariance.
COV3_REGULARIZATION = 1e-9
# Isotropic pixel^2 addition to projected 2D covariances (anti-aliasing
# low-pass filter).
COV2_LOWPASS = 0.3


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    if out.ndim == 0:
        return float(out)
    return out


def logit(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise InvalidParameterError(f"logit argument must be in (0, 1), got {p}")
    return float(np.log(p) - np.log1p(-p))


def quaternions_to_rotations(q: np.ndarray) -> np.ndarray:
    """(N, 4) quaternions (w, x, y, z) -> (N, 3, 3) rotation matrices.

    Quaternions are normalized internally, so unnormalized input is accepted.
    """
    q = np.asarray(q, dtype=np.float64)
    single = q.ndim == 1
    q = np.atleast_2d(q)
    n = np.linalg.norm(q, axis=1, keepdims=True)
    if np.any(n == 0):
        raise InvalidParameterError("zero quaternion")
    w, x, y, z = (q / n).T
    rot = np.empty((q.shape[0], 3, 3))
    rot[:, 0, 0] = 1 - 2 * (y * y + z * z)
    rot[:, 0, 1] = 2 * (x * y - w * z)
    rot[:, 0, 2] = 2 * (x * z + w * y)
    rot[:, 1, 0] = 2 * (x * y + w * z)
    rot[:, 1, 1] = 1 - 2 * (x * x + z * z)
    rot[:, 1, 2] = 2 * (y * z - w * x)
    rot[:, 2, 0] = 2 * (x * z - w * y)
    rot[:, 2, 1] = 2 * (y * z + w * x)
    rot[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return rot[0] if single else rot


@dataclass
class RadiativeGaussian:
    """A single learnable primitive.

    ``rotation`` is a quaternion (w, x, y, z); ``log_scale`` holds the log of
    the per-axis standard deviations in mm; ``raw_opacity`` is the logit of
    the opacity; ``feature`` is the radiation feature vector.
    """

    position: np.ndarray
    rotation: np.ndarray
    log_scale: np.ndarray
    raw_opacity: float
    feature: np.ndarray

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(4)
        self.log_scale = np.asarray(self.log_scale, dtype=np.float64).reshape(3)
        self.feature = np.asarray(self.feature, dtype=np.float64).reshape(-1)
        self.raw_opacity = float(self.raw_opacity)

    @property
    def opacity(self) -> float:
        return float(sigmoid(self.raw_opacity))

    @property
    def scale(self) -> np.ndarray:
        return np.exp(self.log_scale)


def covariance_3d(g: RadiativeGaussian) -> np.ndarray:
    """3x3 covariance: rotate the squared diagonal scale matrix."""
    rot = quaternions_to_rotations(g.rotation)
    m = rot * np.exp(g.log_scale)[np.newaxis, :]
    return m @ m.T


def rirf(feature: np.ndarray, basis_weights: np.ndarray):
    """Radiation intensity of a point: sigmoid of feature . weights.

    Accepts a single feature vector or an (N, n_features) batch.  There is
    deliberately no view-direction argument.
    """
    feature = np.asarray(feature, dtype=np.float64)
    basis_weights = np.asarray(basis_weights, dtype=np.float64)
    if feature.shape[-1] != basis_weights.shape[0]:
        raise InvalidParameterError(
            f"feature length {feature.shape[-1]} != weights length {basis_weights.shape[0]}"
        )
    if not (np.all(np.isfinite(feature)) and np.all(np.isfinite(basis_weights))):
        raise InvalidParameterError("feature and weights must be finite")
    return sigmoid(feature @ basis_weights)


def gaussian_density(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    """Unnormalized Gaussian density exp(-0.5 d^T cov^-1 d); equals 1 at the mean."""
    x = np.asarray(x, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    cov = np.asarray(cov, dtype=np.float64)
    d = x - mean
    try:
        sol = np.linalg.solve(cov + COV3_REGULARIZATION * np.eye(3), d)
    except np.linalg.LinAlgError as exc:
        raise NumericalDegeneracyError("covariance singular after regularization") from exc
    q = float(d @ sol)
    if not np.isfinite(q) or q < 0:
        raise NumericalDegeneracyError("covariance not positive definite")
    return float(np.exp(-0.5 * q))


def covariance_2d(cov3: np.ndarray, jac: np.ndarray, view_rot: np.ndarray) -> np.ndarray:
    """Project a 3D covariance onto the detector plane.

    Applies the affine approximation ``J W cov W^T J^T``, drops the third row
    and column, and adds the low-pass floor so the result is positive
    definite even for degenerate splats.
    """
    u = (np.asarray(jac) @ np.asarray(view_rot))[:2, :]
    return u @ np.asarray(cov3) @ u.T + COV2_LOWPASS * np.eye(2)


class GaussianCloud:
    """A set of radiative Gaussians stored as arrays (one row per Gaussian).

    ``basis_weights`` is fixed at construction and shared by every Gaussian;
    it is not a learnable quantity.
    """

    FIELDS = ("positions", "rotations", "log_scales", "raw_opacities", "features")

    def __init__(
        self,
        positions: np.ndarray,
        rotations: np.ndarray,
        log_scales: np.ndarray,
        raw_opacities: np.ndarray,
        features: np.ndarray,
        basis_weights: np.ndarray | None = None,
    ):
        self.positions = np.ascontiguousarray(positions, dtype=np.float64)
        self.rotations = np.ascontiguousarray(rotations, dtype=np.float64)
        self.log_scales = np.ascontiguousarray(log_scales, dtype=np.float64)
        self.raw_opacities = np.ascontiguousarray(raw_opacities, dtype=np.float64).reshape(-1)
        self.features = np.ascontiguousarray(features, dtype=np.float64)
        n = self.positions.shape[0]
        if n < 1:
            raise InvalidParameterError("cloud must contain at least one Gaussian")
        if self.features.ndim != 2:
            raise InvalidParameterError("features must be 2-dimensional (N, n_features)")
        for name, width in (("positions", 3), ("rotations", 4), ("log_scales", 3)):
            arr = getattr(self, name)
            if arr.shape != (n, width):
                raise InvalidParameterError(f"{name} must have shape ({n}, {width}), got {arr.shape}")
        if self.raw_opacities.shape != (n,) or self.features.shape[0] != n:
            raise InvalidParameterError("attribute row counts disagree")
        if basis_weights is None:
            basis_weights = np.ones(self.features.shape[1])
        self._basis_weights = np.asarray(basis_weights, dtype=np.float64).reshape(-1)
        if self._basis_weights.shape[0] != self.features.shape[1]:
            raise InvalidParameterError("basis_weights length must equal feature length")
        self._basis_weights.flags.writeable = False

    @classmethod
    def from_gaussians(
        cls, gaussians: list[RadiativeGaussian], basis_weights: np.ndarray | None = None
    ) -> "GaussianCloud":
        if not gaussians:
            raise InvalidParameterError("cloud must contain at least one Gaussian")
        return cls(
            positions=np.stack([g.position for g in gaussians]),
            rotations=np.stack([g.rotation for g in gaussians]),
            log_scales=np.stack([g.log_scale for g in gaussians]),
            raw_opacities=np.array([g.raw_opacity for g in gaussians]),
            features=np.stack([g.feature for g in gaussians]),
            basis_weights=basis_weights,
        )

    @property
    def basis_weights(self) -> np.ndarray:
        return self._basis_weights

    @property
    def n_points(self) -> int:
        return self.positions.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def opacities(self) -> np.ndarray:
        return sigmoid(self.raw_opacities)

    @property
    def scales(self) -> np.ndarray:
        return np.exp(self.log_scales)

    def intensities(self) -> np.ndarray:
        """Per-Gaussian radiation intensity (view-independent by construction)."""
        return rirf(self.features, self._basis_weights)

    def normalize_rotations(self):
        self.rotations /= np.linalg.norm(self.rotations, axis=1, keepdims=True)

    def __len__(self) -> int:
        return self.n_points

    def __getitem__(self, i: int) -> RadiativeGaussian:
        return RadiativeGaussian(
            position=self.positions[i].copy(),
            rotation=self.rotations[i].copy(),
            log_scale=self.log_scales[i].copy(),
            raw_opacity=float(self.raw_opacities[i]),
            feature=self.features[i].copy(),
        )

    def copy(self) -> "GaussianCloud":
        return GaussianCloud(
            self.positions.copy(),
            self.rotations.copy(),
            self.log_scales.copy(),
            self.raw_opacities.copy(),
            self.features.copy(),
            self._basis_weights.copy(),
        )

    def fingerprint(self) -> tuple:
        """Cheap content digest used to detect mutation between forward and
        backward rasterization passes."""
        return (
            self.n_points,
            self.n_features,
            float(np.sum(self.positions)),
            float(np.sum(self.raw_opacities)),
            float(np.sum(self.features)),
            float(np.sum(self.log_scales)),
            float(np.sum(self.rotations)),
        )
