import numpy as np
import pytest

from xsplat.gaussians import GaussianCloud
from xsplat.geometry import ScannerConfig, equal_interval_angles


def small_scanner(width=16, height=16, pitch=12.0, n_views=4) -> ScannerConfig:
    return ScannerConfig(
        source_object_distance=1000.0,
        source_detector_distance=1500.0,
        detector_width=width,
        detector_height=height,
        pixel_pitch=pitch,
        angles=equal_interval_angles(n_views),
    )


def random_cloud(
    n,
    rng,
    n_features=4,
    pos_scale=40.0,
    scale_range=(3.0, 10.0),
    opacity_range=(0.05, 0.5),
    basis_weights=None,
) -> GaussianCloud:
    """Random but well-conditioned cloud: normalized quats, opacities away
    from the clamp so finite differences stay smooth."""
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    alphas = rng.uniform(*opacity_range, size=n)
    return GaussianCloud(
        positions=rng.uniform(-pos_scale, pos_scale, size=(n, 3)),
        rotations=q,
        log_scales=np.log(rng.uniform(*scale_range, size=(n, 3))),
        raw_opacities=np.log(alphas) - np.log1p(-alphas),
        features=rng.normal(scale=0.5, size=(n, n_features)),
        basis_weights=basis_weights,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
