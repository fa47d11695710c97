import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xsplat.errors import InvalidParameterError, NumericalDegeneracyError
from xsplat.gaussians import (
    COV2_LOWPASS,
    GaussianCloud,
    RadiativeGaussian,
    covariance_2d,
    covariance_3d,
    gaussian_density,
    logit,
    quaternions_to_rotations,
    rirf,
    sigmoid,
)
from xsplat.geometry import projection_jacobian, viewing_rotation

from conftest import random_cloud


class TestSigmoidLogit:
    def test_values(self):
        assert sigmoid(0.0) == 0.5
        assert sigmoid(np.log(3)) == pytest.approx(0.75)
        assert sigmoid(-np.log(3)) == pytest.approx(0.25)

    def test_extreme_arguments_stable(self):
        assert sigmoid(800.0) == 1.0
        assert sigmoid(-800.0) == 0.0
        assert np.all(np.isfinite(sigmoid(np.array([-1e6, 1e6]))))

    @given(st.floats(min_value=1e-12, max_value=1 - 1e-12))
    def test_logit_inverts_sigmoid(self, p):
        assert sigmoid(logit(p)) == pytest.approx(p, rel=1e-12)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.5, 2.0])
    def test_logit_domain(self, p):
        with pytest.raises(InvalidParameterError):
            logit(p)


class TestQuaternions:
    def test_identity(self):
        assert np.array_equal(quaternions_to_rotations(np.array([1.0, 0, 0, 0])), np.eye(3))

    def test_half_turn_about_z(self):
        # q = (cos 45, 0, 0, sin 45) rotates 90 degrees about +z.
        q = np.array([np.cos(np.pi / 4), 0.0, 0.0, np.sin(np.pi / 4)])
        r = quaternions_to_rotations(q)
        assert np.allclose(r @ [1, 0, 0], [0, 1, 0], atol=1e-15)
        assert np.allclose(r @ [0, 1, 0], [-1, 0, 0], atol=1e-15)

    def test_axis_angle_oracle(self, rng):
        # Rodrigues' formula as an independent construction.
        for _ in range(50):
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            theta = rng.uniform(-np.pi, np.pi)
            q = np.concatenate([[np.cos(theta / 2)], np.sin(theta / 2) * axis])
            k = np.array(
                [
                    [0, -axis[2], axis[1]],
                    [axis[2], 0, -axis[0]],
                    [-axis[1], axis[0], 0],
                ]
            )
            rodrigues = np.eye(3) + np.sin(theta) * k + (1 - np.cos(theta)) * (k @ k)
            assert np.allclose(quaternions_to_rotations(q), rodrigues, atol=1e-12)

    def test_orthonormality_batch(self, rng):
        q = rng.normal(size=(100, 4))
        rots = quaternions_to_rotations(q)
        assert rots.shape == (100, 3, 3)
        eye = np.broadcast_to(np.eye(3), rots.shape)
        assert np.allclose(np.einsum("nij,nkj->nik", rots, rots), eye, atol=1e-13)
        assert np.allclose(np.linalg.det(rots), 1.0, atol=1e-13)

    def test_scale_invariance(self, rng):
        q = rng.normal(size=4)
        assert np.allclose(
            quaternions_to_rotations(q), quaternions_to_rotations(3.7 * q), atol=1e-13
        )

    def test_zero_quaternion_rejected(self):
        with pytest.raises(InvalidParameterError):
            quaternions_to_rotations(np.zeros(4))


class TestCovariance3D:
    def _gaussian(self, rotation, log_scale):
        return RadiativeGaussian(
            position=np.zeros(3),
            rotation=rotation,
            log_scale=log_scale,
            raw_opacity=0.0,
            feature=np.zeros(2),
        )

    def test_identity_rotation_diagonal(self):
        g = self._gaussian([1, 0, 0, 0], np.log([2.0, 3.0, 5.0]))
        assert np.allclose(covariance_3d(g), np.diag([4.0, 9.0, 25.0]), atol=1e-12)

    def test_similarity_transform_oracle(self, rng):
        for _ in range(20):
            q = rng.normal(size=4)
            s = rng.uniform(0.5, 4.0, size=3)
            g = self._gaussian(q, np.log(s))
            r = quaternions_to_rotations(q)
            expected = r @ np.diag(s**2) @ r.T
            assert np.allclose(covariance_3d(g), expected, atol=1e-12)

    def test_symmetric_positive_definite(self, rng):
        for _ in range(20):
            g = self._gaussian(rng.normal(size=4), rng.uniform(-1, 2, size=3))
            cov = covariance_3d(g)
            assert np.allclose(cov, cov.T, atol=1e-12)
            assert np.all(np.linalg.eigvalsh(cov) > 0)

    def test_eigenvalues_are_squared_scales(self, rng):
        s = np.array([1.5, 2.5, 7.0])
        g = self._gaussian(rng.normal(size=4), np.log(s))
        assert np.allclose(np.sort(np.linalg.eigvalsh(covariance_3d(g))), np.sort(s**2), atol=1e-10)


class TestRIRF:
    def test_zero_feature_gives_half(self):
        assert rirf(np.zeros(5), np.ones(5)) == 0.5

    def test_inner_product_form(self, rng):
        f = rng.normal(size=8)
        lam = rng.normal(size=8)
        assert rirf(f, lam) == pytest.approx(1.0 / (1.0 + np.exp(-(f @ lam))), rel=1e-12)

    def test_batch_matches_rows(self, rng):
        f = rng.normal(size=(6, 3))
        lam = rng.normal(size=3)
        batch = rirf(f, lam)
        assert batch.shape == (6,)
        for i in range(6):
            assert batch[i] == pytest.approx(rirf(f[i], lam), rel=1e-14)

    def test_bounded_open_interval(self, rng):
        # Moderate arguments: float64 sigmoid saturates to exactly 0/1 only
        # beyond |x| ~ 37, which these stay well inside.
        vals = rirf(rng.normal(scale=2, size=(100, 4)), rng.normal(size=4))
        assert np.all(vals > 0) and np.all(vals < 1)

    def test_length_mismatch(self):
        with pytest.raises(InvalidParameterError):
            rirf(np.zeros(3), np.zeros(4))

    def test_non_finite_rejected(self):
        with pytest.raises(InvalidParameterError):
            rirf(np.array([np.inf, 0.0]), np.ones(2))


class TestGaussianDensity:
    def test_unit_at_mean(self, rng):
        cov = np.diag([4.0, 1.0, 9.0])
        assert gaussian_density(np.array([1.0, 2.0, 3.0]), np.array([1.0, 2.0, 3.0]), cov) == 1.0

    def test_isotropic_closed_form(self):
        # Unit covariance: density at distance r is exp(-r^2 / 2).
        val = gaussian_density(np.array([2.0, 0.0, 0.0]), np.zeros(3), np.eye(3))
        assert val == pytest.approx(np.exp(-2.0), rel=1e-6)

    def test_monotone_decay(self):
        cov = np.diag([2.0, 2.0, 2.0])
        vals = [gaussian_density(np.array([r, 0, 0]), np.zeros(3), cov) for r in (0.0, 1.0, 2.0, 4.0)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_indefinite_covariance_raises(self):
        bad = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(NumericalDegeneracyError):
            gaussian_density(np.array([0.0, 0.0, 5.0]), np.zeros(3), bad)


class TestCovariance2D:
    def test_projection_formula_oracle(self, rng):
        for _ in range(20):
            q = rng.normal(size=4)
            s = rng.uniform(1.0, 5.0, size=3)
            r3 = quaternions_to_rotations(q)
            cov3 = r3 @ np.diag(s**2) @ r3.T
            t = rng.uniform([-30, -30, 800], [30, 30, 1200])
            jac = projection_jacobian(t, 1500.0)
            w = viewing_rotation(rng.uniform(0, np.pi))
            full = jac @ w @ cov3 @ w.T @ jac.T
            expected = full[:2, :2] + COV2_LOWPASS * np.eye(2)
            assert np.allclose(covariance_2d(cov3, jac, w), expected, atol=1e-10)

    def test_positive_definite_even_for_flat_splats(self):
        cov3 = np.diag([1e-12, 1e-12, 1e-12])
        jac = projection_jacobian(np.array([0.0, 0.0, 1000.0]), 1500.0)
        c2 = covariance_2d(cov3, jac, viewing_rotation(0.0))
        assert np.all(np.linalg.eigvalsh(c2) >= COV2_LOWPASS - 1e-12)


class TestGaussianCloud:
    def test_roundtrip_single(self, rng):
        cloud = random_cloud(5, rng)
        g = cloud[2]
        assert np.array_equal(g.position, cloud.positions[2])
        assert g.opacity == pytest.approx(cloud.opacities[2])

    def test_from_gaussians(self, rng):
        cloud = random_cloud(4, rng)
        rebuilt = GaussianCloud.from_gaussians([cloud[i] for i in range(4)])
        assert np.array_equal(rebuilt.positions, cloud.positions)
        assert np.array_equal(rebuilt.features, cloud.features)

    def test_default_basis_weights_are_ones(self, rng):
        cloud = random_cloud(3, rng, n_features=6)
        assert np.array_equal(cloud.basis_weights, np.ones(6))

    def test_basis_weights_read_only(self, rng):
        cloud = random_cloud(3, rng)
        with pytest.raises(ValueError):
            cloud.basis_weights[0] = 2.0

    def test_intensities_match_rirf(self, rng):
        w = rng.normal(size=4)
        cloud = random_cloud(7, rng, n_features=4, basis_weights=w)
        assert np.allclose(cloud.intensities(), rirf(cloud.features, w), atol=0)

    def test_copy_is_independent(self, rng):
        cloud = random_cloud(3, rng)
        dup = cloud.copy()
        dup.positions[0, 0] += 1.0
        assert cloud.positions[0, 0] != dup.positions[0, 0]

    def test_fingerprint_changes_on_mutation(self, rng):
        cloud = random_cloud(3, rng)
        fp = cloud.fingerprint()
        assert cloud.fingerprint() == fp
        cloud.features[0, 0] += 1e-3
        assert cloud.fingerprint() != fp

    def test_normalize_rotations(self, rng):
        cloud = random_cloud(5, rng)
        cloud.rotations *= 3.0
        cloud.normalize_rotations()
        assert np.allclose(np.linalg.norm(cloud.rotations, axis=1), 1.0, atol=1e-14)

    @pytest.mark.parametrize(
        "mutation",
        [
            dict(positions=np.zeros((2, 2))),
            dict(rotations=np.zeros((3, 4))),
            dict(features=np.zeros(2)),
            dict(raw_opacities=np.zeros(3)),
        ],
    )
    def test_shape_validation(self, mutation):
        base = dict(
            positions=np.zeros((2, 3)),
            rotations=np.tile([1.0, 0, 0, 0], (2, 1)),
            log_scales=np.zeros((2, 3)),
            raw_opacities=np.zeros(2),
            features=np.zeros((2, 4)),
        )
        base.update(mutation)
        with pytest.raises(InvalidParameterError):
            GaussianCloud(**base)

    def test_empty_rejected(self):
        with pytest.raises(InvalidParameterError):
            GaussianCloud(
                positions=np.zeros((0, 3)),
                rotations=np.zeros((0, 4)),
                log_scales=np.zeros((0, 3)),
                raw_opacities=np.zeros(0),
                features=np.zeros((0, 4)),
            )


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_intensity_has_no_view_dependence_in_signature(seed):
    """The intensity of a cloud is a pure function of features and weights:
    recomputing it any number of times, in any order, yields the same array."""
    rng = np.random.default_rng(seed)
    cloud = random_cloud(4, rng)
    first = cloud.intensities()
    for _ in range(3):
        assert np.array_equal(cloud.intensities(), first)
