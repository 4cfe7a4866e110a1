import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from dynsplat.errors import EmptyPointCloud, InvalidBox, ZeroQuaternion
from dynsplat.scene import (GaussianSet, covariance3d, covariance3d_batch,
                            init_from_pointcloud, init_random, logit,
                            quat_to_rotation, sigmoid)


class TestQuatToRotation:
    def test_identity_quaternion(self):
        assert np.allclose(quat_to_rotation(np.array([1.0, 0, 0, 0])), np.eye(3))

    def test_pi_about_z(self):
        expected = np.array([[-1.0, 0, 0], [0, -1.0, 0], [0, 0, 1.0]])
        assert np.allclose(quat_to_rotation(np.array([0.0, 0, 0, 1])), expected)

    def test_magnitude_absorbed(self):
        assert np.allclose(quat_to_rotation(np.array([2.0, 0, 0, 0])), np.eye(3))

    def test_zero_quaternion_raises(self):
        with pytest.raises(ZeroQuaternion):
            quat_to_rotation(np.zeros(4))

    def test_orthonormal_positive_det(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            r = quat_to_rotation(rng.normal(size=4))
            assert np.allclose(r @ r.T, np.eye(3), atol=1e-12)
            assert np.isclose(np.linalg.det(r), 1.0)


class TestCovariance3d:
    def test_unit(self):
        assert np.allclose(covariance3d(np.array([1.0, 0, 0, 0]), np.zeros(3)),
                           np.eye(3))

    def test_axis_scale(self):
        sigma = covariance3d(np.array([1.0, 0, 0, 0]), np.array([np.log(2.0), 0, 0]))
        assert np.allclose(sigma, np.diag([4.0, 1.0, 1.0]))

    def test_matches_rotation_library(self):
        # independent construction through scipy's quaternion convention
        rng = np.random.default_rng(3)
        for _ in range(30):
            q = rng.normal(size=4)
            ls = rng.normal(size=3) * 0.4
            u = q / np.linalg.norm(q)
            r = Rotation.from_quat([u[1], u[2], u[3], u[0]]).as_matrix()
            expected = r @ np.diag(np.exp(2 * ls)) @ r.T
            assert np.abs(covariance3d(q, ls) - expected).max() < 1e-10

    def test_sign_flip_invariance(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            q = rng.normal(size=4)
            ls = rng.normal(size=3) * 0.3
            assert np.abs(covariance3d(q, ls) - covariance3d(-q, ls)).max() < 1e-12

    def test_eigenvalues_are_squared_scales(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            q = rng.normal(size=4)
            ls = rng.normal(size=3) * 0.5
            eig = np.sort(np.linalg.eigvalsh(covariance3d(q, ls)))
            expected = np.sort(np.exp(2 * ls))
            assert np.abs(eig - expected).max() < 1e-9 * expected.max()

    def test_symmetric_psd(self):
        rng = np.random.default_rng(6)
        cov, _, _ = covariance3d_batch(rng.normal(size=(50, 4)),
                                       rng.normal(size=(50, 3)) * 0.4)
        assert np.abs(cov - np.transpose(cov, (0, 2, 1))).max() < 1e-12
        assert np.linalg.eigvalsh(cov).min() > -1e-9


class TestActivations:
    def test_round_trips(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=1000) * 5
        assert np.abs(logit(sigmoid(x)) - x).max() < 1e-9
        p = rng.uniform(1e-6, 1 - 1e-6, 1000)
        assert np.abs(sigmoid(logit(p)) - p).max() < 1e-12
        assert np.abs(np.log(np.exp(x)) - x).max() < 1e-12


class TestInitFromPointcloud:
    def test_single_point(self):
        s = init_from_pointcloud(np.zeros((1, 3)), np.full((1, 3), 0.5),
                                 target_feature_dim=4)
        assert s.count == 1
        assert np.allclose(s.positions[0], 0)
        assert np.allclose(s.rotations[0], [1, 0, 0, 0])

    def test_unit_square_neighbor_distances(self):
        # corners of the unit square: 3-NN distances are (1, 1, sqrt 2)
        pts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], dtype=float)
        s = init_from_pointcloud(pts, np.full((4, 3), 0.5), target_feature_dim=4)
        expected = np.log((2.0 + np.sqrt(2.0)) / 3.0)
        assert np.abs(s.log_scales - expected).max() < 1e-6

    def test_defaults(self):
        pts = np.random.default_rng(0).normal(size=(10, 3))
        s = init_from_pointcloud(pts, np.full((10, 3), 0.25), target_feature_dim=6)
        assert np.allclose(s.opacities(), 0.1, atol=1e-6)
        assert np.allclose(s.rgb(), 0.25, atol=1e-6)
        assert s.feature_dim == 6

    def test_seed_determinism(self):
        pts = np.random.default_rng(1).normal(size=(5, 3))
        cols = np.full((5, 3), 0.5)
        a = init_from_pointcloud(pts, cols, 8, seed=42)
        b = init_from_pointcloud(pts, cols, 8, seed=42)
        assert np.array_equal(a.features, b.features)

    def test_empty_raises(self):
        with pytest.raises(EmptyPointCloud):
            init_from_pointcloud(np.zeros((0, 3)), np.zeros((0, 3)))


class TestInitRandom:
    def test_single_deterministic(self):
        box = ((0, 0, 0), (1, 1, 1))
        a = init_random(1, box, feature_dim=4, seed=3)
        b = init_random(1, box, feature_dim=4, seed=3)
        assert np.array_equal(a.positions, b.positions)
        assert np.all((a.positions >= 0) & (a.positions <= 1))

    def test_positions_within_box(self):
        lo, hi = (-2, 0, 1), (-1, 3, 2)
        s = init_random(1000, (lo, hi), feature_dim=2, seed=0)
        assert np.all(s.positions >= np.array(lo) - 1e-7)
        assert np.all(s.positions <= np.array(hi) + 1e-7)

    def test_seeds_differ(self):
        box = ((0, 0, 0), (1, 1, 1))
        a = init_random(50, box, feature_dim=2, seed=0)
        b = init_random(50, box, feature_dim=2, seed=1)
        assert not np.array_equal(a.positions, b.positions)

    def test_invalid_box(self):
        with pytest.raises(InvalidBox):
            init_random(10, ((0, 0, 0), (0, 1, 1)))


class TestGaussianSet:
    def test_shape_validation(self):
        with pytest.raises(ValueError):
            GaussianSet(np.zeros((3, 3)), np.zeros((2, 4)), np.zeros((3, 3)),
                        np.zeros(3), np.zeros((3, 3)), np.zeros((3, 2)))

    def test_empty_set_allowed(self):
        # subset selection legitimately produces zero-Gaussian scenes
        s = init_random(4, ((0, 0, 0), (1, 1, 1)), feature_dim=3, seed=0)
        empty = s.subset([])
        assert empty.count == 0
        assert empty.feature_dim == 3

    def test_subset_and_copy(self):
        s = init_random(6, ((0, 0, 0), (1, 1, 1)), feature_dim=3, seed=0)
        sub = s.subset([4, 1])
        assert np.array_equal(sub.positions[0], s.positions[4])
        c = s.copy()
        c.positions += 1
        assert not np.array_equal(c.positions, s.positions)
