"""Gaussian scene representation.

A scene is a structure-of-arrays over N Gaussians. Spatial and appearance
parameters are stored in unconstrained domains (log-scale, logit-opacity,
logit-color, unnormalized quaternion) so that gradient steps never leave the
valid set; activations are applied where the physical quantities are needed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyPointCloud, InvalidBox, ZeroQuaternion

DEFAULT_FEATURE_DIM = 32

# Initialization defaults: activated opacity and feature noise scale.
INIT_OPACITY = 0.1
INIT_FEATURE_STD = 0.1


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def logit(p):
    p = np.asarray(p)
    return np.log(p) - np.log1p(-p)


@dataclass
class GaussianSet:
    """All learnable per-Gaussian parameters, one row per Gaussian.

    positions      (N, 3) world-space centers
    rotations      (N, 4) quaternions (w, x, y, z), stored unnormalized
    log_scales     (N, 3) log of per-axis scale
    opacity_logits (N,)   logit of opacity
    colors         (N, 3) RGB logits; activated color is sigmoid(colors)
    features       (N, C) semantic feature vectors, no activation
    """

    positions: np.ndarray
    rotations: np.ndarray
    log_scales: np.ndarray
    opacity_logits: np.ndarray
    colors: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        n = self.positions.shape[0]
        if self.positions.shape != (n, 3):
            raise ValueError(f"positions must be (N, 3), got {self.positions.shape}")
        if self.rotations.shape != (n, 4):
            raise ValueError(f"rotations must be (N, 4), got {self.rotations.shape}")
        if self.log_scales.shape != (n, 3):
            raise ValueError(f"log_scales must be (N, 3), got {self.log_scales.shape}")
        if self.opacity_logits.shape != (n,):
            raise ValueError(f"opacity_logits must be (N,), got {self.opacity_logits.shape}")
        if self.colors.shape != (n, 3):
            raise ValueError(f"colors must be (N, 3), got {self.colors.shape}")
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise ValueError(f"features must be (N, C), got {self.features.shape}")

    @property
    def count(self) -> int:
        return self.positions.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def dtype(self):
        return self.positions.dtype

    def opacities(self) -> np.ndarray:
        """Activated opacities in (0, 1), shape (N,)."""
        return sigmoid(self.opacity_logits)

    def scales(self) -> np.ndarray:
        """Activated per-axis scales, shape (N, 3)."""
        return np.exp(self.log_scales)

    def rgb(self) -> np.ndarray:
        """Activated colors in (0, 1), shape (N, 3)."""
        return sigmoid(self.colors)

    def copy(self) -> "GaussianSet":
        return GaussianSet(
            self.positions.copy(), self.rotations.copy(), self.log_scales.copy(),
            self.opacity_logits.copy(), self.colors.copy(), self.features.copy(),
        )

    def subset(self, ids) -> "GaussianSet":
        """New scene holding only the given Gaussian rows (may be empty)."""
        ids = np.asarray(ids, dtype=np.int64)
        return GaussianSet(
            self.positions[ids], self.rotations[ids], self.log_scales[ids],
            self.opacity_logits[ids], self.colors[ids], self.features[ids],
        )

    def astype(self, dtype) -> "GaussianSet":
        return GaussianSet(
            self.positions.astype(dtype), self.rotations.astype(dtype),
            self.log_scales.astype(dtype), self.opacity_logits.astype(dtype),
            self.colors.astype(dtype), self.features.astype(dtype),
        )

    def param_dict(self) -> dict:
        """Named views of the six learnable arrays, in canonical order."""
        return {
            "positions": self.positions,
            "rotations": self.rotations,
            "log_scales": self.log_scales,
            "opacity_logits": self.opacity_logits,
            "colors": self.colors,
            "features": self.features,
        }

    def with_spatial(self, positions, rotations, log_scales) -> "GaussianSet":
        """Copy with replaced spatial parameters; appearance/features shared."""
        return replace(self, positions=positions, rotations=rotations, log_scales=log_scales)


def quat_to_rotation(q: np.ndarray) -> np.ndarray:
    """Rotation matrix from a (w, x, y, z) quaternion, normalizing first.

    Raises ZeroQuaternion when the norm is at or below 1e-12.
    """
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q)
    if norm <= 1e-12:
        raise ZeroQuaternion(f"quaternion norm {norm:.3e} too small")
    return _rotation_matrices(q[None, :] / norm)[0]


def _rotation_matrices(u: np.ndarray) -> np.ndarray:
    """Rotation matrices (N, 3, 3) from unit quaternions (N, 4)."""
    w, x, y, z = u[:, 0], u[:, 1], u[:, 2], u[:, 3]
    n = u.shape[0]
    r = np.empty((n, 3, 3), dtype=u.dtype)
    r[:, 0, 0] = 1 - 2 * (y * y + z * z)
    r[:, 0, 1] = 2 * (x * y - w * z)
    r[:, 0, 2] = 2 * (x * z + w * y)
    r[:, 1, 0] = 2 * (x * y + w * z)
    r[:, 1, 1] = 1 - 2 * (x * x + z * z)
    r[:, 1, 2] = 2 * (y * z - w * x)
    r[:, 2, 0] = 2 * (x * z - w * y)
    r[:, 2, 1] = 2 * (y * z + w * x)
    r[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return r


def covariance3d(q: np.ndarray, log_scale: np.ndarray) -> np.ndarray:
    """3x3 covariance R S S^T R^T with S = diag(exp(log_scale))."""
    r = quat_to_rotation(q)
    d = np.exp(2.0 * np.asarray(log_scale, dtype=np.float64))
    return (r * d[None, :]) @ r.T


def covariance3d_batch(rotations: np.ndarray, log_scales: np.ndarray):
    """Covariances (N, 3, 3) for a whole scene; also returns the unit
    quaternions and rotation matrices reused by the backward pass."""
    norms = np.linalg.norm(rotations, axis=1)
    if np.any(norms <= 1e-12):
        bad = int(np.argmin(norms))
        raise ZeroQuaternion(f"gaussian {bad} has zero quaternion")
    units = rotations / norms[:, None]
    r = _rotation_matrices(units)
    d = np.exp(2.0 * log_scales)  # (N, 3) eigenvalues
    cov = np.einsum("nij,nj,nkj->nik", r, d, r)
    return cov, units, r


def covariance3d_backward(rotations, log_scales, units, r, grad_cov):
    """Chain dL/dSigma (N, 3, 3) back to raw quaternions and log-scales.

    Sigma = R D R^T with D = diag(exp(2 * log_scale)) and R built from the
    normalized quaternion. grad_cov need not be symmetric; it is symmetrized
    because Sigma is produced symmetric.
    """
    g = 0.5 * (grad_cov + np.transpose(grad_cov, (0, 2, 1)))
    d = np.exp(2.0 * log_scales)

    # dL/d log_scale_k = (R^T G R)_kk * 2 exp(2 l_k)
    gd_diag = np.einsum("nij,nik,nkj->nj", r, g, r)  # diag of R^T G R, (N, 3)
    grad_log_scales = gd_diag * 2.0 * d

    # dL/dR = 2 G R D
    gr = 2.0 * np.einsum("nij,njk,nk->nik", g, r, d)

    # dR/d(unit quaternion components); each is linear in (w, x, y, z).
    w, x, y, z = units[:, 0], units[:, 1], units[:, 2], units[:, 3]
    zero = np.zeros_like(w)
    dr_dw = 2.0 * np.stack([
        np.stack([zero, -z, y], axis=-1),
        np.stack([z, zero, -x], axis=-1),
        np.stack([-y, x, zero], axis=-1),
    ], axis=-2)
    dr_dx = 2.0 * np.stack([
        np.stack([zero, y, z], axis=-1),
        np.stack([y, -2 * x, -w], axis=-1),
        np.stack([z, w, -2 * x], axis=-1),
    ], axis=-2)
    dr_dy = 2.0 * np.stack([
        np.stack([-2 * y, x, w], axis=-1),
        np.stack([x, zero, z], axis=-1),
        np.stack([-w, z, -2 * y], axis=-1),
    ], axis=-2)
    dr_dz = 2.0 * np.stack([
        np.stack([-2 * z, -w, x], axis=-1),
        np.stack([w, -2 * z, y], axis=-1),
        np.stack([x, y, zero], axis=-1),
    ], axis=-2)
    grad_unit = np.stack([
        np.einsum("nij,nij->n", gr, dr_dw),
        np.einsum("nij,nij->n", gr, dr_dx),
        np.einsum("nij,nij->n", gr, dr_dy),
        np.einsum("nij,nij->n", gr, dr_dz),
    ], axis=-1)  # (N, 4)

    # Through normalization: dq = (I - u u^T) / |q| * du
    norms = np.linalg.norm(rotations, axis=1, keepdims=True)
    grad_rotations = (grad_unit - units * np.sum(grad_unit * units, axis=1, keepdims=True)) / norms
    return grad_rotations.astype(rotations.dtype), grad_log_scales.astype(log_scales.dtype)


def init_from_pointcloud(points, colors, target_feature_dim=DEFAULT_FEATURE_DIM,
                         seed=0, dtype=np.float32) -> GaussianSet:
    """Bootstrap a scene from a point cloud.

    Positions copy the points. Scales are isotropic, log of the mean distance
    to the 3 nearest neighbors (pads with the overall mean spacing when fewer
    than 3 other points exist). Opacity starts at logit(0.1), rotations at the
    identity quaternion, colors at the logit of the given RGB, and features
    draw i.i.d. from N(0, INIT_FEATURE_STD^2) with the given seed.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3 or points.shape[0] < 1:
        raise EmptyPointCloud(f"need (M, 3) points with M >= 1, got {points.shape}")
    n = points.shape[0]
    colors = np.asarray(colors, dtype=np.float64)
    if colors.shape != (n, 3):
        raise ValueError(f"colors must be ({n}, 3), got {colors.shape}")

    if n == 1:
        mean_nn = np.ones(1)
    else:
        k = min(3, n - 1)
        tree = cKDTree(points)
        dist, _ = tree.query(points, k=k + 1)  # first column is self (0)
        mean_nn = dist[:, 1:].mean(axis=1)
        mean_nn = np.maximum(mean_nn, 1e-7)
    log_scales = np.repeat(np.log(mean_nn)[:, None], 3, axis=1)

    rotations = np.zeros((n, 4))
    rotations[:, 0] = 1.0
    opacity_logits = np.full(n, logit(INIT_OPACITY))
    color_logits = logit(np.clip(colors, 1e-4, 1 - 1e-4))
    rng = np.random.default_rng(seed)
    features = rng.normal(0.0, INIT_FEATURE_STD, size=(n, target_feature_dim))

    return GaussianSet(
        points.astype(dtype), rotations.astype(dtype), log_scales.astype(dtype),
        opacity_logits.astype(dtype), color_logits.astype(dtype), features.astype(dtype),
    )


def init_random(n, bbox, feature_dim=DEFAULT_FEATURE_DIM, seed=0, dtype=np.float32) -> GaussianSet:
    """Scene of n Gaussians with positions uniform in an axis-aligned box.

    bbox is ((xmin, ymin, zmin), (xmax, ymax, zmax)); the box must have
    positive volume. Remaining fields follow init_from_pointcloud defaults
    with mid-gray colors.
    """
    if n < 1:
        raise InvalidBox(f"need n >= 1, got {n}")
    lo = np.asarray(bbox[0], dtype=np.float64)
    hi = np.asarray(bbox[1], dtype=np.float64)
    if lo.shape != (3,) or hi.shape != (3,) or np.any(hi <= lo):
        raise InvalidBox(f"box {bbox} has non-positive volume")
    rng = np.random.default_rng(seed)
    points = rng.uniform(lo, hi, size=(n, 3))
    colors = np.full((n, 3), 0.5)
    scene = init_from_pointcloud(points, colors, feature_dim, seed=seed, dtype=dtype)
    # Feature rng above reused the seed on a fresh generator; redraw from the
    # position generator stream so distinct seeds stay distinct end to end.
    scene.features[:] = rng.normal(0.0, INIT_FEATURE_STD, size=(n, feature_dim)).astype(dtype)
    return scene
