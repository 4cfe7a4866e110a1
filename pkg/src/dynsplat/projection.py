"""Perspective projection of 3D Gaussians to screen-space splats.

The 2D covariance follows the EWA affine approximation: with W the
world-to-camera rotation and J the Jacobian of perspective projection at the
camera-frame mean, cov2d = J W Sigma W^T J^T plus a low-pass dilation that
keeps sub-pixel splats rasterizable. The backward half chains screen-space
gradients to world position, quaternion, and log-scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import Camera
from .errors import SingularCovariance
from .scene import GaussianSet, covariance3d_batch, covariance3d_backward, sigmoid

LOWPASS = 0.3           # px^2 added to the 2D covariance diagonal
RADIUS_SIGMAS = 3.0     # splat support radius in standard deviations
MIN_DET = 1e-12


@dataclass
class Splat2D:
    mean2d: np.ndarray   # (2,) pixel coordinates
    cov2d: np.ndarray    # (2, 2) after low-pass dilation
    conic: np.ndarray    # (2, 2) inverse of cov2d
    depth: float
    radius: float
    gaussian_id: int


@dataclass
class SplatBatch:
    """Screen-space splats for the visible subset of a scene.

    Arrays are ordered by ascending depth with gaussian id as tie-break;
    `ids` maps each row back to its scene index. `cache` carries the
    intermediates consumed by project_backward.
    """
    means2d: np.ndarray   # (M, 2)
    conics: np.ndarray    # (M, 3) packed (a, b, c) of [[a, b], [b, c]]
    depths: np.ndarray    # (M,)
    radii: np.ndarray     # (M,)
    opacities: np.ndarray  # (M,) activated
    colors: np.ndarray    # (M, 3) activated
    features: np.ndarray  # (M, C)
    ids: np.ndarray       # (M,) int32
    cache: dict

    @property
    def count(self) -> int:
        return self.means2d.shape[0]


def _project_arrays(positions, cov3d, camera: Camera, cull_offscreen=True):
    """Vectorized projection; returns per-Gaussian arrays plus a keep mask."""
    dtype = positions.dtype
    rot = camera.rotation.astype(dtype)
    q = positions @ rot.T + camera.translation.astype(dtype)  # (N, 3) camera frame
    qx, qy, qz = q[:, 0], q[:, 1], q[:, 2]
    front = qz > camera.near_clip

    # Avoid div-by-zero on culled rows; values there are discarded.
    safe_z = np.where(front, qz, 1.0)
    inv_z = 1.0 / safe_z
    mean_x = camera.fx * qx * inv_z + camera.cx
    mean_y = camera.fy * qy * inv_z + camera.cy

    # J rows: d(u,v)/d(qx,qy,qz) at the splat center.
    zeros = np.zeros_like(qx)
    j = np.stack([
        np.stack([camera.fx * inv_z, zeros, -camera.fx * qx * inv_z ** 2], axis=-1),
        np.stack([zeros, camera.fy * inv_z, -camera.fy * qy * inv_z ** 2], axis=-1),
    ], axis=-2)  # (N, 2, 3)
    p = j @ rot  # (N, 2, 3)
    cov2d = np.einsum("nij,njk,nlk->nil", p, cov3d, p)
    cov2d[:, 0, 0] += LOWPASS
    cov2d[:, 1, 1] += LOWPASS

    det = cov2d[:, 0, 0] * cov2d[:, 1, 1] - cov2d[:, 0, 1] ** 2
    bad = front & (det <= MIN_DET)
    if np.any(bad):
        raise SingularCovariance(
            f"2D covariance of gaussian {int(np.argmax(bad))} is singular")
    safe_det = np.where(front, det, 1.0)
    inv_det = 1.0 / safe_det
    conic = np.stack([cov2d[:, 1, 1] * inv_det,
                      -cov2d[:, 0, 1] * inv_det,
                      cov2d[:, 0, 0] * inv_det], axis=-1)  # (a, b, c)

    mid = 0.5 * (cov2d[:, 0, 0] + cov2d[:, 1, 1])
    lam_max = mid + np.sqrt(np.maximum(mid * mid - safe_det, 0.0))
    radius = RADIUS_SIGMAS * np.sqrt(lam_max)

    keep = front
    if cull_offscreen:
        keep = keep & (mean_x >= -radius) & (mean_x <= camera.width - 1 + radius) \
                    & (mean_y >= -radius) & (mean_y <= camera.height - 1 + radius)

    means2d = np.stack([mean_x, mean_y], axis=-1)
    cache = {"q": q, "j": j, "p": p, "keep_front": front}
    return means2d, cov2d, conic, qz, radius, keep, cache


def project_gaussian(position, cov3, camera: Camera):
    """Project one Gaussian; returns a Splat2D or None when culled."""
    position = np.asarray(position, dtype=np.float64)[None, :]
    cov3 = np.asarray(cov3, dtype=np.float64)[None, :, :]
    means2d, cov2d, conic, depth, radius, keep, _ = _project_arrays(position, cov3, camera)
    if not keep[0]:
        return None
    c = conic[0]
    return Splat2D(means2d[0], cov2d[0], np.array([[c[0], c[1]], [c[1], c[2]]]),
                   float(depth[0]), float(radius[0]), 0)


def project_scene(gaussians: GaussianSet, camera: Camera, cull_offscreen=True) -> SplatBatch:
    """Project a whole scene and depth-sort the surviving splats."""
    dtype = gaussians.dtype
    if gaussians.count == 0:
        empty = lambda *shape: np.zeros(shape, dtype=dtype)
        return SplatBatch(empty(0, 2), empty(0, 3), empty(0), empty(0), empty(0),
                          empty(0, 3), empty(0, gaussians.feature_dim),
                          np.zeros(0, dtype=np.int32), {})

    cov3d, units, rmats = covariance3d_batch(gaussians.rotations, gaussians.log_scales)
    means2d, cov2d, conic, depths, radius, keep, cache = _project_arrays(
        gaussians.positions, cov3d, camera, cull_offscreen)

    idx = np.nonzero(keep)[0]
    order = np.lexsort((idx, depths[idx]))  # depth asc, id tie-break
    sel = idx[order]

    cache.update({
        "sel": sel,
        "units": units,
        "rmats": rmats,
        "camera": camera,
        "n_total": gaussians.count,
    })
    return SplatBatch(
        np.ascontiguousarray(means2d[sel]),
        np.ascontiguousarray(conic[sel]),
        np.ascontiguousarray(depths[sel]),
        np.ascontiguousarray(radius[sel]),
        np.ascontiguousarray(sigmoid(gaussians.opacity_logits[sel])),
        np.ascontiguousarray(sigmoid(gaussians.colors[sel])),
        np.ascontiguousarray(gaussians.features[sel]),
        sel.astype(np.int32),
        cache,
    )


def project_backward(gaussians: GaussianSet, batch: SplatBatch,
                     grad_mean2d, grad_conic):
    """Chain splat-space gradients to scene spatial parameters.

    grad_mean2d (M, 2) and grad_conic (M, 3) are aligned with the sorted
    batch; returns (grad_positions, grad_rotations, grad_log_scales) over the
    full scene. The splat radius and depth only steer culling/sorting and the
    tile assignment, so no gradient flows through them.
    """
    n = gaussians.count
    dtype = gaussians.dtype
    grad_pos = np.zeros((n, 3), dtype=dtype)
    grad_rot = np.zeros((n, 4), dtype=dtype)
    grad_ls = np.zeros((n, 3), dtype=dtype)
    if batch.count == 0:
        return grad_pos, grad_rot, grad_ls

    cache = batch.cache
    sel = cache["sel"]
    camera: Camera = cache["camera"]
    q = cache["q"][sel]
    j = cache["j"][sel]
    p = cache["p"][sel]
    rot = camera.rotation.astype(dtype)
    fx, fy = dtype.type(camera.fx), dtype.type(camera.fy)

    # conic = inv(cov2d): G_M = -K G_K K with symmetric full-matrix grads.
    a, b, c = batch.conics[:, 0], batch.conics[:, 1], batch.conics[:, 2]
    k_mat = np.empty((batch.count, 2, 2), dtype=dtype)
    k_mat[:, 0, 0] = a
    k_mat[:, 0, 1] = b
    k_mat[:, 1, 0] = b
    k_mat[:, 1, 1] = c
    g_k = np.empty_like(k_mat)
    g_k[:, 0, 0] = grad_conic[:, 0]
    g_k[:, 0, 1] = 0.5 * grad_conic[:, 1]
    g_k[:, 1, 0] = 0.5 * grad_conic[:, 1]
    g_k[:, 1, 1] = grad_conic[:, 2]
    g_m = -np.einsum("nij,njk,nkl->nil", k_mat, g_k, k_mat)  # (M, 2, 2)

    # cov2d = P Sigma P^T + lowpass: gradients to Sigma and P.
    cov3d_sel = np.einsum("nij,nj,nkj->nik",
                          cache["rmats"][sel],
                          np.exp(2.0 * gaussians.log_scales[sel]),
                          cache["rmats"][sel])
    g_sigma = np.einsum("nji,njk,nkl->nil", p, g_m, p)  # P^T G_M P
    g_p = 2.0 * np.einsum("nij,njk,nkl->nil", g_m, p, cov3d_sel)
    g_j = g_p @ rot.T  # P = J W  =>  G_J = G_P W^T

    # q-gradients through the projected mean and through J itself.
    qx, qy, qz = q[:, 0], q[:, 1], q[:, 2]
    inv_z = 1.0 / qz
    inv_z2 = inv_z * inv_z
    inv_z3 = inv_z2 * inv_z
    gmx, gmy = grad_mean2d[:, 0], grad_mean2d[:, 1]
    gq = np.empty_like(q)
    gq[:, 0] = gmx * fx * inv_z + g_j[:, 0, 2] * (-fx * inv_z2)
    gq[:, 1] = gmy * fy * inv_z + g_j[:, 1, 2] * (-fy * inv_z2)
    gq[:, 2] = (-gmx * fx * qx * inv_z2 - gmy * fy * qy * inv_z2
                + g_j[:, 0, 0] * (-fx * inv_z2)
                + g_j[:, 1, 1] * (-fy * inv_z2)
                + g_j[:, 0, 2] * (2.0 * fx * qx * inv_z3)
                + g_j[:, 1, 2] * (2.0 * fy * qy * inv_z3))
    grad_pos[sel] = gq @ rot

    g_rot_sel, g_ls_sel = covariance3d_backward(
        gaussians.rotations[sel], gaussians.log_scales[sel],
        cache["units"][sel], cache["rmats"][sel], g_sigma)
    grad_rot[sel] = g_rot_sel
    grad_ls[sel] = g_ls_sel
    return grad_pos, grad_rot, grad_ls
