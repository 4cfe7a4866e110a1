"""Pinhole camera model and orbit pose construction.

Pixel (col, row) = (px, py) has image-plane coordinates exactly (px, py);
a camera-frame point q projects to u = fx * qx / qz + cx, v = fy * qy / qz + cy
with +z forward and +y down in the camera frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray      # (3, 3) world-to-camera rotation
    translation: np.ndarray   # (3,)  world-to-camera translation
    near_clip: float = 0.01

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.translation = np.asarray(self.translation, dtype=np.float64)
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be at least 1x1")
        if self.near_clip <= 0:
            raise ValueError("near_clip must be positive")
        if self.rotation.shape != (3, 3) or self.translation.shape != (3,):
            raise ValueError("pose must be a 3x3 rotation and 3-vector translation")
        rtr = self.rotation @ self.rotation.T
        if not np.allclose(rtr, np.eye(3), atol=1e-6) or np.linalg.det(self.rotation) < 0:
            raise ValueError("rotation must be orthonormal with det +1")

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        """Transform (N, 3) world points into the camera frame."""
        return points @ self.rotation.T + self.translation

    def resized(self, width: int, height: int) -> "Camera":
        """Same view, different resolution (intrinsics scale with the image)."""
        sx = width / self.width
        sy = height / self.height
        return Camera(self.fx * sx, self.fy * sy, self.cx * sx, self.cy * sy,
                      width, height, self.rotation.copy(), self.translation.copy(),
                      self.near_clip)


def look_at(eye, target, width, height, fov_deg=50.0, near_clip=0.01,
            world_up=(0.0, 0.0, 1.0)) -> Camera:
    """Camera at `eye` looking at `target`, +y image axis pointing world-down."""
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    forward = target - eye
    norm = np.linalg.norm(forward)
    if norm < 1e-12:
        raise ValueError("eye and target coincide")
    forward = forward / norm
    up = np.asarray(world_up, dtype=np.float64)
    right = np.cross(forward, up)
    rn = np.linalg.norm(right)
    if rn < 1e-9:
        raise ValueError("viewing direction parallel to world up")
    right = right / rn
    down = np.cross(forward, right)
    rot = np.stack([right, down, forward])  # rows: camera x, y, z in world
    trans = -rot @ eye
    f = 0.5 * width / np.tan(np.deg2rad(fov_deg) * 0.5)
    return Camera(f, f, (width - 1) / 2.0, (height - 1) / 2.0,
                  width, height, rot, trans, near_clip)


def orbit_camera(azimuth_deg, elevation_deg, radius, target=(0.0, 0.0, 0.0),
                 width=512, height=512, fov_deg=50.0, near_clip=0.01) -> Camera:
    """Orbit pose: eye on a sphere around target, looking inward."""
    az = np.deg2rad(azimuth_deg)
    el = np.deg2rad(elevation_deg)
    target = np.asarray(target, dtype=np.float64)
    offset = radius * np.array([np.cos(el) * np.cos(az),
                                np.cos(el) * np.sin(az),
                                np.sin(el)])
    return look_at(target + offset, target, width, height, fov_deg, near_clip)
