"""Visualization helpers for rendered channels."""

from __future__ import annotations

import numpy as np


def feature_pca_rgb(feature_image: np.ndarray) -> np.ndarray:
    """Map an (H, W, C) feature image to RGB via its top-3 principal
    components, fit over this image's pixels alone.

    Component signs are fixed by making each component's largest-magnitude
    loading positive, so the mapping is deterministic; channels are min-max
    normalized to [0, 1].
    """
    h, w, c = feature_image.shape
    flat = feature_image.reshape(-1, c).astype(np.float64)
    centered = flat - flat.mean(axis=0, keepdims=True)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[:3]
    for i in range(comps.shape[0]):
        j = np.argmax(np.abs(comps[i]))
        if comps[i, j] < 0:
            comps[i] = -comps[i]
    proj = centered @ comps.T  # (HW, <=3)
    if proj.shape[1] < 3:
        proj = np.pad(proj, ((0, 0), (0, 3 - proj.shape[1])))
    lo = proj.min(axis=0, keepdims=True)
    hi = proj.max(axis=0, keepdims=True)
    rgb = (proj - lo) / np.maximum(hi - lo, 1e-12)
    return rgb.reshape(h, w, 3)


def alpha_gray(alpha_image: np.ndarray) -> np.ndarray:
    """Accumulated alpha as a grayscale RGB image."""
    g = np.clip(alpha_image, 0.0, 1.0)
    return np.repeat(g[:, :, None], 3, axis=2)


def psnr(pred: np.ndarray, gt: np.ndarray) -> float:
    """Peak signal-to-noise ratio for images in [0, 1]."""
    mse = float(np.mean((np.asarray(pred, dtype=np.float64) - gt) ** 2))
    if mse == 0:
        return float("inf")
    return 10.0 * np.log10(1.0 / mse)
