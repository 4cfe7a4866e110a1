"""Semantic selection and segmentation over a trained scene.

Selection always resolves to a query vector in feature space and a cosine
threshold theta; the returned id set lives in canonical space, so re-posing
the selected subset with the deformation field tracks it through time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .camera import Camera
from .deformation import DeformationField, apply_deformation
from .errors import (DimensionMismatch, EmptyPixel, PixelOutOfBounds,
                     ShapeMismatch, ZeroQuery)
from .projection import project_scene
from .rasterizer import RenderOptions, _pixel_walk, contribution_weights, render
from .scene import GaussianSet

DEFAULT_THETA = 0.7
DEFAULT_MASK_ALPHA = 0.5
ZERO_NORM = 1e-12


@dataclass
class SelectionQuery:
    """One of three ways to pick Gaussians, plus the granularity threshold."""
    theta: float = DEFAULT_THETA
    embedding: Optional[np.ndarray] = None
    click: Optional[tuple] = None        # (camera, t, (px, py))
    pixel_set: Optional[tuple] = None    # (camera, t, [(px, py), ...], weight_threshold)

    def __post_init__(self):
        modes = sum(x is not None for x in (self.embedding, self.click, self.pixel_set))
        if modes != 1:
            raise ValueError(f"exactly one query mode required, got {modes}")
        if not -1.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [-1, 1], got {self.theta}")


@dataclass
class SelectionResult:
    gaussian_ids: np.ndarray     # sorted int64 ids
    query_feature: Optional[np.ndarray]  # vector actually compared against
    scores: np.ndarray           # cosine (or weight) per retained id

    @property
    def count(self) -> int:
        return self.gaussian_ids.shape[0]


def _cosine_scores(features: np.ndarray, q: np.ndarray):
    """Cosines against q; rows with (near-)zero feature norm score -inf."""
    qn = np.linalg.norm(q)
    if qn <= ZERO_NORM:
        raise ZeroQuery("query vector has zero norm")
    norms = np.linalg.norm(features, axis=1)
    safe = np.maximum(norms, ZERO_NORM)
    cos = (features @ q) / (safe * qn)
    return np.where(norms <= ZERO_NORM, -np.inf, cos)


def select_by_embedding(gaussians: GaussianSet, q: np.ndarray,
                        theta: float = DEFAULT_THETA) -> SelectionResult:
    """Ids of Gaussians whose feature cosine against q reaches theta."""
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    if q.shape[0] != gaussians.feature_dim:
        raise DimensionMismatch(
            f"query dim {q.shape[0]} != scene feature dim {gaussians.feature_dim}")
    cos = _cosine_scores(gaussians.features.astype(np.float64), q)
    ids = np.nonzero(cos >= theta)[0].astype(np.int64)
    return SelectionResult(ids, q, cos[ids])


def select_by_click(gaussians: GaussianSet, field: Optional[DeformationField],
                    camera: Camera, t: float, pixel,
                    theta: float = DEFAULT_THETA) -> SelectionResult:
    """Resolve a pixel to its strongest contributing Gaussian at time t and
    select by similarity to that Gaussian's canonical feature.

    Raises EmptyPixel when nothing contributes at least 1/255 there.
    """
    posed = _deformed(gaussians, field, t)
    weights = contribution_weights(posed, camera, pixel)
    if not weights:
        raise EmptyPixel(f"no contribution at pixel {tuple(pixel)}")
    top_id = weights[0][0]
    return select_by_embedding(gaussians, gaussians.features[top_id], theta)


def select_by_pixels(gaussians: GaussianSet, field: Optional[DeformationField],
                     camera: Camera, t: float, pixels,
                     weight_threshold: float) -> SelectionResult:
    """Union of Gaussians whose compositing weight reaches weight_threshold
    at any of the given pixels, under deformation at time t."""
    if not len(pixels):
        raise ValueError("pixel list must be nonempty")
    posed = _deformed(gaussians, field, t)
    batch = project_scene(posed, camera)
    best = {}
    for pixel in pixels:
        px, py = float(pixel[0]), float(pixel[1])
        if not (0 <= px <= camera.width - 1 and 0 <= py <= camera.height - 1):
            raise PixelOutOfBounds(f"pixel {tuple(pixel)} outside image")
        ids, weights = _pixel_walk(batch, px, py)
        for gid, w in zip(ids, weights):
            if w >= weight_threshold:
                gid = int(gid)
                best[gid] = max(best.get(gid, 0.0), float(w))
    ids = np.array(sorted(best), dtype=np.int64)
    scores = np.array([best[i] for i in ids], dtype=np.float64)
    return SelectionResult(ids, None, scores)


def select(gaussians: GaussianSet, field: Optional[DeformationField],
           query: SelectionQuery) -> SelectionResult:
    if query.embedding is not None:
        return select_by_embedding(gaussians, query.embedding, query.theta)
    if query.click is not None:
        camera, t, pixel = query.click
        return select_by_click(gaussians, field, camera, t, pixel, query.theta)
    camera, t, pixels, wt = query.pixel_set
    return select_by_pixels(gaussians, field, camera, t, pixels, wt)


def _deformed(gaussians, field, t):
    if field is None or t is None:
        return gaussians
    posed, _ = apply_deformation(gaussians, field, t)
    return posed


def render_segmentation_mask(gaussians: GaussianSet,
                             field: Optional[DeformationField],
                             selection: SelectionResult, camera: Camera,
                             t: Optional[float],
                             mask_alpha_threshold: float = DEFAULT_MASK_ALPHA) -> np.ndarray:
    """Binary (H, W) mask: accumulated alpha of the selected subset, deformed
    to time t, thresholded at mask_alpha_threshold."""
    subset = gaussians.subset(selection.gaussian_ids)
    posed = _deformed(subset, field, t)
    out = render(posed, camera, RenderOptions())
    return out.alpha >= mask_alpha_threshold


def miou(pred_masks, gt_masks) -> float:
    """Mean IoU over paired binary masks; an empty union counts as 1."""
    if len(pred_masks) != len(gt_masks):
        raise ShapeMismatch(f"{len(pred_masks)} predictions vs {len(gt_masks)} truths")
    scores = []
    for pred, gt in zip(pred_masks, gt_masks):
        pred = np.asarray(pred, dtype=bool)
        gt = np.asarray(gt, dtype=bool)
        if pred.shape != gt.shape:
            raise ShapeMismatch(f"mask shapes {pred.shape} vs {gt.shape}")
        union = np.logical_or(pred, gt).sum()
        if union == 0:
            scores.append(1.0)
        else:
            scores.append(np.logical_and(pred, gt).sum() / union)
    return float(np.mean(scores))
