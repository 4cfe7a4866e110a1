"""Differentiable rendering of Gaussian scenes.

`render` is the production path: global depth sort, 16x16 tile binning, then
front-to-back compositing per pixel. `render_brute_force` is the reference
oracle: identical compositing rules, no tiling, every depth-sorted splat
visited at every pixel. `render_backward` is the hand-derived reverse pass
feeding parameter gradients to the optimizer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from ._kernels import ALPHA_CLAMP, CUTOFF_MSQ, EARLY_TERM_T, SKIP_ALPHA
from .camera import Camera
from .errors import PixelOutOfBounds, ShapeMismatch
from .projection import SplatBatch, project_backward, project_scene
from .scene import GaussianSet

TILE_SIZE = 16


@dataclass
class RenderOptions:
    background: tuple = (0.0, 0.0, 0.0)
    tile_size: int = TILE_SIZE
    record_contributions: bool = False
    top_k: int = 8


@dataclass
class RenderOutput:
    color: np.ndarray    # (H, W, 3)
    feature: np.ndarray  # (H, W, C)
    alpha: np.ndarray    # (H, W)
    contributions: Optional[list] = None  # per-pixel [(gaussian_id, weight)], row-major
    batch: Optional[SplatBatch] = field(default=None, repr=False)
    options: Optional[RenderOptions] = field(default=None, repr=False)


@dataclass
class SceneGrads:
    """dLoss/dParameter for every Gaussian array, plus the screen-space mean
    gradient used by density control."""
    positions: np.ndarray
    rotations: np.ndarray
    log_scales: np.ndarray
    opacity_logits: np.ndarray
    colors: np.ndarray
    features: np.ndarray
    mean2d: np.ndarray  # (N, 2) gradient w.r.t. projected pixel coordinates
    visible: np.ndarray  # (N,) bool, splat survived culling

    def param_list(self):
        return [self.positions, self.rotations, self.log_scales,
                self.opacity_logits, self.colors, self.features]


def _alloc_outputs(camera: Camera, feature_dim: int, dtype):
    h, w = camera.height, camera.width
    return (np.zeros((h, w, 3), dtype=dtype),
            np.zeros((h, w, feature_dim), dtype=dtype),
            np.zeros((h, w), dtype=dtype))


def _background(options: RenderOptions, dtype):
    bg = np.asarray(options.background, dtype=dtype)
    if bg.shape != (3,):
        raise ShapeMismatch(f"background must be length 3, got {bg.shape}")
    return bg


def render(gaussians: GaussianSet, camera: Camera,
           options: Optional[RenderOptions] = None) -> RenderOutput:
    """Tiled forward render of color, feature, and accumulated alpha."""
    options = options or RenderOptions()
    dtype = gaussians.dtype
    color, feat, alpha = _alloc_outputs(camera, gaussians.feature_dim, dtype)
    bg = _background(options, dtype)
    batch = project_scene(gaussians, camera)
    if batch.count:
        tile = options.tile_size
        tiles_x = (camera.width + tile - 1) // tile
        tiles_y = (camera.height + tile - 1) // tile
        starts, order = _kernels.bin_splats(batch.means2d, batch.radii,
                                            camera.width, camera.height,
                                            tile, tiles_x, tiles_y)
        batch.cache["tiles"] = (starts, order, tile, tiles_x, tiles_y)
        _kernels.forward_tiles(batch.means2d, batch.conics, batch.opacities,
                               batch.colors, batch.features, starts, order,
                               camera.width, camera.height, tile, tiles_x, tiles_y,
                               bg, color, feat, alpha)
    else:
        color += bg
    out = RenderOutput(color, feat, alpha, None, batch, options)
    if options.record_contributions:
        out.contributions = _record_contributions(batch, camera, options.top_k)
    return out


def render_brute_force(gaussians: GaussianSet, camera: Camera,
                       options: Optional[RenderOptions] = None) -> RenderOutput:
    """Oracle render: per-pixel loop over all depth-sorted splats."""
    options = options or RenderOptions()
    dtype = gaussians.dtype
    color, feat, alpha = _alloc_outputs(camera, gaussians.feature_dim, dtype)
    bg = _background(options, dtype)
    batch = project_scene(gaussians, camera, cull_offscreen=False)
    if batch.count:
        _kernels.forward_brute(batch.means2d, batch.conics, batch.opacities,
                               batch.colors, batch.features,
                               camera.width, camera.height, bg, color, feat, alpha)
    else:
        color += bg
    return RenderOutput(color, feat, alpha, None, batch, options)


def render_backward(gaussians: GaussianSet, camera: Camera,
                    grad_color: np.ndarray, grad_feature: np.ndarray,
                    grad_alpha: Optional[np.ndarray] = None,
                    forward: Optional[RenderOutput] = None) -> SceneGrads:
    """Backpropagate per-pixel output gradients to all Gaussian parameters.

    grad_color (H, W, 3), grad_feature (H, W, C), grad_alpha (H, W) are the
    loss gradients w.r.t. the render outputs. When `forward` (a RenderOutput
    from `render` on the same scene/camera) is passed, its projection and
    tile structure are reused; otherwise they are recomputed.
    """
    h, w = camera.height, camera.width
    cdim = gaussians.feature_dim
    if grad_color.shape != (h, w, 3):
        raise ShapeMismatch(f"grad_color shape {grad_color.shape} != {(h, w, 3)}")
    if grad_feature.shape != (h, w, cdim):
        raise ShapeMismatch(f"grad_feature shape {grad_feature.shape} != {(h, w, cdim)}")
    if grad_alpha is None:
        grad_alpha = np.zeros((h, w), dtype=gaussians.dtype)
    elif grad_alpha.shape != (h, w):
        raise ShapeMismatch(f"grad_alpha shape {grad_alpha.shape} != {(h, w)}")

    options = forward.options if forward is not None else RenderOptions()
    if forward is not None and forward.batch is not None and "tiles" in forward.batch.cache:
        batch = forward.batch
        starts, order, tile, tiles_x, tiles_y = batch.cache["tiles"]
    else:
        batch = project_scene(gaussians, camera)
        tile = options.tile_size
        tiles_x = (w + tile - 1) // tile
        tiles_y = (h + tile - 1) // tile
        starts, order = _kernels.bin_splats(batch.means2d, batch.radii, w, h,
                                            tile, tiles_x, tiles_y)

    n = gaussians.count
    dtype = gaussians.dtype
    grads = SceneGrads(
        positions=np.zeros((n, 3), dtype=dtype),
        rotations=np.zeros((n, 4), dtype=dtype),
        log_scales=np.zeros((n, 3), dtype=dtype),
        opacity_logits=np.zeros(n, dtype=dtype),
        colors=np.zeros((n, 3), dtype=dtype),
        features=np.zeros((n, cdim), dtype=dtype),
        mean2d=np.zeros((n, 2), dtype=dtype),
        visible=np.zeros(n, dtype=bool),
    )
    if batch.count == 0:
        return grads

    m = batch.count
    d_mean = np.zeros((m, 2), dtype=dtype)
    d_conic = np.zeros((m, 3), dtype=dtype)
    d_opac = np.zeros(m, dtype=dtype)
    d_color = np.zeros((m, 3), dtype=dtype)
    d_feat = np.zeros((m, cdim), dtype=dtype)
    bg = _background(options, dtype)
    _kernels.backward_tiles(batch.means2d, batch.conics, batch.opacities,
                            batch.colors, batch.features, starts, order,
                            w, h, tile, tiles_x, tiles_y, bg,
                            np.ascontiguousarray(grad_color, dtype=dtype),
                            np.ascontiguousarray(grad_feature, dtype=dtype),
                            np.ascontiguousarray(grad_alpha, dtype=dtype),
                            d_mean, d_conic, d_opac, d_color, d_feat)

    g_pos, g_rot, g_ls = project_backward(gaussians, batch, d_mean, d_conic)
    grads.positions[:] = g_pos
    grads.rotations[:] = g_rot
    grads.log_scales[:] = g_ls
    sel = batch.ids
    # Activation chain rules: opacity and color are sigmoid-stored.
    grads.opacity_logits[sel] = d_opac * batch.opacities * (1.0 - batch.opacities)
    grads.colors[sel] = d_color * batch.colors * (1.0 - batch.colors)
    grads.features[sel] = d_feat
    grads.mean2d[sel] = d_mean
    grads.visible[sel] = True
    return grads


def _pixel_walk(batch: SplatBatch, px: float, py: float):
    """Compositing walk at one pixel; returns (ids, weights) in splat order.

    Pure-numpy restatement of the kernel rules, used for contribution
    queries and as a cross-check against the compiled paths.
    """
    if batch.count == 0:
        return np.zeros(0, dtype=np.int32), np.zeros(0)
    d = np.array([px, py]) - batch.means2d
    msq = (batch.conics[:, 0] * d[:, 0] ** 2
           + 2.0 * batch.conics[:, 1] * d[:, 0] * d[:, 1]
           + batch.conics[:, 2] * d[:, 1] ** 2)
    alpha = np.minimum(batch.opacities * np.exp(-0.5 * msq), ALPHA_CLAMP)
    live = (msq <= CUTOFF_MSQ) & (alpha >= SKIP_ALPHA)
    alpha = np.where(live, alpha, 0.0)
    trans = np.concatenate([[1.0], np.cumprod(1.0 - alpha)[:-1]])
    # Once transmittance drops below the termination threshold nothing later
    # contributes; mirror the kernels' stop-after-update rule.
    dead = trans < EARLY_TERM_T
    weights = np.where(dead, 0.0, trans * alpha)
    keep = live & ~dead
    return batch.ids[keep], weights[keep]


def contribution_weights(gaussians: GaussianSet, camera: Camera, pixel,
                         batch: Optional[SplatBatch] = None):
    """Descending-weight list of (gaussian_id, T_i * alpha_i) at a pixel.

    Only Gaussians whose weight is at least 1/255 are reported. Raises
    PixelOutOfBounds for coordinates outside the image.
    """
    px, py = float(pixel[0]), float(pixel[1])
    if not (0 <= px <= camera.width - 1 and 0 <= py <= camera.height - 1):
        raise PixelOutOfBounds(f"pixel {pixel} outside {camera.width}x{camera.height}")
    if batch is None:
        batch = project_scene(gaussians, camera)
    ids, weights = _pixel_walk(batch, px, py)
    mask = weights >= SKIP_ALPHA
    ids, weights = ids[mask], weights[mask]
    order = np.lexsort((ids, -weights))
    return [(int(ids[i]), float(weights[i])) for i in order]


def _record_contributions(batch: SplatBatch, camera: Camera, top_k: int):
    """Top-K (id, weight) per pixel, row-major; intended for small images."""
    out = []
    for py in range(camera.height):
        for px in range(camera.width):
            ids, weights = _pixel_walk(batch, px, py)
            order = np.lexsort((ids, -weights))[:top_k]
            out.append([(int(ids[i]), float(weights[i])) for i in order])
    return out
