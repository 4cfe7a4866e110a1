"""Joint optimization of Gaussian parameters and the deformation field.

The loop follows the two-phase recipe: a static warmup that only fits the
canonical Gaussians, then joint training where every render goes through the
deformation network at a jittered time. Color is supervised with an L1 term,
features with an L2 term weighted by feature_loss_weight.
"""

from __future__ import annotations

import sys
import time as _time
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from .deformation import (ASTConfig, DeformationField, apply_deformation,
                          ast_time, deform_backward, zero_param_grads)
from .errors import ShapeMismatch
from .optim import AdamState, LrSchedule, adam_step, exp_lr
from .rasterizer import RenderOptions, SceneGrads, render, render_backward
from .scene import GaussianSet, covariance3d_batch, sigmoid

SCENE_GROUPS = ("positions", "rotations", "log_scales", "opacity_logits",
                "colors", "features")


@dataclass
class DensifyConfig:
    enabled: bool = True
    interval: int = 100
    grad_threshold: float = 2e-4      # mean screen-space |dL/d mean2d| in px
    prune_opacity: float = 0.005
    start_iteration: int = 500
    stop_iteration: Optional[int] = None  # default 0.5 * total_iterations
    percent_dense: float = 0.01       # split/clone size cut, fraction of extent
    split_factor: float = 1.6
    max_gaussians: int = 1_000_000


@dataclass
class TrainConfig:
    total_iterations: int = 40000
    warmup_iterations: int = 3000
    feature_loss_weight: float = 1.0
    field_schedule: LrSchedule = dc_field(
        default_factory=lambda: LrSchedule(8e-4, 1.6e-6, 40000))
    position_schedule: LrSchedule = dc_field(
        default_factory=lambda: LrSchedule(1.6e-4, 1.6e-6, 40000))
    lr_rotations: float = 1e-3
    lr_scales: float = 5e-3
    lr_opacities: float = 5e-2
    lr_colors: float = 2.5e-3
    lr_features: float = 2.5e-3
    ast: ASTConfig = dc_field(default_factory=ASTConfig)
    densify: DensifyConfig = dc_field(default_factory=DensifyConfig)
    background: tuple = (0.0, 0.0, 0.0)
    seed: int = 0
    snapshot_interval: int = 0        # 0 disables periodic snapshots
    log_interval: int = 100

    def __post_init__(self):
        if self.warmup_iterations >= self.total_iterations:
            raise ValueError("warmup must be shorter than total iterations")
        if self.feature_loss_weight < 0:
            raise ValueError("feature_loss_weight must be >= 0")

    @classmethod
    def for_iterations(cls, total, warmup, **kw) -> "TrainConfig":
        """Config with the LR schedules stretched over `total` steps."""
        return cls(total_iterations=total, warmup_iterations=warmup,
                   field_schedule=LrSchedule(8e-4, 1.6e-6, total),
                   position_schedule=LrSchedule(1.6e-4, 1.6e-6, total), **kw)


@dataclass
class TrainReport:
    color_loss: list = dc_field(default_factory=list)
    feature_loss: list = dc_field(default_factory=list)
    total_loss: list = dc_field(default_factory=list)
    gaussian_counts: list = dc_field(default_factory=list)
    warmup_seconds: float = 0.0
    dynamic_seconds: float = 0.0

    def to_dict(self) -> dict:
        return {
            "color_loss": [float(v) for v in self.color_loss],
            "feature_loss": [float(v) for v in self.feature_loss],
            "total_loss": [float(v) for v in self.total_loss],
            "gaussian_counts": [int(v) for v in self.gaussian_counts],
            "warmup_seconds": self.warmup_seconds,
            "dynamic_seconds": self.dynamic_seconds,
        }


def reconstruction_loss(render_out, gt_image, gt_featuremap, feature_weight):
    """L1 color + weighted L2 feature loss, with the per-pixel gradients that
    feed render_backward.

    Returns (total, color_term, feature_term, grad_color, grad_feature).
    gt_featuremap may be None (or the weight zero) to skip the feature term.
    """
    color = render_out.color
    if gt_image.shape != color.shape:
        raise ShapeMismatch(f"gt image {gt_image.shape} vs render {color.shape}")
    diff = color - gt_image
    color_term = float(np.abs(diff).mean())
    grad_color = np.sign(diff) / diff.size

    feature = render_out.feature
    if feature_weight > 0 and gt_featuremap is not None:
        if gt_featuremap.shape != feature.shape:
            raise ShapeMismatch(
                f"gt features {gt_featuremap.shape} vs render {feature.shape}")
        fdiff = feature - gt_featuremap
        feature_term = float(np.square(fdiff).mean())
        grad_feature = (2.0 * feature_weight / fdiff.size) * fdiff
    else:
        feature_term = 0.0
        grad_feature = np.zeros_like(feature)
    total = color_term + feature_weight * feature_term
    return total, color_term, feature_term, grad_color.astype(color.dtype), grad_feature.astype(feature.dtype)


@dataclass
class DensifyStats:
    grad_accum: np.ndarray  # (N,) summed screen-space gradient norms
    seen: np.ndarray        # (N,) visibility counts

    @classmethod
    def zeros(cls, n) -> "DensifyStats":
        return cls(np.zeros(n), np.zeros(n, dtype=np.int64))

    def update(self, grads: SceneGrads):
        norms = np.linalg.norm(grads.mean2d, axis=1)
        self.grad_accum += np.where(grads.visible, norms, 0.0)
        self.seen += grads.visible


def densify_and_prune(gaussians: GaussianSet, stats: DensifyStats,
                      cfg: DensifyConfig, extent: float,
                      rng: np.random.Generator):
    """Adaptive density control.

    High-gradient Gaussians are cloned when small (a copy offset by a sample
    from the Gaussian itself) and split into two children with scales divided
    by split_factor when large; Gaussians whose activated opacity falls below
    prune_opacity are removed. Children copy color and feature vectors.
    Returns (new scene, keep mask over old rows, number of appended rows).
    """
    n = gaussians.count
    avg = stats.grad_accum / np.maximum(stats.seen, 1)
    high = (avg > cfg.grad_threshold) & (stats.seen > 0)
    if n >= cfg.max_gaussians:
        high[:] = False
    sizes = gaussians.scales().max(axis=1)
    size_cut = cfg.percent_dense * extent
    clone_ids = np.nonzero(high & (sizes <= size_cut))[0]
    split_ids = np.nonzero(high & (sizes > size_cut))[0]

    keep = sigmoid(gaussians.opacity_logits) >= cfg.prune_opacity
    keep[split_ids] = False  # parents replaced by their children

    def sample_inside(ids, count_per):
        """Offsets drawn from each Gaussian's own covariance."""
        if len(ids) == 0:
            return np.zeros((0, 3), dtype=gaussians.dtype)
        _, _, rmats = covariance3d_batch(gaussians.rotations[ids],
                                         gaussians.log_scales[ids])
        scales = gaussians.scales()[ids]
        z = rng.standard_normal((len(ids), count_per, 3))
        offsets = np.einsum("nij,nkj->nki", rmats, z * scales[:, None, :])
        return offsets.astype(gaussians.dtype)

    new_parts = []
    clone_off = sample_inside(clone_ids, 1)
    for j, gid in enumerate(clone_ids):
        row = gaussians.subset([gid])
        row.positions += clone_off[j]
        new_parts.append(row)
    split_off = sample_inside(split_ids, 2)
    for j, gid in enumerate(split_ids):
        for k in range(2):
            row = gaussians.subset([gid])
            row.positions += split_off[j, k]
            row.log_scales -= np.log(cfg.split_factor).astype(row.dtype)
            new_parts.append(row)

    survivors = gaussians.subset(np.nonzero(keep)[0])
    parts = [survivors] + new_parts
    merged = GaussianSet(
        np.concatenate([p.positions for p in parts]),
        np.concatenate([p.rotations for p in parts]),
        np.concatenate([p.log_scales for p in parts]),
        np.concatenate([p.opacity_logits for p in parts]),
        np.concatenate([p.colors for p in parts]),
        np.concatenate([p.features for p in parts]),
    )
    n_new = merged.count - int(keep.sum())
    return merged, keep, n_new


def scene_extent(gaussians: GaussianSet) -> float:
    if gaussians.count == 0:
        return 1.0
    span = gaussians.positions.max(axis=0) - gaussians.positions.min(axis=0)
    return float(max(np.linalg.norm(span), 1e-6))


def _scene_lrs(cfg: TrainConfig, iteration: int):
    return [exp_lr(cfg.position_schedule, iteration), cfg.lr_rotations,
            cfg.lr_scales, cfg.lr_opacities, cfg.lr_colors, cfg.lr_features]


def train_step(gaussians: GaussianSet, field: DeformationField, frames,
               scene_state: AdamState, field_state: AdamState,
               iteration: int, cfg: TrainConfig, rng: np.random.Generator,
               stats: Optional[DensifyStats] = None):
    """One optimization step on a uniformly sampled frame.

    During warmup the canonical scene renders directly and only Gaussian
    parameters update; afterwards the deformation field is applied at the
    jittered frame time and both parameter sets step.
    Returns (total, color_term, feature_term).
    """
    frame = frames[int(rng.integers(len(frames)))]
    opts = RenderOptions(background=cfg.background)
    warm = iteration < cfg.warmup_iterations

    if warm:
        out = render(gaussians, frame.camera, opts)
    else:
        t = ast_time(frame.time, iteration, cfg.ast, rng)
        deformed, cache = apply_deformation(gaussians, field, t)
        out = render(deformed, frame.camera, opts)

    total, c_term, f_term, g_color, g_feature = reconstruction_loss(
        out, frame.image, frame.featuremap, cfg.feature_loss_weight)

    target = gaussians if warm else deformed
    grads = render_backward(target, frame.camera, g_color, g_feature, forward=out)
    if stats is not None:
        stats.update(grads)

    if warm:
        scene_grads = grads.param_list()
    else:
        field_grads, g_enc_pos = deform_backward(
            field, cache, grads.positions, grads.rotations, grads.log_scales)
        scene_grads = [grads.positions + g_enc_pos.astype(gaussians.dtype),
                       grads.rotations, grads.log_scales,
                       grads.opacity_logits, grads.colors, grads.features]
        adam_step(field_state, field.parameters(), field_grads,
                  exp_lr(cfg.field_schedule, iteration))

    adam_step(scene_state, list(gaussians.param_dict().values()), scene_grads,
              _scene_lrs(cfg, iteration))
    return total, c_term, f_term


def train(gaussians: GaussianSet, field: DeformationField, frames,
          cfg: TrainConfig,
          snapshot_fn: Optional[Callable] = None,
          log_stream=None) -> TrainReport:
    """Full training loop; mutates the scene and field in place.

    snapshot_fn(gaussians, field, iteration) runs at snapshot_interval steps
    and once at the end. Progress lines go to log_stream (default stdout).
    """
    log_stream = log_stream or sys.stdout
    rng = np.random.default_rng(cfg.seed)
    scene_state = AdamState.for_params(list(gaussians.param_dict().values()))
    field_state = AdamState.for_params(field.parameters())
    stats = DensifyStats.zeros(gaussians.count)
    extent = scene_extent(gaussians)
    report = TrainReport()
    densify_stop = (cfg.densify.stop_iteration
                    if cfg.densify.stop_iteration is not None
                    else cfg.total_iterations // 2)

    t_start = _time.perf_counter()
    t_warm_end = t_start
    for it in range(cfg.total_iterations):
        total, c_term, f_term = train_step(
            gaussians, field, frames, scene_state, field_state, it, cfg, rng, stats)
        report.color_loss.append(c_term)
        report.feature_loss.append(f_term)
        report.total_loss.append(total)
        report.gaussian_counts.append(gaussians.count)

        if (cfg.densify.enabled and it >= cfg.densify.start_iteration
                and it < densify_stop and cfg.densify.interval > 0
                and (it + 1) % cfg.densify.interval == 0):
            new_scene, keep, n_new = densify_and_prune(
                gaussians, stats, cfg.densify, extent, rng)
            _replace_scene(gaussians, new_scene)
            scene_state.select_rows(keep, n_new)
            stats = DensifyStats.zeros(gaussians.count)

        if it + 1 == cfg.warmup_iterations:
            t_warm_end = _time.perf_counter()
        if cfg.log_interval and (it % cfg.log_interval == 0 or it + 1 == cfg.total_iterations):
            lr_now = exp_lr(cfg.field_schedule, it)
            print(f"iter {it:6d}  loss {total:.6f}  color {c_term:.6f}  "
                  f"feature {f_term:.6f}  n {gaussians.count}  lr_field {lr_now:.3e}",
                  file=log_stream)
        if snapshot_fn and cfg.snapshot_interval and (it + 1) % cfg.snapshot_interval == 0:
            snapshot_fn(gaussians, field, it + 1)

    t_end = _time.perf_counter()
    report.warmup_seconds = t_warm_end - t_start
    report.dynamic_seconds = t_end - t_warm_end
    if snapshot_fn:
        snapshot_fn(gaussians, field, cfg.total_iterations)
    return report


def _replace_scene(target: GaussianSet, source: GaussianSet):
    """Swap array contents of one scene for another in place."""
    target.positions = source.positions
    target.rotations = source.rotations
    target.log_scales = source.log_scales
    target.opacity_logits = source.opacity_logits
    target.colors = source.colors
    target.features = source.features


# ---------------------------------------------------------------------------
# gradient checking

@dataclass
class GradcheckReport:
    group_errors: dict
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(v <= self.tolerance for v in self.group_errors.values())

    def lines(self):
        for name, err in self.group_errors.items():
            flag = "ok" if err <= self.tolerance else "FAIL"
            yield f"{name:20s} max_rel {err:.3e}  [{flag}]"


def _loss_value(gaussians, field, frame, feature_weight, t, background):
    opts = RenderOptions(background=background)
    if t is None:
        out = render(gaussians, frame.camera, opts)
    else:
        deformed, _ = apply_deformation(gaussians, field, t)
        out = render(deformed, frame.camera, opts)
    total, _, _, _, _ = reconstruction_loss(out, frame.image, frame.featuremap,
                                            feature_weight)
    return total


def analytic_gradients(gaussians, field, frame, feature_weight, t, background):
    """Full-loss gradients for every scene group and (when t is given) every
    deformation parameter. Returns (dict name -> array, list for the field)."""
    opts = RenderOptions(background=background)
    if t is None:
        out = render(gaussians, frame.camera, opts)
        _, _, _, g_color, g_feature = reconstruction_loss(
            out, frame.image, frame.featuremap, feature_weight)
        grads = render_backward(gaussians, frame.camera, g_color, g_feature, forward=out)
        scene_grads = dict(zip(SCENE_GROUPS, grads.param_list()))
        return scene_grads, zero_param_grads(field) if field is not None else []
    deformed, cache = apply_deformation(gaussians, field, t)
    out = render(deformed, frame.camera, opts)
    _, _, _, g_color, g_feature = reconstruction_loss(
        out, frame.image, frame.featuremap, feature_weight)
    grads = render_backward(deformed, frame.camera, g_color, g_feature, forward=out)
    field_grads, g_enc = deform_backward(field, cache, grads.positions,
                                         grads.rotations, grads.log_scales)
    scene_grads = dict(zip(SCENE_GROUPS, [
        grads.positions + g_enc.astype(gaussians.dtype), grads.rotations,
        grads.log_scales, grads.opacity_logits, grads.colors, grads.features]))
    return scene_grads, field_grads


def _max_rel_error(analytic: np.ndarray, fd: np.ndarray) -> float:
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(fd).max(initial=0.0), 1e-12)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), 0.01 * scale)
    return float((np.abs(analytic - fd) / denom).max(initial=0.0))


def gradcheck(gaussians: GaussianSet, field: Optional[DeformationField], frame,
              feature_weight=1.0, t: Optional[float] = None, h=1e-6,
              tolerance=1e-5, background=(0.0, 0.0, 0.0),
              analytic_fn=analytic_gradients) -> GradcheckReport:
    """Compare every analytic parameter gradient of the reconstruction loss
    against central finite differences; never raises, only reports.

    Pass t=None for the static (canonical) path. Scenes should be float64;
    the default step and tolerance assume it.
    """
    scene_grads, field_grads = analytic_fn(gaussians, field, frame,
                                           feature_weight, t, background)

    def fd_of(arr):
        fd = np.zeros_like(arr)
        flat = arr.reshape(-1)
        out = fd.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = _loss_value(gaussians, field, frame, feature_weight, t, background)
            flat[i] = orig - h
            lm = _loss_value(gaussians, field, frame, feature_weight, t, background)
            flat[i] = orig
            out[i] = (lp - lm) / (2.0 * h)
        return fd

    errors = {}
    for name in SCENE_GROUPS:
        errors[name] = _max_rel_error(scene_grads[name],
                                      fd_of(getattr(gaussians, name)))
    if field is not None and t is not None:
        fd_field = [fd_of(p) for p in field.parameters()]
        errors["mlp"] = max(
            (_max_rel_error(a, f) for a, f in zip(field_grads, fd_field)
             if a.size), default=0.0)
    return GradcheckReport(errors, tolerance)
