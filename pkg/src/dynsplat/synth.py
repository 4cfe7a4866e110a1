"""Synthetic dataset generator with exact ground truth.

The "two-blob" preset builds two shell-sampled clusters of Gaussians with
distinct colors and orthogonal feature-cluster means, stacked vertically so
no orbit azimuth superposes them on screen. The upper cluster translates
linearly along a known vertical path over t in [0, 1] (canonical mid-path);
the lower one stays put. A monocular orbit with elevation wobble renders the
training video and feature maps, the motion holding still for the first and
last few frames so both time endpoints are observed from a wide baseline.
The generator also writes an SfM-style noisy init point cloud, held-out
evaluation views, and analytic per-cluster masks; cluster membership, the
motion path, and every mask derive from the true parameters, making the
generator itself the oracle for the end-to-end tests.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .camera import Camera, orbit_camera
from .io_formats import (camera_record, save_image, write_feature_map,
                         write_manifest, write_mask, write_pointcloud)
from .rasterizer import RenderOptions, render
from .scene import GaussianSet, logit

TWO_BLOB = {
    "n_per_cluster": 256,
    "image_size": 128,
    "n_frames": 24,
    "feature_dim": 8,
    "cluster_centers": ((0.0, 0.0, 0.5), (0.0, 0.0, -0.5)),
    "shell_radius": 0.18,
    "shell_noise": 0.015,
    "delta": (0.0, 0.0, 0.4),      # moving-cluster translation over t 0 -> 1
    "time_hold_frames": 4,         # motion rests at both sequence ends
    "scale_log_mean": np.log(0.05),
    "scale_log_std": 0.05,
    "opacity_mean": 0.45,
    "colors": ((0.85, 0.35, 0.25), (0.25, 0.45, 0.85)),
    "feature_scale": 2.0,          # cluster feature-mean magnitude
    "orbit_radius": 3.2,
    "orbit_elevation": 8.0,
    "orbit_elevation_wobble": 20.0,
    "orbit_target": (0.0, 0.0, 0.0),
    "fov_deg": 55.0,
    "eval_azimuths": (352.5, 172.5),
    "eval_elevation": 12.0,
    "eval_times": (0.0, 0.25, 0.5, 0.75, 1.0),
    # novel-view camera used to score the tracked mask at each eval time;
    # chosen near that time's training azimuths
    "mask_eval_camera": {0.0: 0, 0.25: 1, 0.5: 1, 0.75: 1, 1.0: 0},
    "mask_alpha_threshold": 0.5,
    "pointcloud_noise": 0.02,
}

PRESETS = {"two-blob": TWO_BLOB}


@dataclass
class SyntheticScene:
    canonical: GaussianSet
    moving: np.ndarray            # (N,) bool membership of the moving cluster
    delta: np.ndarray             # (3,) total translation of the moving cluster
    train_cameras: list
    train_times: list
    eval_cameras: list
    eval_times: list
    feature_means: np.ndarray     # (2, C) cluster feature means
    params: dict
    seed: int

    def scene_at(self, t: float) -> GaussianSet:
        """True scene posed at time t.

        The moving cluster translates linearly from -delta/2 at t=0 to
        +delta/2 at t=1; the canonical configuration sits mid-path so the
        time-averaged supervision matches it.
        """
        posed = self.canonical.copy()
        posed.positions[self.moving] += ((t - 0.5) * self.delta).astype(posed.dtype)
        return posed

    def cluster_mask(self, camera: Camera, t: float, moving: bool) -> np.ndarray:
        """Analytic object mask: subset alpha of the true cluster, thresholded."""
        posed = self.scene_at(t)
        ids = np.nonzero(self.moving if moving else ~self.moving)[0]
        out = render(posed.subset(ids), camera, RenderOptions())
        return out.alpha >= self.params["mask_alpha_threshold"]

    def click_pixel(self, camera: Camera, t: float = 0.0):
        """Pixel under the moving-cluster centroid at time t."""
        centroid = self.scene_at(t).positions[self.moving].mean(axis=0)
        q = camera.world_to_camera(centroid[None, :].astype(np.float64))[0]
        px = camera.fx * q[0] / q[2] + camera.cx
        py = camera.fy * q[1] / q[2] + camera.cy
        return int(round(px)), int(round(py))


def _hold_times(n_frames: int, hold: int) -> list:
    """Monotone 0 to 1 ramp with `hold` still frames at each end."""
    j = np.arange(n_frames)
    return list(np.clip((j - hold) / (n_frames - 1 - 2 * hold), 0.0, 1.0))


def generate(preset: str = "two-blob", seed: int = 0) -> SyntheticScene:
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; have {sorted(PRESETS)}")
    p = dict(PRESETS[preset])
    rng = np.random.default_rng(seed)
    npc = p["n_per_cluster"]
    n = 2 * npc
    cdim = p["feature_dim"]

    # positions on two jittered spherical shells, so every Gaussian is
    # surface-exposed somewhere along the orbit
    centers = np.asarray(p["cluster_centers"])
    positions = np.empty((n, 3))
    for ci in range(2):
        d = rng.normal(size=(npc, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        r = p["shell_radius"] + rng.normal(0, p["shell_noise"], (npc, 1))
        positions[ci * npc:(ci + 1) * npc] = centers[ci] + d * r
    moving = np.zeros(n, dtype=bool)
    moving[:npc] = True

    rotations = rng.normal(size=(n, 4))
    rotations[:, 0] += 2.0  # bias toward identity so splats stay roundish
    log_scales = rng.normal(p["scale_log_mean"], p["scale_log_std"], size=(n, 3))
    opacity = np.clip(rng.normal(p["opacity_mean"], 0.05, size=n), 0.3, 0.6)

    base_colors = np.asarray(p["colors"])
    rgb = np.concatenate([
        np.clip(base_colors[0] + rng.normal(0, 0.04, size=(npc, 3)), 0.05, 0.95),
        np.clip(base_colors[1] + rng.normal(0, 0.04, size=(npc, 3)), 0.05, 0.95),
    ])

    feature_means = np.zeros((2, cdim))
    feature_means[0, 0] = p["feature_scale"]
    feature_means[1, 1] = p["feature_scale"]
    features = np.concatenate([
        feature_means[0] + rng.normal(0, 0.01, size=(npc, cdim)),
        feature_means[1] + rng.normal(0, 0.01, size=(npc, cdim)),
    ])

    canonical = GaussianSet(
        positions.astype(np.float32), rotations.astype(np.float32),
        log_scales.astype(np.float32), logit(opacity).astype(np.float32),
        logit(rgb).astype(np.float32), features.astype(np.float32),
    )

    size = p["image_size"]
    nf = p["n_frames"]
    train_cameras = []
    for j in range(nf):
        azimuth = 360.0 * j / nf
        # cosine phase: the motion holds at both sequence ends then sweep
        # through high and low elevations, not just one side
        elevation = (p["orbit_elevation"]
                     + p["orbit_elevation_wobble"] * np.cos(4.0 * np.pi * j / nf))
        train_cameras.append(orbit_camera(
            azimuth, elevation, p["orbit_radius"], p["orbit_target"],
            size, size, p["fov_deg"]))
    train_times = _hold_times(nf, p["time_hold_frames"])
    eval_cameras = [orbit_camera(a, p["eval_elevation"], p["orbit_radius"],
                                 p["orbit_target"], size, size, p["fov_deg"])
                    for a in p["eval_azimuths"]]

    return SyntheticScene(canonical, moving, np.asarray(p["delta"]),
                          train_cameras, train_times, eval_cameras,
                          list(p["eval_times"]), feature_means, p, seed)


def write_dataset(truth: SyntheticScene, out_dir) -> dict:
    """Render and write the full dataset; returns the key output paths."""
    out = Path(out_dir)
    for sub in ("frames", "features", "eval/frames", "eval/masks"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    opts = RenderOptions()

    records = []
    for j, (camera, t) in enumerate(zip(truth.train_cameras, truth.train_times)):
        posed = truth.scene_at(t)
        img = render(posed, camera, opts)
        save_image(out / f"frames/train_{j:03d}.png", img.color)
        write_feature_map(out / f"features/train_{j:03d}.dgdf", img.feature)
        records.append(camera_record(camera, f"frames/train_{j:03d}.png", t,
                                     f"features/train_{j:03d}.dgdf"))

    rng = np.random.default_rng(truth.seed + 1)
    noisy = truth.canonical.positions + rng.normal(
        0, truth.params["pointcloud_noise"], truth.canonical.positions.shape)
    write_pointcloud(out / "init.ply", noisy, truth.canonical.rgb())
    write_manifest(out / "manifest.json", records, "init.ply")

    eval_records = []
    k = 0
    for ci, camera in enumerate(truth.eval_cameras):
        for t in truth.eval_times:
            posed = truth.scene_at(t)
            img = render(posed, camera, opts)
            save_image(out / f"eval/frames/eval_{k:03d}.png", img.color)
            eval_records.append(camera_record(
                camera, f"frames/eval_{k:03d}.png", t))
            for name, is_moving in (("moving", True), ("static", False)):
                mask = truth.cluster_mask(camera, t, is_moving)
                write_mask(out / f"eval/masks/{name}_cam{ci}_t{t:.2f}.png", mask)
            k += 1
    write_manifest(out / "eval/manifest.json", eval_records)

    click = truth.click_pixel(truth.eval_cameras[0], 0.0)
    meta = {
        "preset": "two-blob",
        "seed": truth.seed,
        "count": truth.canonical.count,
        "moving_count": int(truth.moving.sum()),
        "moving_ids": np.nonzero(truth.moving)[0].tolist(),
        "delta": truth.delta.tolist(),
        "feature_mean_moving": truth.feature_means[0].tolist(),
        "feature_mean_static": truth.feature_means[1].tolist(),
        "cluster_centers": [list(c) for c in truth.params["cluster_centers"]],
        "image_size": [truth.params["image_size"], truth.params["image_size"]],
        "train_times": [float(t) for t in truth.train_times],
        "eval_times": truth.eval_times,
        "eval_azimuths": list(truth.params["eval_azimuths"]),
        "mask_eval_camera": {f"{t:.2f}": ci for t, ci
                             in truth.params["mask_eval_camera"].items()},
        "mask_alpha_threshold": truth.params["mask_alpha_threshold"],
        "click": {"camera_index": 0, "time": 0.0, "pixel": list(click)},
    }
    (out / "truth.json").write_text(json.dumps(meta, indent=1))
    return {"manifest": str(out / "manifest.json"),
            "eval_manifest": str(out / "eval/manifest.json"),
            "truth": str(out / "truth.json")}
