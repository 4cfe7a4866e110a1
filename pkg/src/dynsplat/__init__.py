"""Dynamic semantic Gaussian splatting.

A scene is a set of 3D Gaussians carrying color and a semantic feature
vector, plus a time-conditioned deformation MLP. The package covers the full
loop: differentiable rasterization of color/feature/alpha channels with a
hand-derived backward pass, joint optimization against image and feature-map
supervision, semantic selection (embedding query, click, pixel set) with a
cosine granularity threshold, mask rendering, and mIoU evaluation.
"""

from .camera import Camera, look_at, orbit_camera
from .deformation import (ASTConfig, DeformationField, apply_deformation,
                          ast_time, deform, deform_backward, make_field)
from .encoding import FourierEncodingConfig, fourier_encode
from .optim import AdamState, LrSchedule, adam_step, exp_lr
from .projection import Splat2D, project_gaussian, project_scene
from .rasterizer import (RenderOptions, RenderOutput, contribution_weights,
                         render, render_backward, render_brute_force)
from .scene import (GaussianSet, covariance3d, init_from_pointcloud,
                    init_random, quat_to_rotation)
from .semantics import (SelectionQuery, SelectionResult, miou,
                        render_segmentation_mask, select, select_by_click,
                        select_by_embedding, select_by_pixels)
from .training import (DensifyConfig, TrainConfig, TrainReport,
                       densify_and_prune, gradcheck, reconstruction_loss,
                       train, train_step)

__version__ = "0.1.0"

__all__ = [
    "ASTConfig", "AdamState", "Camera", "DeformationField", "DensifyConfig",
    "FourierEncodingConfig", "GaussianSet", "LrSchedule", "RenderOptions",
    "RenderOutput", "SelectionQuery", "SelectionResult", "Splat2D",
    "TrainConfig", "TrainReport", "adam_step", "apply_deformation",
    "ast_time", "contribution_weights", "covariance3d", "deform",
    "deform_backward", "densify_and_prune", "exp_lr", "fourier_encode",
    "gradcheck", "init_from_pointcloud", "init_random", "look_at", "miou",
    "make_field", "orbit_camera", "project_gaussian", "project_scene",
    "quat_to_rotation", "reconstruction_loss", "render", "render_backward",
    "render_brute_force", "render_segmentation_mask", "select",
    "select_by_click", "select_by_embedding", "select_by_pixels", "train",
    "train_step",
]
