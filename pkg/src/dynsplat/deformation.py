"""Time-conditioned deformation network.

A small MLP maps (encoded position, encoded time) to per-Gaussian offsets
(dx, dr, ds) applied to position, unnormalized quaternion, and log-scale.
The forward and reverse passes are written out by hand so the whole training
pipeline stays autodiff-free and checkable against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .encoding import FourierEncodingConfig, fourier_encode, fourier_encode_backward
from .errors import ShapeMismatch
from .scene import GaussianSet

HEAD_DIMS = (3, 4, 3)  # dx, dr, ds


@dataclass(frozen=True)
class ASTConfig:
    """Annealed time-jitter applied to the deformation input during training.

    noise_scale_initial is a fraction of the [0, 1] time range; the noise std
    decays linearly to zero at anneal_end_iteration.
    """
    noise_scale_initial: float = 0.1
    anneal_end_iteration: int = 20000

    def __post_init__(self):
        if self.noise_scale_initial < 0:
            raise ValueError("noise_scale_initial must be >= 0")
        if self.anneal_end_iteration < 1:
            raise ValueError("anneal_end_iteration must be >= 1")


def ast_time(t: float, iteration: int, cfg: ASTConfig, rng: np.random.Generator) -> float:
    """Jittered time t + N(0, sigma^2) clamped to [0, 1].

    sigma = noise_scale_initial * max(0, 1 - iteration / anneal_end_iteration);
    at or beyond anneal_end_iteration the input time is returned exactly.
    """
    frac = max(0.0, 1.0 - iteration / cfg.anneal_end_iteration)
    sigma = cfg.noise_scale_initial * frac
    if sigma == 0.0:
        return float(t)
    return float(np.clip(t + sigma * rng.standard_normal(), 0.0, 1.0))


@dataclass
class DeformationField:
    """MLP with ReLU hidden layers and three linear output heads.

    weights[i] has shape (fan_in, fan_out); the trunk has `depth` layers of
    width `width`, the heads map width -> (3, 4, 3). Head weights and biases
    start at zero so training begins from the identity deformation.
    """

    weights: list
    biases: list
    head_weights: list
    head_biases: list
    pos_encoding: FourierEncodingConfig
    time_encoding: FourierEncodingConfig
    hidden_width: int = field(default=0)

    @property
    def depth(self) -> int:
        return len(self.weights)

    @property
    def input_dim(self) -> int:
        return self.pos_encoding.encoded_dim(3) + self.time_encoding.encoded_dim(1)

    @property
    def dtype(self):
        return self.weights[0].dtype

    def parameters(self) -> list:
        """All parameter arrays in a fixed (checkpoint) order."""
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend([w, b])
        for w, b in zip(self.head_weights, self.head_biases):
            params.extend([w, b])
        return params

    def validate(self):
        dim = self.input_dim
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape[0] != dim or b.shape != (w.shape[1],):
                raise ShapeMismatch(f"trunk layer {i}: {w.shape} after input dim {dim}")
            dim = w.shape[1]
        for w, b, out in zip(self.head_weights, self.head_biases, HEAD_DIMS):
            if w.shape != (dim, out) or b.shape != (out,):
                raise ShapeMismatch(f"head shape {w.shape}, expected ({dim}, {out})")
        for p in self.parameters():
            if not np.all(np.isfinite(p)):
                raise ValueError("non-finite deformation parameter")

    def astype(self, dtype) -> "DeformationField":
        return DeformationField(
            [w.astype(dtype) for w in self.weights],
            [b.astype(dtype) for b in self.biases],
            [w.astype(dtype) for w in self.head_weights],
            [b.astype(dtype) for b in self.head_biases],
            self.pos_encoding, self.time_encoding, self.hidden_width,
        )

    def copy(self) -> "DeformationField":
        return self.astype(self.dtype)


def make_field(depth=8, width=256, pos_bands=10, time_bands=6,
               include_input=True, seed=0, dtype=np.float32) -> DeformationField:
    """He-initialized trunk, zero-initialized heads (identity deformation)."""
    pos_cfg = FourierEncodingConfig(pos_bands, include_input)
    time_cfg = FourierEncodingConfig(time_bands, include_input)
    rng = np.random.default_rng(seed)
    dims = [pos_cfg.encoded_dim(3) + time_cfg.encoded_dim(1)] + [width] * depth
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        std = np.sqrt(2.0 / fan_in)
        weights.append(rng.normal(0.0, std, size=(fan_in, fan_out)).astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    head_weights = [np.zeros((width, out), dtype=dtype) for out in HEAD_DIMS]
    head_biases = [np.zeros(out, dtype=dtype) for out in HEAD_DIMS]
    f = DeformationField(weights, biases, head_weights, head_biases,
                         pos_cfg, time_cfg, width)
    f.validate()
    return f


def deform(f: DeformationField, positions: np.ndarray, t: float):
    """Forward pass: offsets (dx, dr, ds) for each input position at time t.

    Returns (dx (N,3), dr (N,4), ds (N,3), cache) where cache holds the
    intermediates needed by deform_backward. Pure function of its inputs.
    """
    positions = np.asarray(positions)
    if positions.ndim != 2 or positions.shape[1] != 3:
        raise ShapeMismatch(f"positions must be (N, 3), got {positions.shape}")
    dtype = f.dtype
    n = positions.shape[0]
    t_col = np.full((n, 1), t, dtype=dtype)
    enc_x = fourier_encode(positions.astype(dtype), f.pos_encoding)
    enc_t = fourier_encode(t_col, f.time_encoding)
    h = np.concatenate([enc_x, enc_t], axis=1)

    pre_acts = []   # linear outputs before ReLU
    acts = [h]      # layer inputs
    for w, b in zip(f.weights, f.biases):
        z = acts[-1] @ w + b
        pre_acts.append(z)
        acts.append(np.maximum(z, 0.0))
    hidden = acts[-1]
    outs = [hidden @ w + b for w, b in zip(f.head_weights, f.head_biases)]
    cache = (positions, acts, pre_acts, hidden)
    return outs[0], outs[1], outs[2], cache


def deform_backward(f: DeformationField, cache, grad_dx, grad_dr, grad_ds):
    """Reverse pass. Returns (parameter gradients aligned with
    f.parameters(), gradient w.r.t. the raw input positions (N, 3))."""
    positions, acts, pre_acts, hidden = cache
    head_grads = []
    g_hidden = np.zeros_like(hidden)
    for w, b, g_out in zip(f.head_weights, f.head_biases, (grad_dx, grad_dr, grad_ds)):
        g_out = np.asarray(g_out, dtype=hidden.dtype)
        head_grads.extend([hidden.T @ g_out, g_out.sum(axis=0)])
        g_hidden += g_out @ w.T

    weight_grads = [None] * len(f.weights)
    bias_grads = [None] * len(f.weights)
    g = g_hidden
    for i in range(len(f.weights) - 1, -1, -1):
        g = g * (pre_acts[i] > 0)
        weight_grads[i] = acts[i].T @ g
        bias_grads[i] = g.sum(axis=0)
        g = g @ f.weights[i].T

    # g is now the gradient at the encoded input; split and push through
    # the position encoding (the time block carries no trainable input).
    d_pos_enc = f.pos_encoding.encoded_dim(3)
    grad_positions = fourier_encode_backward(
        positions.astype(hidden.dtype), f.pos_encoding, g[:, :d_pos_enc])

    param_grads = []
    for wg, bg in zip(weight_grads, bias_grads):
        param_grads.extend([wg, bg])
    param_grads.extend(head_grads)
    return param_grads, grad_positions


def apply_deformation(gaussians: GaussianSet, f: DeformationField, t: float):
    """Deformed copy of the scene at time t.

    Offsets add to position, raw quaternion, and log-scale; opacity, color,
    and features ride along unchanged. Returns (deformed scene, cache) so the
    caller can run the backward pass.
    """
    dx, dr, ds, cache = deform(f, gaussians.positions, t)
    deformed = gaussians.with_spatial(
        gaussians.positions + dx.astype(gaussians.dtype),
        gaussians.rotations + dr.astype(gaussians.dtype),
        gaussians.log_scales + ds.astype(gaussians.dtype),
    )
    return deformed, cache


def zero_param_grads(f: DeformationField) -> list:
    return [np.zeros_like(p) for p in f.parameters()]
