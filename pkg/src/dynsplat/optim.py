"""First-order optimization: Adam with bias correction and the exponential
learning-rate decay used for the deformation network."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch


@dataclass
class AdamState:
    """Moment accumulators for a list of parameter arrays."""
    m: list
    v: list
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-15

    @classmethod
    def for_params(cls, params, beta1=0.9, beta2=0.999, eps=1e-15) -> "AdamState":
        return cls([np.zeros_like(p) for p in params],
                   [np.zeros_like(p) for p in params], 0, beta1, beta2, eps)

    def select_rows(self, keep, n_new=0):
        """Keep accumulator rows for surviving Gaussians and zero-pad for new
        ones; used after density control on per-Gaussian parameter arrays."""
        def rebuild(arr):
            kept = arr[keep]
            if n_new:
                pad = np.zeros((n_new,) + arr.shape[1:], dtype=arr.dtype)
                kept = np.concatenate([kept, pad], axis=0)
            return kept
        self.m = [rebuild(a) for a in self.m]
        self.v = [rebuild(a) for a in self.v]


def adam_step(state: AdamState, params, grads, lr):
    """One Adam update, in place on the parameter arrays.

    lr may be a scalar or a per-array list. Returns (params, state).
    """
    if len(params) != len(state.m) or len(params) != len(grads):
        raise ShapeMismatch("params/grads/state length mismatch")
    lrs = lr if isinstance(lr, (list, tuple)) else [lr] * len(params)
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for p, g, m, v, rate in zip(params, grads, state.m, state.v, lrs):
        if p.shape != g.shape:
            raise ShapeMismatch(f"param {p.shape} vs grad {g.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g)
        p -= rate * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


@dataclass(frozen=True)
class LrSchedule:
    lr_start: float
    lr_end: float
    total_steps: int

    def __post_init__(self):
        if self.lr_start <= 0 or self.lr_end <= 0:
            raise ValueError("learning rates must be positive")
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")


def exp_lr(schedule: LrSchedule, step: int) -> float:
    """Geometric interpolation from lr_start to lr_end, held at lr_end after
    total_steps. Endpoints are returned exactly."""
    if step <= 0:
        return schedule.lr_start
    if step >= schedule.total_steps:
        return schedule.lr_end
    frac = step / schedule.total_steps
    return schedule.lr_start * (schedule.lr_end / schedule.lr_start) ** frac
