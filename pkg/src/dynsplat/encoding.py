"""Frequency (Fourier) encoding of network inputs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FourierEncodingConfig:
    num_bands: int
    include_input: bool = True

    def encoded_dim(self, input_dim: int) -> int:
        base = input_dim if self.include_input else 0
        return base + input_dim * 2 * self.num_bands


def fourier_encode(v: np.ndarray, cfg: FourierEncodingConfig) -> np.ndarray:
    """Encode (..., d) inputs as (optionally v and) sin/cos of 2^k * pi * v.

    Output layout per trailing dimension block: [v, sin(2^0 pi v),
    cos(2^0 pi v), sin(2^1 pi v), cos(2^1 pi v), ...], each block of width d.
    """
    v = np.asarray(v)
    parts = [v] if cfg.include_input else []
    for k in range(cfg.num_bands):
        scaled = (2.0 ** k) * np.pi * v
        parts.append(np.sin(scaled))
        parts.append(np.cos(scaled))
    if not parts:
        return v[..., :0]
    return np.concatenate(parts, axis=-1)


def fourier_encode_backward(v: np.ndarray, cfg: FourierEncodingConfig,
                            grad_encoded: np.ndarray) -> np.ndarray:
    """Accumulate d(encoded)/dv^T @ grad_encoded back onto the raw input."""
    v = np.asarray(v)
    d = v.shape[-1]
    grad = np.zeros_like(v)
    offset = 0
    if cfg.include_input:
        grad += grad_encoded[..., :d]
        offset = d
    for k in range(cfg.num_bands):
        freq = (2.0 ** k) * np.pi
        scaled = freq * v
        g_sin = grad_encoded[..., offset:offset + d]
        g_cos = grad_encoded[..., offset + d:offset + 2 * d]
        grad += freq * (np.cos(scaled) * g_sin - np.sin(scaled) * g_cos)
        offset += 2 * d
    return grad
