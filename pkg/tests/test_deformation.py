import numpy as np
import pytest

from conftest import finite_difference, max_rel_error
from dynsplat.deformation import (ASTConfig, apply_deformation, ast_time,
                                  deform, deform_backward, make_field)
from dynsplat.encoding import (FourierEncodingConfig, fourier_encode,
                               fourier_encode_backward)
from dynsplat.scene import init_random


class TestFourierEncode:
    def test_zero_input(self):
        cfg = FourierEncodingConfig(num_bands=2, include_input=True)
        out = fourier_encode(np.array([0.0]), cfg)
        assert np.allclose(out, [0, 0, 1, 0, 1])

    def test_one_band(self):
        cfg = FourierEncodingConfig(num_bands=1, include_input=True)
        out = fourier_encode(np.array([1.0]), cfg)
        assert np.allclose(out, [1.0, np.sin(np.pi), np.cos(np.pi)], atol=1e-12)
        assert abs(out[1]) < 1e-12 and abs(out[2] + 1) < 1e-12

    def test_encoded_length(self):
        cfg = FourierEncodingConfig(num_bands=10, include_input=True)
        v = np.zeros((7, 3))
        assert fourier_encode(v, cfg).shape == (7, 63)
        assert cfg.encoded_dim(3) == 63
        no_inp = FourierEncodingConfig(num_bands=10, include_input=False)
        assert fourier_encode(v, no_inp).shape == (7, 60)

    def test_backward_matches_fd(self):
        cfg = FourierEncodingConfig(num_bands=4, include_input=True)
        rng = np.random.default_rng(0)
        v = rng.normal(size=(5, 3))
        g = rng.normal(size=(5, cfg.encoded_dim(3)))

        def loss():
            return float((fourier_encode(v, cfg) * g).sum())

        fd = finite_difference(loss, v, h=1e-7)
        ana = fourier_encode_backward(v, cfg, g)
        assert max_rel_error(ana, fd) < 1e-6


def small_field(seed=0, nonzero_heads=True):
    f = make_field(depth=2, width=8, pos_bands=3, time_bands=2, seed=seed,
                   dtype=np.float64)
    if nonzero_heads:
        rng = np.random.default_rng(seed + 1)
        for w in f.head_weights:
            w += rng.normal(0, 0.05, w.shape)
        for b in f.head_biases:
            b += rng.normal(0, 0.05, b.shape)
    return f


class TestDeform:
    def test_zero_heads_identity(self):
        f = make_field(depth=2, width=8, seed=0, dtype=np.float64)
        x = np.random.default_rng(1).normal(size=(6, 3))
        dx, dr, ds, _ = deform(f, x, 0.3)
        assert not dx.any() and not dr.any() and not ds.any()

    def test_deterministic_and_pure(self):
        f = small_field()
        x = np.random.default_rng(2).normal(size=(4, 3))
        first = deform(f, x, 0.7)[:3]
        second = deform(f, x, 0.7)[:3]
        for a, b in zip(first, second):
            assert np.array_equal(a, b)

    def test_input_jacobian_vs_fd(self):
        # width-8 depth-2 field, h = 1e-4 central differences
        f = small_field(seed=3)
        rng = np.random.default_rng(4)
        x = rng.normal(size=(3, 3)) * 0.3
        gx, gr, gs = rng.normal(size=(3, 3)), rng.normal(size=(3, 4)), rng.normal(size=(3, 3))

        def loss():
            dx, dr, ds, _ = deform(f, x, 0.45)
            return float((dx * gx).sum() + (dr * gr).sum() + (ds * gs).sum())

        _, _, _, cache = deform(f, x, 0.45)
        _, ana = deform_backward(f, cache, gx, gr, gs)
        fd = finite_difference(loss, x, h=1e-4)
        assert max_rel_error(ana, fd) < 1e-3

    def test_parameter_gradients_vs_fd(self):
        # 64-bit: relative error < 1e-6 at h = 1e-6
        f = small_field(seed=5)
        rng = np.random.default_rng(6)
        x = rng.normal(size=(4, 3)) * 0.4
        gx, gr, gs = rng.normal(size=(4, 3)), rng.normal(size=(4, 4)), rng.normal(size=(4, 3))

        def loss():
            dx, dr, ds, _ = deform(f, x, 0.25)
            return float((dx * gx).sum() + (dr * gr).sum() + (ds * gs).sum())

        _, _, _, cache = deform(f, x, 0.25)
        param_grads, _ = deform_backward(f, cache, gx, gr, gs)
        for p, ana in zip(f.parameters(), param_grads):
            fd = finite_difference(loss, p, h=1e-6)
            assert max_rel_error(ana, fd) < 1e-6


class TestApplyDeformation:
    def test_zero_field_is_identity(self):
        f = make_field(depth=2, width=8, seed=0, dtype=np.float32)
        scene = init_random(10, ((-1, -1, -1), (1, 1, 1)), feature_dim=4, seed=1)
        deformed, _ = apply_deformation(scene, f, 0.6)
        assert np.array_equal(deformed.positions, scene.positions)
        assert np.array_equal(deformed.rotations, scene.rotations)
        assert np.array_equal(deformed.log_scales, scene.log_scales)

    def test_constant_offset_head(self):
        f = make_field(depth=2, width=8, seed=0, dtype=np.float64)
        f.head_biases[0][:] = [1.0, 0.0, 0.0]
        scene = init_random(5, ((-1, -1, -1), (1, 1, 1)), feature_dim=2, seed=2,
                            dtype=np.float64)
        deformed, _ = apply_deformation(scene, f, 0.1)
        assert np.allclose(deformed.positions - scene.positions, [1.0, 0, 0])

    def test_non_spatial_fields_untouched(self):
        f = small_field()
        scene = init_random(8, ((-1, -1, -1), (1, 1, 1)), feature_dim=5, seed=3,
                            dtype=np.float64)
        deformed, _ = apply_deformation(scene, f, 0.9)
        assert deformed.count == scene.count
        assert np.array_equal(deformed.features, scene.features)
        assert np.array_equal(deformed.opacity_logits, scene.opacity_logits)
        assert np.array_equal(deformed.colors, scene.colors)


class TestAstTime:
    def test_past_anneal_end_exact(self):
        cfg = ASTConfig(0.1, 1000)
        rng = np.random.default_rng(0)
        assert ast_time(0.37, 1000, cfg, rng) == 0.37
        assert ast_time(0.37, 5000, cfg, rng) == 0.37

    def test_zero_noise_exact(self):
        cfg = ASTConfig(0.0, 1000)
        rng = np.random.default_rng(0)
        assert ast_time(0.5, 10, cfg, rng) == 0.5

    def test_half_way_std(self):
        # at iteration anneal_end/2 the noise std is half the initial scale
        cfg = ASTConfig(0.1, 20000)
        rng = np.random.default_rng(123)
        draws = np.array([ast_time(0.5, 10000, cfg, rng) for _ in range(100000)])
        std = draws.std()
        assert abs(std - 0.05) / 0.05 < 0.05

    def test_clamped_to_unit_interval(self):
        cfg = ASTConfig(0.5, 1000)
        rng = np.random.default_rng(7)
        draws = [ast_time(0.02, 0, cfg, rng) for _ in range(500)]
        assert min(draws) >= 0.0 and max(draws) <= 1.0
