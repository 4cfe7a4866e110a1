import numpy as np
import pytest

from conftest import (finite_difference, front_camera, max_rel_error,
                      random_frame, random_scene)
from dynsplat.deformation import make_field
from dynsplat.errors import ShapeMismatch
from dynsplat.io_formats import Frame
from dynsplat.optim import AdamState
from dynsplat.rasterizer import RenderOptions, render
from dynsplat.scene import GaussianSet, logit
from dynsplat.training import (DensifyConfig, DensifyStats, TrainConfig,
                               analytic_gradients, densify_and_prune,
                               gradcheck, reconstruction_loss, train,
                               train_step)


class FakeRender:
    def __init__(self, color, feature):
        self.color = color
        self.feature = feature


class TestReconstructionLoss:
    def test_exact_match_zero_loss(self):
        rng = np.random.default_rng(0)
        img = rng.uniform(0, 1, (6, 6, 3))
        fmap = rng.normal(size=(6, 6, 4))
        out = FakeRender(img.copy(), fmap.copy())
        total, c, f, g_c, g_f = reconstruction_loss(out, img, fmap, 1.0)
        assert total == 0.0 and c == 0.0 and f == 0.0
        assert not g_c.any() and not g_f.any()

    def test_zero_feature_weight_ignores_features(self):
        rng = np.random.default_rng(1)
        out = FakeRender(rng.uniform(0, 1, (4, 4, 3)), rng.normal(size=(4, 4, 2)))
        total, c, f, g_c, g_f = reconstruction_loss(
            out, rng.uniform(0, 1, (4, 4, 3)), rng.normal(size=(4, 4, 2)), 0.0)
        assert f == 0.0
        assert total == c
        assert not g_f.any()

    def test_gradients_vs_fd(self):
        rng = np.random.default_rng(2)
        color = rng.uniform(0, 1, (4, 4, 3))
        feature = rng.normal(size=(4, 4, 2))
        gt_img = rng.uniform(0, 1, (4, 4, 3))
        gt_f = rng.normal(size=(4, 4, 2))
        lam = 0.7
        out = FakeRender(color, feature)

        def loss():
            return reconstruction_loss(out, gt_img, gt_f, lam)[0]

        _, _, _, g_c, g_f = reconstruction_loss(out, gt_img, gt_f, lam)
        assert max_rel_error(g_c, finite_difference(loss, color, h=1e-7)) < 1e-6
        assert max_rel_error(g_f * lam / lam, finite_difference(loss, feature, h=1e-7)) < 1e-6

    def test_shape_mismatch(self):
        out = FakeRender(np.zeros((4, 4, 3)), np.zeros((4, 4, 2)))
        with pytest.raises(ShapeMismatch):
            reconstruction_loss(out, np.zeros((5, 5, 3)), None, 0.0)


def tiny_frames(rng, cam, scene, field, times=(0.0, 0.5, 1.0)):
    """Self-consistent supervision rendered from the scene itself."""
    frames = []
    for t in times:
        out = render(scene, cam)
        frames.append(Frame(cam, t, out.color.copy(), out.feature.copy()))
    return frames


class TestTrainStep:
    def test_warmup_leaves_field_untouched(self):
        rng = np.random.default_rng(3)
        scene = random_scene(rng, n=12, dtype=np.float32)
        field = make_field(2, 8, 3, 2, seed=0)
        cam = front_camera(16)
        frames = [random_frame(rng, cam)]
        frames[0].image = frames[0].image.astype(np.float32)
        frames[0].featuremap = frames[0].featuremap.astype(np.float32)
        cfg = TrainConfig.for_iterations(100, 50, seed=0)
        s_state = AdamState.for_params(list(scene.param_dict().values()))
        f_state = AdamState.for_params(field.parameters())
        before = [p.copy() for p in field.parameters()]
        for it in range(5):
            train_step(scene, field, frames, s_state, f_state, it, cfg, rng)
        for a, b in zip(before, field.parameters()):
            assert np.array_equal(a, b)

    def test_perfect_fit_no_drift_with_fresh_state(self):
        # gt equals the render and lambda_f = 0: gradients are exactly zero
        rng = np.random.default_rng(4)
        scene = random_scene(rng, n=8, dtype=np.float64)
        field = make_field(2, 8, 3, 2, seed=0, dtype=np.float64)
        cam = front_camera(16)
        out = render(scene, cam)
        frames = [Frame(cam, 0.4, out.color.copy(), None)]
        cfg = TrainConfig.for_iterations(100, 0, seed=0,
                                         feature_loss_weight=0.0)
        cfg.ast = cfg.ast.__class__(0.0, 1)  # keep the frame time exact
        s_state = AdamState.for_params(list(scene.param_dict().values()))
        f_state = AdamState.for_params(field.parameters())
        before = {k: v.copy() for k, v in scene.param_dict().items()}
        train_step(scene, field, frames, s_state, f_state, 10, cfg, rng)
        for k, v in scene.param_dict().items():
            assert np.array_equal(before[k], v), k

    def test_loss_decreases_over_training(self):
        rng = np.random.default_rng(5)
        scene = random_scene(rng, n=30, dtype=np.float32)
        target = random_scene(np.random.default_rng(99), n=30, dtype=np.float32)
        cam = front_camera(24)
        out = render(target, cam)
        frames = [Frame(cam, 0.0, out.color.copy(), out.feature.copy())]
        cfg = TrainConfig.for_iterations(300, 100, seed=1, log_interval=0)
        cfg.densify.enabled = False
        field = make_field(2, 16, 4, 2, seed=1)
        report = train(scene, field, frames, cfg)
        assert report.total_loss[-1] < report.total_loss[100] * 0.8

    def test_determinism(self):
        rng_scene = np.random.default_rng(6)
        base = random_scene(rng_scene, n=10, dtype=np.float32)
        cam = front_camera(12)
        gt = render(random_scene(np.random.default_rng(7), n=10, dtype=np.float32), cam)
        frames = [Frame(cam, 0.3, gt.color.copy(), gt.feature.copy())]
        losses = []
        for _ in range(2):
            scene = base.copy()
            field = make_field(2, 8, 3, 2, seed=2)
            cfg = TrainConfig.for_iterations(40, 10, seed=4, log_interval=0)
            cfg.densify.enabled = False
            report = train(scene, field, frames, cfg)
            losses.append(report.total_loss)
        assert losses[0] == losses[1]


class TestJointOptimization:
    def test_feature_loss_moves_positions(self):
        # uniform color everywhere: color gradients vanish, feature mismatch
        # across two regions still pulls positions
        rng = np.random.default_rng(8)
        n = 16
        scene = GaussianSet(
            positions=np.stack([rng.uniform(-0.3, 0.3, n),
                                rng.uniform(-0.3, 0.3, n),
                                rng.uniform(0.9, 1.4, n)], axis=1),
            rotations=np.tile([1.0, 0, 0, 0], (n, 1)) + rng.normal(0, 0.05, (n, 4)),
            log_scales=np.full((n, 3), np.log(0.08)),
            opacity_logits=np.full(n, logit(0.6)),
            colors=np.full((n, 3), logit(0.6)),
            features=np.zeros((n, 2)),
        )
        scene.features[scene.positions[:, 0] < 0, 0] = 1.0
        scene.features[scene.positions[:, 0] >= 0, 1] = 1.0
        cam = front_camera(24)
        opts = RenderOptions(background=(0.6, 0.6, 0.6))
        out = render(scene, cam, opts)
        gt_image = out.color.copy()           # exact match: color residual 0
        gt_feature = out.feature[:, :, ::-1].copy()  # swap regions in feature space
        frame = Frame(cam, 0.0, gt_image, gt_feature)

        grads_on, _ = analytic_gradients(scene, None, frame, 1.0, None, (0.6, 0.6, 0.6))
        grads_off, _ = analytic_gradients(scene, None, frame, 0.0, None, (0.6, 0.6, 0.6))
        assert np.linalg.norm(grads_on["positions"]) > 0.0
        assert np.linalg.norm(grads_off["positions"]) == 0.0


class TestDensify:
    def base_scene(self, n=4):
        rng = np.random.default_rng(10)
        return GaussianSet(
            positions=rng.normal(0, 0.5, (n, 3)),
            rotations=np.tile([1.0, 0, 0, 0], (n, 1)),
            log_scales=np.full((n, 3), np.log(0.05)),
            opacity_logits=np.full(n, logit(0.5)),
            colors=rng.normal(size=(n, 3)),
            features=rng.normal(size=(n, 4)),
        )

    def test_no_trigger_no_change(self):
        scene = self.base_scene()
        stats = DensifyStats.zeros(4)
        cfg = DensifyConfig()
        out, keep, n_new = densify_and_prune(scene, stats, cfg, 1.0,
                                             np.random.default_rng(0))
        assert out.count == 4 and keep.all() and n_new == 0
        assert np.array_equal(out.positions, scene.positions)

    def test_opacity_prune(self):
        scene = self.base_scene()
        scene.opacity_logits[2] = logit(0.001)
        stats = DensifyStats.zeros(4)
        out, keep, n_new = densify_and_prune(scene, stats, DensifyConfig(), 1.0,
                                             np.random.default_rng(0))
        assert out.count == 3
        assert not keep[2] and keep.sum() == 3

    def test_clone_small_high_gradient(self):
        scene = self.base_scene()
        stats = DensifyStats.zeros(4)
        stats.grad_accum[1] = 1.0
        stats.seen[1] = 1
        cfg = DensifyConfig(grad_threshold=0.5, percent_dense=1.0)  # size cut large: clone
        out, keep, n_new = densify_and_prune(scene, stats, cfg, 1.0,
                                             np.random.default_rng(0))
        assert out.count == 5 and n_new == 1 and keep.all()
        clone = out.subset([4])
        assert np.array_equal(clone.features[0], scene.features[1])
        assert np.array_equal(clone.colors[0], scene.colors[1])
        assert np.array_equal(clone.log_scales[0], scene.log_scales[1])
        assert not np.array_equal(clone.positions[0], scene.positions[1])

    def test_split_large_high_gradient(self):
        scene = self.base_scene()
        scene.log_scales[0] = np.log(0.5)  # large against the size cut
        stats = DensifyStats.zeros(4)
        stats.grad_accum[0] = 1.0
        stats.seen[0] = 1
        cfg = DensifyConfig(grad_threshold=0.5, percent_dense=0.1)
        out, keep, n_new = densify_and_prune(scene, stats, cfg, 1.0,
                                             np.random.default_rng(0))
        # parent replaced by two children with scales divided by 1.6
        assert out.count == 5 and n_new == 2 and not keep[0]
        children = out.subset([3, 4])
        expected = np.log(0.5) - np.log(1.6)
        assert np.allclose(children.log_scales, expected)
        assert np.array_equal(children.features[0], scene.features[0])
        assert np.array_equal(children.features[1], scene.features[0])

    def test_feature_dim_preserved(self):
        scene = self.base_scene()
        stats = DensifyStats.zeros(4)
        stats.grad_accum[:] = 1.0
        stats.seen[:] = 1
        out, _, _ = densify_and_prune(scene, stats,
                                      DensifyConfig(grad_threshold=0.1), 1.0,
                                      np.random.default_rng(0))
        assert out.feature_dim == scene.feature_dim
        out.__post_init__()  # re-runs the shape invariants


class TestGradcheck:
    def make_setup(self):
        rng = np.random.default_rng(20)
        scene = random_scene(rng, n=3, cdim=4, dtype=np.float64)
        field = make_field(2, 8, 3, 2, seed=3, dtype=np.float64)
        for w in field.head_weights:
            w += rng.normal(0, 0.02, w.shape)
        cam = front_camera(8, focal=18.0)
        frame = random_frame(rng, cam, cdim=4)
        return scene, field, frame

    def test_static_passes(self):
        scene, field, frame = self.make_setup()
        report = gradcheck(scene, field, frame, t=None)
        assert report.passed, dict(report.group_errors)
        assert all(v < 1e-5 for v in report.group_errors.values())

    def test_deformed_passes(self):
        scene, field, frame = self.make_setup()
        report = gradcheck(scene, field, frame, t=0.5)
        assert report.passed, dict(report.group_errors)
        assert "mlp" in report.group_errors

    def test_corrupted_gradient_flagged(self):
        scene, field, frame = self.make_setup()

        def corrupted(gaussians, fld, frm, weight, t, background):
            scene_grads, field_grads = analytic_gradients(
                gaussians, fld, frm, weight, t, background)
            scene_grads["log_scales"] = scene_grads["log_scales"] * 1.5 + 0.01
            return scene_grads, field_grads

        report = gradcheck(scene, field, frame, t=None, analytic_fn=corrupted)
        assert not report.passed
        assert report.group_errors["log_scales"] > 1e-5
        others = {k: v for k, v in report.group_errors.items() if k != "log_scales"}
        assert all(v < 1e-5 for v in others.values())
