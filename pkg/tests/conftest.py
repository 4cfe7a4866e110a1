import numpy as np
import pytest

from dynsplat.camera import Camera
from dynsplat.io_formats import Frame
from dynsplat.scene import GaussianSet, logit


def front_camera(size=32, focal=None, dtype=np.float64):
    """Identity-pose camera looking down +z with the principal point on the
    center pixel."""
    f = focal if focal is not None else 2.2 * size
    return Camera(f, f, (size - 1) / 2.0, (size - 1) / 2.0, size, size,
                  np.eye(3), np.zeros(3))


def random_scene(rng, n=20, cdim=8, dtype=np.float64, depth_range=(0.7, 2.2),
                 xy_spread=0.35, scale_range=(0.03, 0.12),
                 opacity_range=(0.15, 0.9)):
    """Random scene inside the frustum of front_camera, away from the alpha
    clamp so gradients stay smooth."""
    return GaussianSet(
        positions=np.stack([
            rng.uniform(-xy_spread, xy_spread, n),
            rng.uniform(-xy_spread, xy_spread, n),
            rng.uniform(*depth_range, n),
        ], axis=1).astype(dtype),
        rotations=rng.normal(size=(n, 4)).astype(dtype),
        log_scales=np.log(rng.uniform(*scale_range, size=(n, 3))).astype(dtype),
        opacity_logits=logit(rng.uniform(*opacity_range, size=n)).astype(dtype),
        colors=(rng.normal(size=(n, 3)) * 0.6).astype(dtype),
        features=rng.normal(size=(n, cdim)).astype(dtype),
    )


def random_frame(rng, camera, cdim=8):
    """Supervision frame with random image/feature targets."""
    h, w = camera.height, camera.width
    return Frame(camera, 0.5, rng.uniform(0, 1, (h, w, 3)),
                 rng.normal(0, 0.5, (h, w, cdim)))


def finite_difference(fn, arr, h=1e-6):
    """Central-difference gradient of scalar fn w.r.t. every entry of arr,
    perturbing in place."""
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = fn()
        flat[i] = orig - h
        fm = fn()
        flat[i] = orig
        out[i] = (fp - fm) / (2.0 * h)
    return grad


def max_rel_error(a, b, floor_frac=0.01):
    """Elementwise relative error with a floor at a fraction of the largest
    magnitude, so near-zero entries compare against the group scale."""
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), 1e-12)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor_frac * scale)
    return float((np.abs(a - b) / denom).max(initial=0.0))


@pytest.fixture(scope="session")
def synth_dataset(tmp_path_factory):
    """Two-blob dataset on disk, shared across CLI/service tests."""
    from dynsplat import synth
    out = tmp_path_factory.mktemp("twoblob")
    truth = synth.generate("two-blob", seed=11)
    paths = synth.write_dataset(truth, out)
    return {"dir": out, "truth_obj": truth, **paths}


@pytest.fixture(scope="session")
def quick_checkpoint(synth_dataset, tmp_path_factory):
    """Short CLI training run; enough structure for plumbing tests."""
    from dynsplat.cli import main
    out = tmp_path_factory.mktemp("quicktrain")
    rc = main(["train", str(synth_dataset["manifest"]), str(out),
               "--iters", "60", "--warmup", "20", "--seed", "5",
               "--mlp-depth", "2", "--mlp-width", "16",
               "--pos-bands", "4", "--time-bands", "2",
               "--no-densify", "--log-every", "0"])
    assert rc == 0
    return out / "checkpoint.dgdc"
