"""Command-line entry points.

Every subcommand exits nonzero on failure after printing a single
`error: <Type>: <message>` line to stderr; --seed pins all stochastic
behavior. DGD_THREADS caps the compute thread count.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import io_formats, semantics, synth, viz
from .camera import orbit_camera
from .deformation import ASTConfig, apply_deformation, make_field
from .errors import DynsplatError
from .optim import LrSchedule
from .rasterizer import RenderOptions, render, render_brute_force
from .scene import init_from_pointcloud, init_random
from .training import DensifyConfig, TrainConfig, gradcheck, train


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args) or 0
    except DynsplatError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dynsplat",
                                description="Dynamic semantic Gaussian splatting")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic dataset with ground truth")
    s.add_argument("out_dir")
    s.add_argument("--preset", default="two-blob", choices=sorted(synth.PRESETS))
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="optimize a scene and deformation field")
    s.add_argument("data", help="dataset manifest path")
    s.add_argument("out", help="output directory")
    s.add_argument("--iters", type=int, default=40000)
    s.add_argument("--warmup", type=int, default=3000)
    s.add_argument("--feature-dim", type=int, default=32,
                   help="used when the dataset carries no feature maps")
    s.add_argument("--lambda-f", type=float, default=1.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--precision", choices=("f32", "f64"), default="f32")
    s.add_argument("--snapshot-every", type=int, default=0)
    s.add_argument("--mlp-depth", type=int, default=8)
    s.add_argument("--mlp-width", type=int, default=256)
    s.add_argument("--pos-bands", type=int, default=10)
    s.add_argument("--time-bands", type=int, default=6)
    s.add_argument("--ast-noise", type=float, default=0.1)
    s.add_argument("--ast-until", type=int, default=20000)
    s.add_argument("--lr-features", type=float, default=2.5e-3)
    s.add_argument("--no-densify", action="store_true")
    s.add_argument("--densify-interval", type=int, default=100)
    s.add_argument("--densify-grad-threshold", type=float, default=2e-4)
    s.add_argument("--init-count", type=int, default=2000,
                   help="random init size when the manifest has no point cloud")
    s.add_argument("--log-every", type=int, default=100)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("render", help="render a checkpoint to an image")
    s.add_argument("ckpt")
    s.add_argument("--out", required=True)
    s.add_argument("--data", help="manifest supplying dataset cameras")
    s.add_argument("--camera-index", type=int)
    s.add_argument("--pose", help="orbit pose AZIMUTH,ELEVATION,RADIUS")
    s.add_argument("--target", default="0,0,0")
    s.add_argument("--fov", type=float, default=50.0)
    s.add_argument("--width", type=int, default=512)
    s.add_argument("--height", type=int, default=512)
    s.add_argument("--time", type=float, default=0.0)
    s.add_argument("--channels", choices=("color", "feature-pca", "alpha"),
                   default="color")
    s.add_argument("--background", default="0,0,0")
    s.set_defaults(func=cmd_render)

    s = sub.add_parser("segment", help="select Gaussians and write masks")
    s.add_argument("ckpt")
    s.add_argument("--data", help="manifest supplying dataset cameras")
    s.add_argument("--camera-index", type=int, required=True)
    s.add_argument("--time", type=float, default=0.0)
    s.add_argument("--theta", type=float, default=semantics.DEFAULT_THETA)
    s.add_argument("--query-embedding", help="DGDQ query vector file")
    s.add_argument("--click", nargs=2, type=float, metavar=("X", "Y"))
    s.add_argument("--pixels", help="pixel set 'x0,y0;x1,y1;...'")
    s.add_argument("--weight-threshold", type=float, default=0.5)
    s.add_argument("--mask-alpha-threshold", type=float,
                   default=semantics.DEFAULT_MASK_ALPHA)
    s.add_argument("--out-masks", required=True)
    s.add_argument("--times", help="comma list of mask times, default the query time")
    s.set_defaults(func=cmd_segment)

    s = sub.add_parser("eval-miou", help="mean IoU of predicted vs ground-truth masks")
    s.add_argument("ckpt", nargs="?")
    s.add_argument("--gt-masks", required=True)
    s.add_argument("--pred-masks", required=True)
    s.add_argument("--label", default="scene")
    s.set_defaults(func=cmd_eval_miou)

    s = sub.add_parser("gradcheck", help="verify analytic gradients against finite differences")
    s.add_argument("--size", choices=("tiny", "small"), default="tiny")
    s.add_argument("--precision", choices=("f64",), default="f64")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("bench", help="rendering speed and memory report")
    s.add_argument("ckpt")
    s.add_argument("--frames", type=int, default=100)
    s.add_argument("--width", type=int, default=512)
    s.add_argument("--height", type=int, default=512)
    s.add_argument("--time", type=float, default=0.0)
    s.add_argument("--compare-brute", action="store_true",
                   help="also time the brute-force oracle (slow)")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("serve", help="run the interactive viewer service")
    s.add_argument("ckpt")
    s.add_argument("--port", type=int, default=8090)
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--data", help="manifest supplying dataset cameras")
    s.set_defaults(func=cmd_serve)
    return p


def _parse_vec3(text):
    vals = [float(v) for v in text.split(",")]
    if len(vals) != 3:
        raise ValueError(f"expected 3 comma-separated values, got {text!r}")
    return tuple(vals)


def _camera_for(args, frames=None):
    if args.camera_index is not None:
        if frames is None:
            raise ValueError("--camera-index requires --data")
        if not 0 <= args.camera_index < len(frames):
            raise ValueError(f"camera index {args.camera_index} out of range "
                             f"(0..{len(frames) - 1})")
        return frames[args.camera_index].camera
    if args.pose:
        az, el, radius = (float(v) for v in args.pose.split(","))
        return orbit_camera(az, el, radius, _parse_vec3(args.target),
                            args.width, args.height, args.fov)
    raise ValueError("provide --camera-index (with --data) or --pose")


def cmd_synth(args):
    truth = synth.generate(args.preset, args.seed)
    paths = synth.write_dataset(truth, args.out_dir)
    print(f"wrote {args.preset} dataset: {paths['manifest']}")
    print(f"  gaussians {truth.canonical.count}, frames {len(truth.train_cameras)}, "
          f"feature dim {truth.canonical.feature_dim}")
    return 0


def cmd_train(args):
    frames, pointcloud = io_formats.load_dataset(args.data)
    dtype = np.float64 if args.precision == "f64" else np.float32
    cdims = {f.featuremap.shape[2] for f in frames if f.featuremap is not None}
    feature_dim = cdims.pop() if cdims else args.feature_dim

    if pointcloud is not None:
        points, colors = pointcloud
        scene = init_from_pointcloud(points, colors, feature_dim,
                                     seed=args.seed, dtype=dtype)
    else:
        scene = init_random(args.init_count, ((-1, -1, -1), (1, 1, 1)),
                            feature_dim, seed=args.seed, dtype=dtype)
    field = make_field(args.mlp_depth, args.mlp_width, args.pos_bands,
                       args.time_bands, seed=args.seed, dtype=dtype)

    cfg = TrainConfig(
        total_iterations=args.iters,
        warmup_iterations=args.warmup,
        feature_loss_weight=args.lambda_f,
        field_schedule=LrSchedule(8e-4, 1.6e-6, args.iters),
        position_schedule=LrSchedule(1.6e-4, 1.6e-6, args.iters),
        ast=ASTConfig(args.ast_noise, args.ast_until),
        densify=DensifyConfig(enabled=not args.no_densify,
                              interval=args.densify_interval,
                              grad_threshold=args.densify_grad_threshold),
        lr_features=args.lr_features,
        seed=args.seed,
        snapshot_interval=args.snapshot_every,
        log_interval=args.log_every,
    )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def snapshot(gaussians, fld, iteration):
        if iteration == cfg.total_iterations:
            path = out / "checkpoint.dgdc"
        else:
            path = out / f"snapshot_{iteration:06d}.dgdc"
        io_formats.save_checkpoint(path, gaussians, fld, iteration)

    report = train(scene, field, frames, cfg, snapshot_fn=snapshot)
    (out / "report.json").write_text(json.dumps(report.to_dict()))
    print(f"checkpoint: {out / 'checkpoint.dgdc'}")
    print(f"final loss {report.total_loss[-1]:.6f}, "
          f"gaussians {report.gaussian_counts[-1]}, "
          f"warmup {report.warmup_seconds:.1f}s, "
          f"dynamic {report.dynamic_seconds:.1f}s")
    return 0


def _load_ckpt(path):
    gaussians, field, iteration = io_formats.load_checkpoint(path)
    return gaussians, field, iteration


def cmd_render(args):
    gaussians, field, _ = _load_ckpt(args.ckpt)
    frames = io_formats.load_dataset(args.data)[0] if args.data else None
    camera = _camera_for(args, frames)
    posed, _ = apply_deformation(gaussians, field, args.time)
    out = render(posed, camera, RenderOptions(background=_parse_vec3(args.background)))
    if args.channels == "color":
        img = out.color
    elif args.channels == "feature-pca":
        img = viz.feature_pca_rgb(out.feature)
    else:
        img = viz.alpha_gray(out.alpha)
    io_formats.save_image(args.out, img)
    print(f"wrote {args.out} ({args.channels}, {camera.width}x{camera.height}, "
          f"t={args.time})")
    return 0


def _run_selection(args, gaussians, field, camera):
    modes = sum(bool(x) for x in (args.query_embedding, args.click, args.pixels))
    if modes != 1:
        raise ValueError("provide exactly one of --query-embedding, --click, --pixels")
    if args.query_embedding:
        q = io_formats.read_query_embedding(args.query_embedding)
        return semantics.select_by_embedding(gaussians, q, args.theta)
    if args.click:
        return semantics.select_by_click(gaussians, field, camera, args.time,
                                         tuple(args.click), args.theta)
    pixels = [tuple(float(v) for v in p.split(",")) for p in args.pixels.split(";")]
    return semantics.select_by_pixels(gaussians, field, camera, args.time,
                                      pixels, args.weight_threshold)


def cmd_segment(args):
    gaussians, field, _ = _load_ckpt(args.ckpt)
    frames = io_formats.load_dataset(args.data)[0] if args.data else None
    camera = _camera_for(args, frames)
    selection = _run_selection(args, gaussians, field, camera)
    times = ([float(v) for v in args.times.split(",")] if args.times
             else [args.time])
    out_dir = Path(args.out_masks)
    out_dir.mkdir(parents=True, exist_ok=True)
    for t in times:
        mask = semantics.render_segmentation_mask(
            gaussians, field, selection, camera, t, args.mask_alpha_threshold)
        io_formats.write_mask(out_dir / f"mask_t{t:.2f}.png", mask)
    print(f"selected {selection.count} gaussians (theta={args.theta}); "
          f"wrote {len(times)} masks to {out_dir}")
    return 0


def cmd_eval_miou(args):
    gt_dir = Path(args.gt_masks)
    pred_dir = Path(args.pred_masks)
    names = sorted(p.name for p in gt_dir.glob("*.png"))
    if not names:
        raise ValueError(f"no masks found in {gt_dir}")
    pred, gt = [], []
    for name in names:
        ppath = pred_dir / name
        if not ppath.exists():
            raise ValueError(f"prediction missing for {name}")
        pred.append(io_formats.read_mask(ppath))
        gt.append(io_formats.read_mask(gt_dir / name))
    per_frame = [semantics.miou([p], [g]) for p, g in zip(pred, gt)]
    score = semantics.miou(pred, gt)
    print(f"{'frame':24s} {'IoU':>8s}")
    for name, val in zip(names, per_frame):
        print(f"{name:24s} {val:8.4f}")
    print("-" * 33)
    print(f"{args.label + ' (mIoU)':24s} {score * 100:7.2f}%")
    return 0


def cmd_gradcheck(args):
    from .io_formats import Frame
    from .scene import GaussianSet, logit

    rng = np.random.default_rng(args.seed)
    n, size, cdim = (3, 8, 5) if args.size == "tiny" else (10, 16, 8)
    scene = GaussianSet(
        positions=np.stack([rng.uniform(-0.25, 0.25, n),
                            rng.uniform(-0.25, 0.25, n),
                            rng.uniform(0.8, 1.4, n)], axis=1),
        rotations=rng.normal(size=(n, 4)),
        log_scales=np.log(rng.uniform(0.06, 0.14, size=(n, 3))),
        opacity_logits=logit(rng.uniform(0.3, 0.8, size=n)),
        colors=rng.normal(size=(n, 3)) * 0.5,
        features=rng.normal(size=(n, cdim)),
    )
    field = make_field(depth=2, width=8, pos_bands=4, time_bands=2,
                       seed=args.seed, dtype=np.float64)
    for w in field.head_weights:
        w += rng.normal(0, 0.02, w.shape)
    f = 2.6 * size
    from .camera import Camera
    camera = Camera(f, f, (size - 1) / 2, (size - 1) / 2, size, size,
                    np.eye(3), np.zeros(3))
    frame = Frame(camera, 0.5, rng.uniform(0, 1, (size, size, 3)),
                  rng.normal(0, 0.5, (size, size, cdim)))

    failed = False
    for label, t in (("static", None), ("deformed t=0.5", 0.5)):
        report = gradcheck(scene, field, frame, feature_weight=1.0, t=t)
        print(f"[{label}]")
        for line in report.lines():
            print("  " + line)
        failed |= not report.passed
    print("gradcheck:", "FAIL" if failed else "PASS")
    return 1 if failed else 0


def cmd_bench(args):
    gaussians, field, iteration = _load_ckpt(args.ckpt)
    posed, _ = apply_deformation(gaussians, field, args.time)
    extent = np.abs(posed.positions).max() * 3.0 + 1e-6
    camera = orbit_camera(30.0, 15.0, float(extent), (0, 0, 0),
                          args.width, args.height)
    opts = RenderOptions()
    render(posed, camera, opts)  # warm the compiled kernels
    t0 = time.perf_counter()
    for i in range(args.frames):
        cam = orbit_camera(30.0 + i * 360.0 / max(args.frames, 1), 15.0,
                           float(extent), (0, 0, 0), args.width, args.height)
        render(posed, cam, opts)
    elapsed = time.perf_counter() - t0
    ms = elapsed / args.frames * 1000.0
    n = gaussians.count
    param_bytes = 4 * (n * (14 + gaussians.feature_dim)
                       + sum(p.size for p in field.parameters()))
    print(f"{'Gaussians [K]':>14s} {'Memory [MB]':>12s} {'ms/frame':>10s} {'FPS':>8s}")
    print(f"{n / 1000.0:14.1f} {param_bytes / 1e6:12.1f} {ms:10.2f} "
          f"{1000.0 / ms:8.1f}")
    if args.compare_brute:
        t0 = time.perf_counter()
        render_brute_force(posed, camera, opts)
        brute_s = time.perf_counter() - t0
        print(f"brute-force oracle: {brute_s * 1000.0:.1f} ms/frame "
              f"({brute_s * 1000.0 / ms:.1f}x slower)")
    return 0


def cmd_serve(args):
    from .service import ViewerService
    gaussians, field, iteration = _load_ckpt(args.ckpt)
    frames = io_formats.load_dataset(args.data)[0] if args.data else None
    service = ViewerService(gaussians, field, iteration, frames=frames)
    print(f"serving checkpoint ({gaussians.count} gaussians) on "
          f"http://{args.host}:{args.port}")
    service.serve_forever(args.host, args.port)
    return 0


if __name__ == "__main__":
    sys.exit(main())
