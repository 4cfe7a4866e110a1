"""File formats: dataset manifests, feature maps, query embeddings,
checkpoints, point clouds, masks, and images.

Binary layouts (all little-endian, exact length, no trailing bytes):

  feature map   "DGDF" | u32 version=1 | u32 H | u32 W | u32 C | f32 * H*W*C
                (row-major, channel-last)
  query vector  "DGDQ" | u32 version=1 | u32 C | f32 * C
  checkpoint    "DGDC" | u32 version=1 | u32 N | u32 C
                | u32 depth | u32 width | u32 pos_bands | u32 time_bands
                | u32 include_input
                | f32 blocks: positions, rotations, log_scales,
                  opacity_logits, colors, features, then trunk (W, b) per
                  layer and head (W, b) per head, layer-major
                | u64 iteration

The dataset manifest is JSON: a top-level object with a "frames" array of
records (image path, optional featuremap path, time, intrinsics, row-major
world-to-camera rotation, translation) and an optional "pointcloud" path.
Paths are resolved relative to the manifest file.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .camera import Camera
from .deformation import DeformationField, make_field
from .encoding import FourierEncodingConfig
from .errors import (BadMagic, DimensionMismatch, MissingFile, ParseError,
                     TimeOutOfRange, TruncatedFile, VersionMismatch)
from .scene import GaussianSet

MAGIC_FEATURE = b"DGDF"
MAGIC_QUERY = b"DGDQ"
MAGIC_CHECKPOINT = b"DGDC"


# ---------------------------------------------------------------------------
# images and masks

def load_image(path) -> np.ndarray:
    """Decode an image file to float32 (H, W, 3) in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    return arr / 255.0

def save_image(path, img: np.ndarray):
    """Write float (H, W, 3) in [0, 1] as 8-bit RGB PNG."""
    u8 = np.clip(np.asarray(img) * 255.0 + 0.5, 0, 255).astype(np.uint8)
    Image.fromarray(u8, mode="RGB").save(path, format="PNG")

def write_mask(path, mask: np.ndarray):
    """Binary mask as single-channel 8-bit image: 255 selected, 0 background."""
    u8 = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    Image.fromarray(u8, mode="L").save(path, format="PNG")

def read_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return arr >= 128


# ---------------------------------------------------------------------------
# raw binary helpers

def _read_exact(path) -> bytes:
    data = Path(path).read_bytes()
    return data

def _check_magic(data: bytes, magic: bytes, path):
    if len(data) < 8:
        raise TruncatedFile(f"{path}: shorter than any valid header")
    if data[:4] != magic:
        raise BadMagic(f"{path}: expected {magic!r}, found {data[:4]!r}")
    version = struct.unpack_from("<I", data, 4)[0]
    if version != 1:
        raise VersionMismatch(f"{path}: unsupported version {version}")

def _expect_length(data: bytes, expected: int, path):
    if len(data) < expected:
        raise TruncatedFile(f"{path}: {len(data)} bytes, expected {expected}")
    if len(data) > expected:
        raise ParseError(f"{path}: {len(data) - expected} trailing bytes")


# ---------------------------------------------------------------------------
# feature maps

def write_feature_map(path, fmap: np.ndarray):
    fmap = np.ascontiguousarray(fmap, dtype="<f4")
    if fmap.ndim != 3:
        raise ParseError(f"feature map must be (H, W, C), got {fmap.shape}")
    h, w, c = fmap.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC_FEATURE)
        fh.write(struct.pack("<IIII", 1, h, w, c))
        fh.write(fmap.tobytes())

def read_feature_map(path) -> np.ndarray:
    data = _read_exact(path)
    _check_magic(data, MAGIC_FEATURE, path)
    if len(data) < 20:
        raise TruncatedFile(f"{path}: header incomplete")
    h, w, c = struct.unpack_from("<III", data, 8)
    _expect_length(data, 20 + 4 * h * w * c, path)
    arr = np.frombuffer(data, dtype="<f4", count=h * w * c, offset=20)
    return arr.reshape(h, w, c).copy()


# ---------------------------------------------------------------------------
# query embeddings

def write_query_embedding(path, vec: np.ndarray):
    vec = np.ascontiguousarray(vec, dtype="<f4").reshape(-1)
    with open(path, "wb") as fh:
        fh.write(MAGIC_QUERY)
        fh.write(struct.pack("<II", 1, vec.shape[0]))
        fh.write(vec.tobytes())

def read_query_embedding(path) -> np.ndarray:
    data = _read_exact(path)
    _check_magic(data, MAGIC_QUERY, path)
    if len(data) < 12:
        raise TruncatedFile(f"{path}: header incomplete")
    c = struct.unpack_from("<I", data, 8)[0]
    _expect_length(data, 12 + 4 * c, path)
    return np.frombuffer(data, dtype="<f4", count=c, offset=12).copy()


# ---------------------------------------------------------------------------
# checkpoints

def save_checkpoint(path, gaussians: GaussianSet, field: DeformationField,
                    iteration: int = 0):
    """Serialize scene + deformation field; parameters stored as f32."""
    n, c = gaussians.count, gaussians.feature_dim
    depth = field.depth
    width = field.hidden_width
    blocks = [gaussians.positions, gaussians.rotations, gaussians.log_scales,
              gaussians.opacity_logits, gaussians.colors, gaussians.features]
    blocks.extend(field.parameters())
    with open(path, "wb") as fh:
        fh.write(MAGIC_CHECKPOINT)
        fh.write(struct.pack("<IIIIIIII", 1, n, c, depth, width,
                             field.pos_encoding.num_bands,
                             field.time_encoding.num_bands,
                             1 if field.pos_encoding.include_input else 0))
        for b in blocks:
            fh.write(np.ascontiguousarray(b, dtype="<f4").tobytes())
        fh.write(struct.pack("<Q", iteration))

def _field_shapes(depth, width, pos_bands, time_bands, include_input):
    pos_cfg = FourierEncodingConfig(pos_bands, include_input)
    time_cfg = FourierEncodingConfig(time_bands, include_input)
    dims = [pos_cfg.encoded_dim(3) + time_cfg.encoded_dim(1)] + [width] * depth
    shapes = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        shapes.append((fan_in, fan_out))
        shapes.append((fan_out,))
    for out in (3, 4, 3):
        shapes.append((width, out))
        shapes.append((out,))
    return pos_cfg, time_cfg, shapes

def load_checkpoint(path):
    """Returns (gaussians, field, iteration); arrays come back as float32."""
    data = _read_exact(path)
    _check_magic(data, MAGIC_CHECKPOINT, path)
    header = struct.calcsize("<IIIIIIII") + 4
    if len(data) < header:
        raise TruncatedFile(f"{path}: header incomplete")
    (_, n, c, depth, width, pos_bands, time_bands,
     include_input) = struct.unpack_from("<IIIIIIII", data, 4)
    pos_cfg, time_cfg, shapes = _field_shapes(depth, width, pos_bands,
                                              time_bands, bool(include_input))
    scene_shapes = [(n, 3), (n, 4), (n, 3), (n,), (n, 3), (n, c)]
    total_floats = sum(int(np.prod(s)) for s in scene_shapes + shapes)
    _expect_length(data, header + 4 * total_floats + 8, path)

    offset = header
    arrays = []
    for shape in scene_shapes + shapes:
        cnt = int(np.prod(shape))
        arrays.append(np.frombuffer(data, dtype="<f4", count=cnt,
                                    offset=offset).reshape(shape).copy())
        offset += 4 * cnt
    iteration = struct.unpack_from("<Q", data, offset)[0]

    gaussians = GaussianSet(*arrays[:6])
    mlp = arrays[6:]
    trunk = mlp[:2 * depth]
    heads = mlp[2 * depth:]
    field = DeformationField(
        weights=trunk[0::2], biases=trunk[1::2],
        head_weights=heads[0::2], head_biases=heads[1::2],
        pos_encoding=pos_cfg, time_encoding=time_cfg, hidden_width=width)
    field.validate()
    return gaussians, field, int(iteration)


# ---------------------------------------------------------------------------
# point clouds (ASCII PLY)

def write_pointcloud(path, points: np.ndarray, colors: Optional[np.ndarray] = None):
    points = np.asarray(points, dtype=np.float64)
    lines = ["ply", "format ascii 1.0", f"element vertex {points.shape[0]}",
             "property float x", "property float y", "property float z"]
    if colors is not None:
        lines += ["property uchar red", "property uchar green", "property uchar blue"]
        u8 = np.clip(np.asarray(colors) * 255.0 + 0.5, 0, 255).astype(np.uint8)
    lines.append("end_header")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
        for i, p in enumerate(points):
            row = f"{p[0]:.8g} {p[1]:.8g} {p[2]:.8g}"
            if colors is not None:
                row += f" {u8[i, 0]} {u8[i, 1]} {u8[i, 2]}"
            fh.write(row + "\n")

def read_pointcloud(path):
    """ASCII PLY with x, y, z and optional red/green/blue (uchar) vertex
    properties. Returns (points (M, 3), colors (M, 3) in [0, 1])."""
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise MissingFile(str(path))
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ParseError(f"{path}: not a PLY file")
    n_vertex = None
    props = []
    header_end = None
    in_vertex = False
    for i, line in enumerate(lines[1:], start=1):
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "format":
            if tok[1] != "ascii":
                raise ParseError(f"{path}: only ascii PLY supported")
        elif tok[0] == "element":
            in_vertex = tok[1] == "vertex"
            if in_vertex:
                n_vertex = int(tok[2])
        elif tok[0] == "property" and in_vertex:
            props.append(tok[-1])
        elif tok[0] == "end_header":
            header_end = i
            break
    if n_vertex is None or header_end is None:
        raise ParseError(f"{path}: missing vertex element or end_header")
    for name in ("x", "y", "z"):
        if name not in props:
            raise ParseError(f"{path}: vertex property {name} missing")
    rows = lines[header_end + 1:header_end + 1 + n_vertex]
    if len(rows) < n_vertex:
        raise TruncatedFile(f"{path}: {len(rows)} vertex rows, expected {n_vertex}")
    try:
        table = np.array([[float(v) for v in r.split()] for r in rows])
    except ValueError as exc:
        raise ParseError(f"{path}: bad vertex row ({exc})")
    if table.shape[1] != len(props):
        raise ParseError(f"{path}: row width {table.shape[1]} != {len(props)} properties")
    points = table[:, [props.index("x"), props.index("y"), props.index("z")]]
    if all(k in props for k in ("red", "green", "blue")):
        cols = table[:, [props.index("red"), props.index("green"), props.index("blue")]]
        colors = cols / 255.0
    else:
        colors = np.full((n_vertex, 3), 0.5)
    return points, colors


# ---------------------------------------------------------------------------
# datasets

@dataclass
class Frame:
    camera: Camera
    time: float
    image: np.ndarray                 # (H, W, 3) float in [0, 1]
    featuremap: Optional[np.ndarray]  # (H, W, C) float or None
    image_path: str = ""

def bilinear_resize(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Corner-aligned bilinear resize of (H, W, C): output corners sample the
    input corners exactly."""
    h, w = arr.shape[:2]
    if (h, w) == (out_h, out_w):
        return arr.copy()
    ys = np.linspace(0.0, h - 1, out_h) if out_h > 1 else np.zeros(1)
    xs = np.linspace(0.0, w - 1, out_w) if out_w > 1 else np.zeros(1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]
    a = arr[np.ix_(y0, x0)]
    b = arr[np.ix_(y0, x1)]
    c = arr[np.ix_(y1, x0)]
    d = arr[np.ix_(y1, x1)]
    return (a * (1 - wy) * (1 - wx) + b * (1 - wy) * wx
            + c * wy * (1 - wx) + d * wy * wx)

def _frame_from_record(rec: dict, base: Path) -> Frame:
    required = ("image", "time", "fx", "fy", "cx", "cy", "width", "height",
                "rotation", "translation")
    for key in required:
        if key not in rec:
            raise ParseError(f"frame record missing key {key!r}")
    t = float(rec["time"])
    if not 0.0 <= t <= 1.0:
        raise TimeOutOfRange(f"frame time {t} outside [0, 1]")
    img_path = base / rec["image"]
    if not img_path.exists():
        raise MissingFile(str(img_path))
    image = load_image(img_path)
    h, w = image.shape[:2]
    if (w, h) != (int(rec["width"]), int(rec["height"])):
        raise ParseError(f"{img_path}: image is {w}x{h}, manifest says "
                         f"{rec['width']}x{rec['height']}")
    rotation = np.asarray(rec["rotation"], dtype=np.float64).reshape(3, 3)
    camera = Camera(float(rec["fx"]), float(rec["fy"]), float(rec["cx"]),
                    float(rec["cy"]), int(rec["width"]), int(rec["height"]),
                    rotation, np.asarray(rec["translation"], dtype=np.float64))
    fmap = None
    if rec.get("featuremap"):
        fpath = base / rec["featuremap"]
        if not fpath.exists():
            raise MissingFile(str(fpath))
        fmap = read_feature_map(fpath)
        fh, fw = fmap.shape[:2]
        if fh > h or fw > w:
            raise DimensionMismatch(
                f"{fpath}: feature map {fw}x{fh} larger than image {w}x{h}")
        if (fh, fw) != (h, w):
            fmap = bilinear_resize(fmap, h, w).astype(np.float32)
    return Frame(camera, t, image, fmap, str(img_path))

def load_dataset(manifest_path):
    """Load a manifest; returns (frames, pointcloud-or-None).

    Feature maps smaller than the image are bilinearly upsampled to image
    resolution; every frame must agree on the feature dimension.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise MissingFile(str(manifest_path))
    try:
        doc = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{manifest_path}: {exc}")
    if not isinstance(doc, dict) or not isinstance(doc.get("frames"), list):
        raise ParseError(f"{manifest_path}: expected object with a frames array")
    if len(doc["frames"]) < 1:
        raise ParseError(f"{manifest_path}: at least one frame required")
    base = manifest_path.parent
    frames = [_frame_from_record(rec, base) for rec in doc["frames"]]
    cdims = {f.featuremap.shape[2] for f in frames if f.featuremap is not None}
    if len(cdims) > 1:
        raise DimensionMismatch(f"inconsistent feature dimensions {sorted(cdims)}")
    pointcloud = None
    if doc.get("pointcloud"):
        ply = base / doc["pointcloud"]
        if not ply.exists():
            raise MissingFile(str(ply))
        pointcloud = read_pointcloud(ply)
    return frames, pointcloud

def write_manifest(path, frame_records: list, pointcloud: Optional[str] = None):
    doc = {"version": 1, "frames": frame_records}
    if pointcloud:
        doc["pointcloud"] = pointcloud
    Path(path).write_text(json.dumps(doc, indent=1))

def camera_record(camera: Camera, image, time, featuremap=None) -> dict:
    rec = {"image": image, "time": time,
           "fx": camera.fx, "fy": camera.fy, "cx": camera.cx, "cy": camera.cy,
           "width": camera.width, "height": camera.height,
           "rotation": [float(v) for v in camera.rotation.reshape(-1)],
           "translation": [float(v) for v in camera.translation]}
    if featuremap:
        rec["featuremap"] = featuremap
    return rec
