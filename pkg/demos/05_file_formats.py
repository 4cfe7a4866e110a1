"""File formats: bit-exact round trips for feature maps, query embeddings,
and checkpoints, plus the dataset manifest and PLY point clouds."""

import json
import tempfile
from pathlib import Path

import numpy as np

from dynsplat import init_random, make_field
from dynsplat.io_formats import (load_checkpoint, load_dataset,
                                 read_feature_map, read_pointcloud,
                                 read_query_embedding, save_checkpoint,
                                 write_feature_map, write_pointcloud,
                                 write_query_embedding)
from dynsplat.synth import generate, write_dataset

work = Path(tempfile.mkdtemp(prefix="dynsplat_formats_"))
print("working in", work)

# Feature maps: "DGDF" header + f32 payload, exact length enforced.
fmap = np.random.default_rng(0).normal(size=(4, 6, 8)).astype(np.float32)
write_feature_map(work / "f.dgdf", fmap)
assert np.array_equal(read_feature_map(work / "f.dgdf"), fmap)
print("feature map round trip: bit-exact,",
      (work / "f.dgdf").stat().st_size, "bytes")

# Query embeddings: "DGDQ" + f32 vector (e.g. a precomputed text embedding).
vec = np.linspace(-1, 1, 8, dtype=np.float32)
write_query_embedding(work / "q.dgdq", vec)
assert np.array_equal(read_query_embedding(work / "q.dgdq"), vec)

# Checkpoints: "DGDC" stores scene arrays + MLP layer blocks + iteration.
scene = init_random(100, ((-1, -1, -1), (1, 1, 1)), feature_dim=8, seed=1)
field = make_field(depth=2, width=16, seed=2)
save_checkpoint(work / "model.dgdc", scene, field, iteration=1234)
scene2, field2, iteration = load_checkpoint(work / "model.dgdc")
assert iteration == 1234
assert all(np.array_equal(a, b) for a, b in
           zip(scene.param_dict().values(), scene2.param_dict().values()))
print("checkpoint round trip: bit-exact, iteration", iteration)

# ASCII PLY point clouds with u8 colors.
write_pointcloud(work / "cloud.ply", scene.positions[:5], scene.rgb()[:5])
points, colors = read_pointcloud(work / "cloud.ply")
print("ply:", points.shape[0], "points, colors in [0,1]:",
      float(colors.min()), "-", float(colors.max()))

# Dataset manifest: JSON frame records + images + feature maps + init cloud.
truth = generate("two-blob", seed=3)
paths = write_dataset(truth, work / "dataset")
frames, pointcloud = load_dataset(paths["manifest"])
meta = json.loads(Path(paths["truth"]).read_text())
print(f"dataset: {len(frames)} frames, feature dim "
      f"{frames[0].featuremap.shape[2]}, init cloud {pointcloud[0].shape[0]} "
      f"points, click pixel {meta['click']['pixel']}")
