import json

import numpy as np
import pytest

from dynsplat.cli import main
from dynsplat.io_formats import (load_checkpoint, read_mask,
                                 write_query_embedding)


class TestErrors:
    def test_missing_checkpoint_exits_nonzero(self, capsys, tmp_path):
        rc = main(["render", str(tmp_path / "nope.dgdc"),
                   "--out", str(tmp_path / "o.png"), "--pose", "0,10,3"])
        assert rc != 0
        err = capsys.readouterr().err
        assert err.startswith("error: ")
        assert "\n" == err[err.index("\n"):]  # single line

    def test_conflicting_selection_modes(self, quick_checkpoint, synth_dataset,
                                          tmp_path, capsys):
        rc = main(["segment", str(quick_checkpoint),
                   "--data", str(synth_dataset["manifest"]),
                   "--camera-index", "0", "--click", "4", "4",
                   "--pixels", "1,1", "--out-masks", str(tmp_path)])
        assert rc != 0
        assert capsys.readouterr().err.startswith("error: ")


class TestSynthCommand:
    def test_writes_dataset(self, tmp_path, capsys):
        rc = main(["synth", str(tmp_path / "d"), "--seed", "9"])
        assert rc == 0
        assert (tmp_path / "d" / "manifest.json").exists()
        assert (tmp_path / "d" / "truth.json").exists()
        out = capsys.readouterr().out
        assert "512" in out


class TestTrainCommand:
    def test_quick_checkpoint_exists(self, quick_checkpoint):
        scene, field, iteration = load_checkpoint(quick_checkpoint)
        assert scene.count == 512
        assert iteration == 60
        report = json.loads((quick_checkpoint.parent / "report.json").read_text())
        assert len(report["total_loss"]) == 60
        assert all(np.isfinite(report["total_loss"]))

    def test_seed_reproducibility(self, synth_dataset, tmp_path):
        outs = []
        for name in ("r1", "r2"):
            out = tmp_path / name
            rc = main(["train", str(synth_dataset["manifest"]), str(out),
                       "--iters", "12", "--warmup", "4", "--seed", "3",
                       "--mlp-depth", "2", "--mlp-width", "8",
                       "--pos-bands", "3", "--time-bands", "2",
                       "--no-densify", "--log-every", "0"])
            assert rc == 0
            outs.append((out / "checkpoint.dgdc").read_bytes())
        assert outs[0] == outs[1]


class TestRenderCommand:
    @pytest.mark.parametrize("channels", ["color", "feature-pca", "alpha"])
    def test_channels(self, quick_checkpoint, synth_dataset, tmp_path, channels):
        out = tmp_path / f"{channels}.png"
        rc = main(["render", str(quick_checkpoint),
                   "--data", str(synth_dataset["manifest"]),
                   "--camera-index", "0", "--time", "0.0",
                   "--channels", channels, "--out", str(out)])
        assert rc == 0
        assert out.exists()

    def test_orbit_pose(self, quick_checkpoint, tmp_path):
        out = tmp_path / "pose.png"
        rc = main(["render", str(quick_checkpoint), "--pose", "75,12,3.2",
                   "--target", "0,0,0.2", "--width", "64", "--height", "48",
                   "--out", str(out)])
        assert rc == 0
        from PIL import Image
        with Image.open(out) as im:
            assert im.size == (64, 48)


class TestSegmentCommand:
    def test_click_masks_over_times(self, quick_checkpoint, synth_dataset,
                                    tmp_path, capsys):
        meta = json.loads((synth_dataset["dir"] / "truth.json").read_text())
        px, py = meta["click"]["pixel"]
        masks = tmp_path / "masks"
        rc = main(["segment", str(quick_checkpoint),
                   "--data", str(synth_dataset["eval_manifest"]),
                   "--camera-index", "0", "--time", "0.0",
                   "--click", str(px), str(py), "--theta", "0.7",
                   "--times", "0.0,0.5,1.0", "--out-masks", str(masks)])
        assert rc == 0
        for t in ("0.00", "0.50", "1.00"):
            assert (masks / f"mask_t{t}.png").exists()
        assert "selected" in capsys.readouterr().out

    def test_embedding_query(self, quick_checkpoint, synth_dataset, tmp_path):
        meta = json.loads((synth_dataset["dir"] / "truth.json").read_text())
        qpath = tmp_path / "q.dgdq"
        write_query_embedding(qpath, np.asarray(meta["feature_mean_moving"],
                                                dtype=np.float32))
        masks = tmp_path / "masks"
        rc = main(["segment", str(quick_checkpoint),
                   "--data", str(synth_dataset["eval_manifest"]),
                   "--camera-index", "0", "--time", "0.0",
                   "--query-embedding", str(qpath), "--theta", "0.5",
                   "--out-masks", str(masks)])
        assert rc == 0
        assert (masks / "mask_t0.00.png").exists()


class TestEvalMiou:
    def test_perfect_score_against_itself(self, synth_dataset, tmp_path, capsys):
        gt = synth_dataset["dir"] / "eval" / "masks"
        rc = main(["eval-miou", "--gt-masks", str(gt), "--pred-masks", str(gt),
                   "--label", "two-blob"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "100.00%" in out
        assert "mIoU" in out

    def test_partial_overlap_scores_between(self, synth_dataset, tmp_path, capsys):
        gt = synth_dataset["dir"] / "eval" / "masks"
        pred = tmp_path / "pred"
        pred.mkdir()
        for p in gt.glob("*.png"):
            mask = read_mask(p)
            shifted = np.zeros_like(mask)
            shifted[:, 2:] = mask[:, :-2]
            from dynsplat.io_formats import write_mask
            write_mask(pred / p.name, shifted)
        rc = main(["eval-miou", "--gt-masks", str(gt), "--pred-masks", str(pred)])
        assert rc == 0


class TestGradcheckCommand:
    def test_tiny_passes(self, capsys):
        rc = main(["gradcheck", "--size", "tiny"])
        out = capsys.readouterr().out
        assert rc == 0
        assert "gradcheck: PASS" in out
        assert "static" in out and "deformed" in out


class TestBenchCommand:
    def test_reports_table(self, quick_checkpoint, capsys):
        rc = main(["bench", str(quick_checkpoint), "--frames", "3",
                   "--width", "64", "--height", "64"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "Gaussians [K]" in out
        assert "FPS" in out
        assert "ms/frame" in out
