"""Secondary acceptance: the scripted viewer loop (click + theta sweep +
time sweep) against a live service reproduces the CLI segment masks
byte-identically, displays theta-monotone counts, and stays inside the
interaction latency budget. Skipped when the frontend has not been built,
so the primary suite never depends on it."""

import json
import re
import shutil
import subprocess
import threading
from pathlib import Path

import pytest

from dynsplat.cli import main as cli_main
from dynsplat.io_formats import load_checkpoint, load_dataset
from dynsplat.service import ViewerService

FRONTEND = Path(__file__).resolve().parent.parent / "frontend"
SCRIPTED = FRONTEND / "dist" / "scripted.js"

pytestmark = pytest.mark.skipif(
    not SCRIPTED.exists() or shutil.which("node") is None,
    reason="viewer not built (run `npm run build` in frontend/)")


@pytest.fixture(scope="module")
def live_server(quick_checkpoint, synth_dataset):
    scene, field, iteration = load_checkpoint(quick_checkpoint)
    frames, _ = load_dataset(synth_dataset["eval_manifest"])
    service = ViewerService(scene, field, iteration, frames=frames)
    httpd = service.make_server("127.0.0.1", 0)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{httpd.server_address[1]}"
    httpd.shutdown()


def test_scripted_loop_matches_cli_and_latency(live_server, quick_checkpoint,
                                               synth_dataset, tmp_path):
    meta = json.loads((synth_dataset["dir"] / "truth.json").read_text())
    px, py = meta["click"]["pixel"]
    times = "0,0.25,0.5,0.75,1"

    cli_masks = tmp_path / "cli"
    rc = cli_main(["segment", str(quick_checkpoint),
                   "--data", str(synth_dataset["eval_manifest"]),
                   "--camera-index", "0", "--time", "0.0",
                   "--click", str(px), str(py), "--theta", "0.7",
                   "--times", times, "--out-masks", str(cli_masks)])
    assert rc == 0

    viewer_masks = tmp_path / "viewer"
    proc = subprocess.run(
        ["node", str(SCRIPTED), "--base", live_server,
         "--camera-index", "0", "--pixel", f"{px},{py}", "--theta", "0.7",
         "--thetas", "-1,0,0.5,0.9", "--times", times,
         "--out", str(viewer_masks), "--latency-size", "512"],
        capture_output=True, text=True, timeout=180)
    assert proc.returncode == 0, proc.stdout + proc.stderr

    # masks byte-identical with the CLI output
    names = sorted(p.name for p in cli_masks.glob("*.png"))
    assert len(names) == 5
    for name in names:
        assert ((viewer_masks / name).read_bytes()
                == (cli_masks / name).read_bytes()), name

    # theta-monotone counts are displayed
    match = re.search(r"counts by theta: (.+)", proc.stdout)
    assert match, proc.stdout
    counts = [int(m) for m in re.findall(r"=>(\d+)", match.group(1))]
    assert counts == sorted(counts, reverse=True)

    # every interaction, including a 512x512 render, under 500 ms
    worst = float(re.search(r"worst interaction latency: ([\d.]+) ms",
                            proc.stdout).group(1))
    assert worst < 500.0, proc.stdout
    print(f"ACCEPTANCE PASS  viewer loop (byte-identical masks, monotone "
          f"counts, worst latency {worst:.0f} ms)")
