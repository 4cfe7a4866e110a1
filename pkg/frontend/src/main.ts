// Browser entry point: orbit the scene, scrub time, click to select, tune
// theta, and watch the mask track through time. All scene math happens
// server-side; this file only wires DOM state to the HTTP API.

import {
  EmptyPixelError,
  base64ToBytes,
  buildRenderUrl,
  fetchMeta,
  fetchTimeline,
  selectClick,
  selectEmbedding,
} from "./api.js";
import { parseQueryEmbedding, DgdqParseError } from "./dgdq.js";
import { compositeMaskOverlay, histogramBars } from "./overlay.js";
import {
  LatestWins,
  ViewerState,
  applySelection,
  clearSelection,
  countsAreMonotone,
  initialState,
  orbitBy,
  setChannel,
  setNotice,
  setOverlayOpacity,
  setTheta,
  setTime,
} from "./state.js";
import type { ChannelMode } from "./types.js";

const BASE = (window as any).DYNSPLAT_SERVICE ?? "http://127.0.0.1:8090";
const SIZE = 512;

const canvas = document.getElementById("view") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const status = document.getElementById("status")!;
const notice = document.getElementById("notice")!;
const histogram = document.getElementById("histogram")!;
const thetaReadout = document.getElementById("theta-counts")!;

let state: ViewerState = initialState(SIZE, SIZE);
const inflight = new LatestWins();

function queryInput(id: string): HTMLInputElement {
  return document.getElementById(id) as HTMLInputElement;
}

async function loadPng(bytes: Uint8Array): Promise<ImageBitmap> {
  return createImageBitmap(new Blob([bytes.slice().buffer], { type: "image/png" }));
}

function imageDataOf(bitmap: ImageBitmap): ImageData {
  const off = document.createElement("canvas");
  off.width = bitmap.width;
  off.height = bitmap.height;
  const c = off.getContext("2d")!;
  c.drawImage(bitmap, 0, 0);
  return c.getImageData(0, 0, bitmap.width, bitmap.height);
}

/** Fetch the frame (and the tracked mask when a selection is live) for the
 * current state; stale responses are dropped. */
async function refresh(): Promise<void> {
  const snapshot = state;
  const channel = snapshot.channel === "mask-overlay" ? "color" : snapshot.channel;
  const result = await inflight.run("frame", async () => {
    const resp = await fetch(buildRenderUrl(BASE, snapshot.view, snapshot.t, channel));
    if (!resp.ok) throw new Error(`render failed: ${resp.status}`);
    const frame = await loadPng(new Uint8Array(await resp.arrayBuffer()));
    let mask: ImageBitmap | null = null;
    if (snapshot.channel === "mask-overlay" && snapshot.selectionToken) {
      const tl = await fetchTimeline(BASE, snapshot.selectionToken, snapshot.t);
      mask = await loadPng(base64ToBytes(tl.mask_base64));
    }
    return { frame, mask };
  });
  if (!result) return; // superseded by a newer request
  const { frame, mask } = result;
  canvas.width = frame.width;
  canvas.height = frame.height;
  if (mask) {
    const blended = compositeMaskOverlay(
      imageDataOf(frame), imageDataOf(mask), state.overlayOpacity);
    ctx.putImageData(new ImageData(new Uint8ClampedArray(blended.data),
                                   blended.width, blended.height), 0, 0);
  } else {
    ctx.drawImage(frame, 0, 0);
  }
  renderStatus();
}

function renderStatus(): void {
  const sel = state.selectionCount === null
    ? "no selection"
    : `${state.selectionCount} gaussians selected`;
  status.textContent =
    `az ${state.view.azimuth.toFixed(0)}  el ${state.view.elevation.toFixed(0)}  ` +
    `t ${state.t.toFixed(2)}  theta ${state.theta.toFixed(2)}  ${sel}`;
  notice.textContent = state.notice ?? "";
  const pairs = state.thetaCounts
    .map(([th, n]) => `θ=${th.toFixed(2)}→${n}`)
    .join("  ");
  const mono = countsAreMonotone(state.thetaCounts) ? "" : "  (non-monotone!)";
  thetaReadout.textContent = pairs ? `counts by θ: ${pairs}${mono}` : "";
  if (state.histogram) {
    const bars = histogramBars(state.histogram.counts);
    histogram.innerHTML = bars
      .map((b) => `<span class="bar" style="height:${Math.round(b * 40)}px"></span>`)
      .join("");
  } else {
    histogram.innerHTML = "";
  }
}

async function runClick(pixel: [number, number]): Promise<void> {
  try {
    const resp = await selectClick(BASE, state.view, state.t, state.theta, pixel);
    state = applySelection(state, pixel, resp.token, resp.count, resp.histogram);
  } catch (err) {
    if (err instanceof EmptyPixelError) {
      state = setNotice(state, "nothing under that pixel");
      renderStatus();
      return;
    }
    throw err;
  }
  await refresh();
}

canvas.addEventListener("click", (ev) => {
  const rect = canvas.getBoundingClientRect();
  const px = Math.round(((ev.clientX - rect.left) / rect.width) * canvas.width);
  const py = Math.round(((ev.clientY - rect.top) / rect.height) * canvas.height);
  void runClick([px, py]);
});

queryInput("time").addEventListener("input", (ev) => {
  state = setTime(state, Number((ev.target as HTMLInputElement).value));
  void refresh();
});

queryInput("theta").addEventListener("input", async (ev) => {
  state = setTheta(state, Number((ev.target as HTMLInputElement).value));
  // an active click re-queries at the new granularity with the same pixel
  if (state.selectionPixel) {
    await runClick(state.selectionPixel);
  } else {
    renderStatus();
  }
});

queryInput("opacity").addEventListener("input", (ev) => {
  state = setOverlayOpacity(state, Number((ev.target as HTMLInputElement).value));
  void refresh();
});

for (const mode of ["color", "feature-pca", "alpha", "mask-overlay"]) {
  document.getElementById(`channel-${mode}`)?.addEventListener("click", () => {
    state = setChannel(state, mode as ChannelMode);
    void refresh();
  });
}

document.getElementById("clear")?.addEventListener("click", () => {
  state = clearSelection(state);
  void refresh();
});

queryInput("embedding-file").addEventListener("change", async (ev) => {
  const file = (ev.target as HTMLInputElement).files?.[0];
  if (!file) return;
  try {
    const vec = parseQueryEmbedding(await file.arrayBuffer());
    const resp = await selectEmbedding(
      BASE, state.view, state.t, state.theta, Array.from(vec));
    state = applySelection(state, null, resp.token, resp.count, resp.histogram);
    await refresh();
  } catch (err) {
    if (err instanceof DgdqParseError) {
      state = setNotice(state, `bad query file: ${err.message}`);
      renderStatus();
    } else {
      throw err;
    }
  }
});

window.addEventListener("keydown", (ev) => {
  const step = ev.shiftKey ? 15 : 5;
  if (ev.key === "ArrowLeft") state = orbitBy(state, -step, 0);
  else if (ev.key === "ArrowRight") state = orbitBy(state, step, 0);
  else if (ev.key === "ArrowUp") state = orbitBy(state, 0, step);
  else if (ev.key === "ArrowDown") state = orbitBy(state, 0, -step);
  else return;
  void refresh();
});

void (async () => {
  const meta = await fetchMeta(BASE);
  status.textContent =
    `scene: ${meta.count} gaussians, feature dim ${meta.feature_dim}, ` +
    `iteration ${meta.iteration}`;
  await refresh();
})();
