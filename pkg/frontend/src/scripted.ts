// Scripted viewer loop against a live service: one click, a theta sweep,
// and a time sweep, writing every mask to disk so the output can be compared
// byte-for-byte with the CLI segment command. Also reports per-interaction
// latency, including a full-size render.
//
//   node dist/scripted.js --base http://127.0.0.1:8090 \
//     --camera-index 0 --pixel 64,52 --theta 0.7 \
//     --thetas -1,0,0.5,0.9 --times 0,0.25,0.5,0.75,1 --out masks/

import * as fs from "node:fs";
import * as path from "node:path";

import {
  base64ToBytes,
  buildRenderUrl,
  fetchMeta,
  fetchTimeline,
  selectClick,
} from "./api.js";
import { countsAreMonotone } from "./state.js";
import type { OrbitView } from "./types.js";

function arg(name: string, fallback?: string): string {
  const i = process.argv.indexOf(`--${name}`);
  if (i >= 0 && i + 1 < process.argv.length) return process.argv[i + 1];
  if (fallback !== undefined) return fallback;
  throw new Error(`missing --${name}`);
}

async function timed<T>(label: string, fn: () => Promise<T>): Promise<[T, number]> {
  const start = performance.now();
  const value = await fn();
  const ms = performance.now() - start;
  console.log(`${label}: ${ms.toFixed(1)} ms`);
  return [value, ms];
}

async function main(): Promise<number> {
  const base = arg("base");
  const cameraIndex = Number(arg("camera-index", "0"));
  const [px, py] = arg("pixel").split(",").map(Number);
  const theta = Number(arg("theta", "0.7"));
  const thetas = arg("thetas", "-1,0,0.5,0.9").split(",").map(Number);
  const times = arg("times", "0,0.25,0.5,0.75,1").split(",").map(Number);
  const outDir = arg("out");
  const latencySize = Number(arg("latency-size", "512"));
  fs.mkdirSync(outDir, { recursive: true });

  const meta = await fetchMeta(base);
  console.log(`scene: ${meta.count} gaussians, C=${meta.feature_dim}`);
  const view: OrbitView = {
    azimuth: 0, elevation: 0, radius: 3, w: 0, h: 0, cameraIndex,
  };
  const latencies: number[] = [];

  // 1. theta sweep at the click pixel; counts must never grow with theta
  const counts: [number, number][] = [];
  for (const th of [...thetas].sort((a, b) => a - b)) {
    const [resp, ms] = await timed(`select theta=${th}`, () =>
      selectClick(base, view, 0.0, th, [px, py]));
    counts.push([th, resp.count]);
    latencies.push(ms);
  }
  console.log("counts by theta:",
    counts.map(([th, n]) => `${th}=>${n}`).join("  "));
  if (!countsAreMonotone(counts)) {
    console.error("FAIL: selection counts grew with theta");
    return 1;
  }

  // 2. the working selection at the requested theta
  const [selection, selectMs] = await timed(`select theta=${theta}`, () =>
    selectClick(base, view, 0.0, theta, [px, py]));
  latencies.push(selectMs);
  console.log(`selected ${selection.count}, token ${selection.token}`);

  // 3. time sweep: track the selection and persist each mask
  for (const t of times) {
    const [tl, ms] = await timed(`timeline t=${t}`, () =>
      fetchTimeline(base, selection.token, t));
    latencies.push(ms);
    const file = path.join(outDir, `mask_t${t.toFixed(2)}.png`);
    fs.writeFileSync(file, base64ToBytes(tl.mask_base64));
  }
  console.log(`wrote ${times.length} masks to ${outDir}`);

  // 4. a full-size render interaction for the latency budget
  const orbit: OrbitView = {
    azimuth: 30, elevation: 15, radius: 3.2, w: latencySize, h: latencySize,
  };
  const [, renderMs] = await timed(`render ${latencySize}x${latencySize}`,
    async () => {
      const resp = await fetch(buildRenderUrl(base, orbit, 0.5, "color"));
      if (!resp.ok) throw new Error(`render failed: ${resp.status}`);
      await resp.arrayBuffer();
    });
  latencies.push(renderMs);

  const worst = Math.max(...latencies);
  console.log(`worst interaction latency: ${worst.toFixed(1)} ms`);
  return 0;
}

main().then(
  (code) => process.exit(code),
  (err) => {
    console.error("scripted loop failed:", err);
    process.exit(1);
  },
);
