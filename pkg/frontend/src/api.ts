// HTTP layer over the render service. Every function is a thin, typed
// wrapper; the scripted loop and the browser UI share this module.

import type {
  OrbitView,
  SceneMeta,
  SelectResponse,
  TimelineResponse,
} from "./types.js";

export class EmptyPixelError extends Error {}
export class RequestError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

function viewParams(view: OrbitView): Record<string, string> {
  if (view.cameraIndex !== undefined) {
    return { camera_index: String(view.cameraIndex) };
  }
  return {
    azimuth: String(view.azimuth),
    elevation: String(view.elevation),
    radius: String(view.radius),
    w: String(view.w),
    h: String(view.h),
  };
}

export function buildRenderUrl(
  base: string,
  view: OrbitView,
  t: number,
  channels: "color" | "feature-pca" | "alpha",
): string {
  const params = new URLSearchParams({ ...viewParams(view), t: String(t), channels });
  return `${base}/render?${params.toString()}`;
}

export function buildTimelineUrl(base: string, token: string, t: number): string {
  const params = new URLSearchParams({ selection_token: token, t: String(t) });
  return `${base}/timeline?${params.toString()}`;
}

async function parseFailure(resp: Response): Promise<never> {
  let message = `HTTP ${resp.status}`;
  try {
    const body = await resp.json();
    if (body && typeof body.error === "string") message = body.error;
  } catch {
    // non-JSON error body; keep the status text
  }
  if (resp.status === 422) throw new EmptyPixelError(message);
  throw new RequestError(resp.status, message);
}

export async function fetchMeta(base: string): Promise<SceneMeta> {
  const resp = await fetch(`${base}/meta`);
  if (!resp.ok) await parseFailure(resp);
  return resp.json();
}

export async function selectClick(
  base: string,
  view: OrbitView,
  t: number,
  theta: number,
  pixel: [number, number],
): Promise<SelectResponse> {
  const body = {
    mode: "click",
    pixel,
    view: view.cameraIndex !== undefined
      ? { camera_index: view.cameraIndex }
      : { azimuth: view.azimuth, elevation: view.elevation,
          radius: view.radius, w: view.w, h: view.h },
    t,
    theta,
  };
  const resp = await fetch(`${base}/select`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(body),
  });
  if (!resp.ok) await parseFailure(resp);
  return resp.json();
}

export async function selectEmbedding(
  base: string,
  view: OrbitView,
  t: number,
  theta: number,
  embedding: number[],
): Promise<SelectResponse> {
  const body = {
    mode: "embedding",
    embedding,
    view: view.cameraIndex !== undefined
      ? { camera_index: view.cameraIndex }
      : { azimuth: view.azimuth, elevation: view.elevation,
          radius: view.radius, w: view.w, h: view.h },
    t,
    theta,
  };
  const resp = await fetch(`${base}/select`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(body),
  });
  if (!resp.ok) await parseFailure(resp);
  return resp.json();
}

export async function fetchTimeline(
  base: string,
  token: string,
  t: number,
): Promise<TimelineResponse> {
  const resp = await fetch(buildTimelineUrl(base, token, t));
  if (!resp.ok) await parseFailure(resp);
  return resp.json();
}

export function base64ToBytes(b64: string): Uint8Array {
  if (typeof atob === "function") {
    const bin = atob(b64);
    const out = new Uint8Array(bin.length);
    for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
    return out;
  }
  return new Uint8Array(Buffer.from(b64, "base64"));
}
