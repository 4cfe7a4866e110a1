// Viewer state and pure transition helpers. The UI and the scripted loop
// both drive this; the service holds all scene state, so replaying the same
// (pixel, theta, t) inputs reproduces the same masks.

import type { ChannelMode, Histogram, OrbitView } from "./types.js";

export interface ViewerState {
  view: OrbitView;
  t: number;
  theta: number;
  overlayOpacity: number;
  channel: ChannelMode;
  selectionToken: string | null;
  selectionCount: number | null;
  selectionPixel: [number, number] | null;
  histogram: Histogram | null;
  notice: string | null;
  // (theta, count) pairs surfaced to the user; monotonicity made visible
  thetaCounts: [number, number][];
}

export function initialState(w = 512, h = 512): ViewerState {
  return {
    view: { azimuth: 30, elevation: 15, radius: 3.2, w, h },
    t: 0,
    theta: 0.7,
    overlayOpacity: 0.5,
    channel: "color",
    selectionToken: null,
    selectionCount: null,
    selectionPixel: null,
    histogram: null,
    notice: null,
    thetaCounts: [],
  };
}

const clamp = (v: number, lo: number, hi: number) =>
  Math.min(hi, Math.max(lo, v));

export function setTime(s: ViewerState, t: number): ViewerState {
  return { ...s, t: clamp(t, 0, 1) };
}

export function setTheta(s: ViewerState, theta: number): ViewerState {
  return { ...s, theta: clamp(theta, -1, 1) };
}

export function setChannel(s: ViewerState, channel: ChannelMode): ViewerState {
  return { ...s, channel };
}

export function setOverlayOpacity(s: ViewerState, o: number): ViewerState {
  return { ...s, overlayOpacity: clamp(o, 0, 1) };
}

export function orbitBy(s: ViewerState, dAz: number, dEl: number): ViewerState {
  const view = {
    ...s.view,
    azimuth: (s.view.azimuth + dAz + 360) % 360,
    elevation: clamp(s.view.elevation + dEl, -80, 80),
  };
  delete view.cameraIndex; // manual orbiting leaves the dataset camera
  return { ...s, view };
}

export function applySelection(
  s: ViewerState,
  pixel: [number, number] | null,
  token: string,
  count: number,
  histogram: Histogram,
): ViewerState {
  const thetaCounts = s.thetaCounts
    .filter(([th]) => th !== s.theta)
    .concat([[s.theta, count]])
    .sort((a, b) => a[0] - b[0]);
  return {
    ...s,
    selectionToken: token,
    selectionCount: count,
    selectionPixel: pixel,
    histogram,
    notice: null,
    channel: "mask-overlay",
    thetaCounts,
  };
}

export function clearSelection(s: ViewerState): ViewerState {
  return {
    ...s,
    selectionToken: null,
    selectionCount: null,
    selectionPixel: null,
    histogram: null,
    thetaCounts: [],
    channel: s.channel === "mask-overlay" ? "color" : s.channel,
  };
}

export function setNotice(s: ViewerState, notice: string): ViewerState {
  // non-modal: selection and view stay untouched
  return { ...s, notice };
}

/** Counts must never grow as theta rises; surfaced in the theta readout. */
export function countsAreMonotone(thetaCounts: [number, number][]): boolean {
  const sorted = [...thetaCounts].sort((a, b) => a[0] - b[0]);
  for (let i = 1; i < sorted.length; i++) {
    if (sorted[i][1] > sorted[i - 1][1]) return false;
  }
  return true;
}

/** Drop-stale-responses guard: only the latest request per key may apply. */
export class LatestWins {
  private seq = new Map<string, number>();

  next(key: string): number {
    const n = (this.seq.get(key) ?? 0) + 1;
    this.seq.set(key, n);
    return n;
  }

  isCurrent(key: string, ticket: number): boolean {
    return this.seq.get(key) === ticket;
  }

  /** Runs the fetcher; resolves null when a newer request superseded it. */
  async run<T>(key: string, fetcher: () => Promise<T>): Promise<T | null> {
    const ticket = this.next(key);
    const result = await fetcher();
    return this.isCurrent(key, ticket) ? result : null;
  }
}
