// Mask overlay compositing on raw RGBA buffers (DOM-free, so the math is
// unit-testable in node).

import type { RgbaImage } from "./types.js";

export const OVERLAY_COLOR: [number, number, number] = [64, 200, 90];

/**
 * Blend the selection mask over a rendered frame. Mask pixels are selected
 * when their red channel is >= 128 (masks arrive as 0/255 grayscale PNGs).
 * Returns a new buffer; inputs are untouched.
 */
export function compositeMaskOverlay(
  frame: RgbaImage,
  mask: RgbaImage,
  opacity: number,
): RgbaImage {
  if (frame.width !== mask.width || frame.height !== mask.height) {
    throw new Error(
      `frame ${frame.width}x${frame.height} vs mask ${mask.width}x${mask.height}`);
  }
  const a = Math.min(1, Math.max(0, opacity));
  const out = new Uint8ClampedArray(frame.data);
  for (let p = 0; p < frame.width * frame.height; p++) {
    if (mask.data[p * 4] < 128) continue;
    for (let c = 0; c < 3; c++) {
      const i = p * 4 + c;
      out[i] = Math.round(frame.data[i] * (1 - a) + OVERLAY_COLOR[c] * a);
    }
  }
  return { data: out, width: frame.width, height: frame.height };
}

/** Normalized histogram bars for the similarity readout, tallest bar = 1. */
export function histogramBars(counts: number[]): number[] {
  const peak = Math.max(1, ...counts);
  return counts.map((c) => c / peak);
}
