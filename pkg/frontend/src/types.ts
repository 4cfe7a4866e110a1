// Shared types between the viewer UI, the API layer, and the scripted loop.

export type ChannelMode = "color" | "feature-pca" | "alpha" | "mask-overlay";

export interface OrbitView {
  azimuth: number;
  elevation: number;
  radius: number;
  w: number;
  h: number;
  // when set, the service uses this dataset camera instead of orbit params
  cameraIndex?: number;
}

export interface Histogram {
  edges: number[];
  counts: number[];
}

export interface SelectResponse {
  count: number;
  token: string;
  t: number;
  theta: number;
  query_feature: number[] | null;
  histogram: Histogram;
  mask_base64: string;
}

export interface TimelineResponse {
  token: string;
  t: number;
  count: number;
  mask_base64: string;
}

export interface SceneMeta {
  count: number;
  feature_dim: number;
  time_range: [number, number];
  iteration: number;
  cameras: { index: number; time: number; width: number; height: number }[];
}

// Minimal structural image type so overlay math is testable without DOM.
export interface RgbaImage {
  data: Uint8ClampedArray;
  width: number;
  height: number;
}
