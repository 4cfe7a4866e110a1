import { afterEach, describe, expect, it, vi } from "vitest";

import {
  EmptyPixelError,
  RequestError,
  base64ToBytes,
  buildRenderUrl,
  buildTimelineUrl,
  fetchTimeline,
  selectClick,
} from "../src/api.js";
import type { OrbitView } from "../src/types.js";

const orbit: OrbitView = { azimuth: 30, elevation: 15, radius: 3.2, w: 512, h: 512 };

afterEach(() => vi.unstubAllGlobals());

describe("url building", () => {
  it("orbit render url carries every view parameter", () => {
    const url = new URL(buildRenderUrl("http://x", orbit, 0.25, "color"));
    expect(url.pathname).toBe("/render");
    expect(url.searchParams.get("azimuth")).toBe("30");
    expect(url.searchParams.get("w")).toBe("512");
    expect(url.searchParams.get("t")).toBe("0.25");
    expect(url.searchParams.get("channels")).toBe("color");
  });

  it("dataset camera view uses camera_index only", () => {
    const view: OrbitView = { ...orbit, cameraIndex: 4 };
    const url = new URL(buildRenderUrl("http://x", view, 0, "alpha"));
    expect(url.searchParams.get("camera_index")).toBe("4");
    expect(url.searchParams.get("azimuth")).toBeNull();
  });

  it("timeline url", () => {
    const url = new URL(buildTimelineUrl("http://x", "abc123", 0.75));
    expect(url.searchParams.get("selection_token")).toBe("abc123");
    expect(url.searchParams.get("t")).toBe("0.75");
  });
});

describe("select", () => {
  it("posts the click payload and parses the response", async () => {
    const fetchMock = vi.fn(async (url: any, init?: any) => {
      expect(String(url)).toBe("http://svc/select");
      const body = JSON.parse(init.body);
      expect(body.mode).toBe("click");
      expect(body.pixel).toEqual([12, 34]);
      expect(body.theta).toBe(0.7);
      expect(body.view.camera_index).toBe(0);
      return new Response(JSON.stringify({
        count: 7, token: "t0", t: 0, theta: 0.7, query_feature: [1],
        histogram: { edges: [], counts: [] }, mask_base64: "",
      }));
    });
    vi.stubGlobal("fetch", fetchMock);
    const view: OrbitView = { ...orbit, cameraIndex: 0 };
    const resp = await selectClick("http://svc", view, 0, 0.7, [12, 34]);
    expect(resp.count).toBe(7);
    expect(fetchMock).toHaveBeenCalledOnce();
  });

  it("maps 422 to EmptyPixelError", async () => {
    vi.stubGlobal("fetch", vi.fn(async () =>
      new Response(JSON.stringify({ error: "EmptyPixel: nothing" }),
                   { status: 422 })));
    await expect(selectClick("http://svc", orbit, 0, 0.7, [0, 0]))
      .rejects.toBeInstanceOf(EmptyPixelError);
  });

  it("maps other failures to RequestError with status", async () => {
    vi.stubGlobal("fetch", vi.fn(async () =>
      new Response(JSON.stringify({ error: "bad theta" }), { status: 400 })));
    const err = await selectClick("http://svc", orbit, 0, 9, [0, 0])
      .catch((e) => e);
    expect(err).toBeInstanceOf(RequestError);
    expect(err.status).toBe(400);
    expect(err.message).toBe("bad theta");
  });
});

describe("timeline", () => {
  it("fetches and parses", async () => {
    vi.stubGlobal("fetch", vi.fn(async () =>
      new Response(JSON.stringify({
        token: "t", t: 0.5, count: 3, mask_base64: "AA==",
      }))));
    const resp = await fetchTimeline("http://svc", "t", 0.5);
    expect(resp.count).toBe(3);
  });
});

describe("base64", () => {
  it("decodes to bytes", () => {
    expect(Array.from(base64ToBytes("AQID"))).toEqual([1, 2, 3]);
  });
});
