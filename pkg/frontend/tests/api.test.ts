import { afterEach, describe, expect, it, vi } from "vitest";

import { Api, ApiError } from "../src/api.js";

function mockFetch(status: number, body: unknown): ReturnType<typeof vi.fn> {
  const fn = vi.fn(async () => ({
    ok: status >= 200 && status < 300,
    status,
    statusText: `HTTP ${status}`,
    json: async () => body,
  }));
  vi.stubGlobal("fetch", fn);
  return fn;
}

afterEach(() => vi.unstubAllGlobals());

describe("Api", () => {
  it("builds confidence query urls with direction", async () => {
    const fetchMock = mockFetch(200, { node: "a", direction: "ux", candidates: [] });
    const api = new Api("");
    await api.confidences("p1", "a", "ux");
    expect(fetchMock.mock.calls[0][0]).toBe("/projects/p1/confidences?node=a&direction=ux");
  });

  it("posts overrides with revision token and UNMATCHED mapping", async () => {
    const fetchMock = mockFetch(200, { revision: 5, warnings: [] });
    const api = new Api("");
    await api.override("p1", "u_a", null, 4);
    const [, init] = fetchMock.mock.calls[0] as [string, RequestInit];
    expect(JSON.parse(init.body as string)).toEqual({
      ui_node_id: "u_a",
      target: "UNMATCHED",
      revision: 4,
    });
  });

  it("raises ApiError with server detail on failure", async () => {
    mockFetch(409, { detail: "job abc already running" });
    const api = new Api("");
    await expect(api.runMatch("p1")).rejects.toMatchObject({
      status: 409,
      message: "job abc already running",
    });
    await expect(api.runMatch("p1")).rejects.toBeInstanceOf(ApiError);
  });

  it("render url carries mode, source and cache-busting revision", () => {
    const api = new Api("");
    expect(api.renderUrl("p1", "depth", "gameui", 7)).toBe(
      "/projects/p1/render?mode=depth&source=gameui&rev=7",
    );
  });
});
