import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { PlaybackController } from "../src/playback.js";

function jsonResponse(body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status: 200,
    headers: { "Content-Type": "application/json" },
  });
}

/** Fake service: 4 cells, cell 0 counts the step, others stay 0. */
function fakeFetch(input: string): Promise<Response> {
  const url = new URL(input);
  const from = Number(url.searchParams.get("from"));
  const to = Number(url.searchParams.get("to"));
  const delta = url.searchParams.get("delta") === "true";
  const frame = (step: number) => ({ step, cells: [step, 0, 0, 0] });
  if (!delta) {
    const frames = [];
    for (let s = from; s <= to; s += 1) frames.push(frame(s));
    return Promise.resolve(jsonResponse({ frames }));
  }
  const deltas = [];
  for (let s = from + 1; s <= to; s += 1) deltas.push({ step: s, entries: [[0, s]] });
  return Promise.resolve(jsonResponse({ base: frame(from), deltas }));
}

describe("PlaybackController", () => {
  it("loads the base full and folds the rest", async () => {
    const api = new ApiClient("http://fake", fakeFetch);
    const playback = new PlaybackController(api, "r0", 3, 7);
    await playback.load();
    expect(playback.loaded).toBe(true);
    expect(playback.frameAt(3).cells).toEqual([3, 0, 0, 0]);
    expect(playback.frameAt(6).cells).toEqual([6, 0, 0, 0]);
  });

  it("folded frames match full fetches", async () => {
    const api = new ApiClient("http://fake", fakeFetch);
    const playback = new PlaybackController(api, "r0", 0, 5);
    await playback.load();
    for (const step of [0, 2, 5]) {
      const full = await playback.fetchFull(step);
      expect(playback.frameAt(step)).toEqual(full);
    }
  });

  it("rejects steps outside the window and inverted windows", async () => {
    const api = new ApiClient("http://fake", fakeFetch);
    expect(() => new PlaybackController(api, "r0", 9, 2)).toThrow(/inverted/);
    const playback = new PlaybackController(api, "r0", 1, 4);
    await playback.load();
    expect(() => playback.frameAt(9)).toThrow(/outside loaded window/);
  });
});
