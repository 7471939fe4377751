import { describe, expect, it } from "vitest";

import { BAND_COLORS, bandColor, bandEdges, scoreBand } from "../src/bands.js";

describe("score banding", () => {
  it("matches the server banding for all 11 scores at 6 bands", () => {
    const expected = [0, 0, 1, 1, 2, 2, 3, 3, 4, 4, 5];
    expect(Array.from({ length: 11 }, (_, s) => scoreBand(s))).toEqual(expected);
  });

  it("is the identity at 11 bands", () => {
    expect(Array.from({ length: 11 }, (_, s) => scoreBand(s, 11))).toEqual(
      Array.from({ length: 11 }, (_, s) => s),
    );
  });

  it("produces n+1 edges spanning the score axis", () => {
    const edges = bandEdges(6);
    expect(edges).toHaveLength(7);
    expect(edges[0]).toBe(0);
    expect(edges[6]).toBe(11);
  });

  it("rejects out-of-range scores", () => {
    expect(() => scoreBand(11)).toThrow();
    expect(() => scoreBand(-1)).toThrow();
  });

  it("uses the fixed 6-step palette end to end", () => {
    expect(bandColor(0)).toBe(BAND_COLORS[0]);
    expect(bandColor(10)).toBe(BAND_COLORS[5]);
  });
});
