import { describe, expect, it } from "vitest";

import type { ConfidenceOrderDto, SpecimenDto } from "../src/api.js";
import { flattenGroups, orderedIds, outlineColor } from "../src/grid.js";

function specimen(id: string, confidence: number, predicted = "g"): SpecimenDto {
  return {
    id,
    image: null,
    genotype: Array(12).fill(0.5),
    score: null,
    category: null,
    split: "unassigned",
    prediction: {
      labels: ["g", "h"],
      distribution: [0.5 + confidence / 2, 0.5 - confidence / 2],
      predicted,
      confidence,
      expected_score: null,
    },
  };
}

const payload: ConfidenceOrderDto = {
  order: "confidence",
  groups: [
    { category: "blobs", specimens: [specimen("b1", 0.9), specimen("b2", 0.4)] },
    { category: "stripes", specimens: [specimen("s1", 0.8), specimen("s2", 0.7), specimen("s3", 0.1)] },
  ],
};

describe("confidence grid", () => {
  it("preserves service ordering byte-for-byte", () => {
    expect(orderedIds(payload)).toEqual(["b1", "b2", "s1", "s2", "s3"]);
  });

  it("never re-sorts: a deliberately shuffled payload stays shuffled", () => {
    const shuffled: ConfidenceOrderDto = {
      order: "confidence",
      groups: [{ category: "g", specimens: [specimen("low", 0.1), specimen("high", 0.9)] }],
    };
    expect(orderedIds(shuffled)).toEqual(["low", "high"]);
  });

  it("carries the group category onto each item", () => {
    const items = flattenGroups(payload);
    expect(items[0].category).toBe("blobs");
    expect(items[4].category).toBe("stripes");
  });

  it("outline color moves from red to green with confidence", () => {
    expect(outlineColor(0)).toBe("hsl(0, 75%, 45%)");
    expect(outlineColor(1)).toBe("hsl(120, 75%, 45%)");
    expect(outlineColor(2)).toBe("hsl(120, 75%, 45%)"); // clamped
  });
});
