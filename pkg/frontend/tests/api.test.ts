import { describe, expect, it } from "vitest";

import { Api, ApiError, buildQuery, newRequestId } from "../src/api.js";

function fetchStub(script: Array<"network-error" | { status: number; body: unknown }>) {
  const calls: Array<{ url: string; init?: RequestInit }> = [];
  const impl = (async (url: string, init?: RequestInit) => {
    calls.push({ url, init });
    const step = script.shift();
    if (step === undefined) throw new Error("fetch script exhausted");
    if (step === "network-error") throw new TypeError("fetch failed");
    return {
      ok: step.status < 400,
      status: step.status,
      statusText: String(step.status),
      json: async () => step.body,
    } as Response;
  }) as typeof fetch;
  return { impl, calls };
}

describe("query building", () => {
  it("drops empty params and encodes values", () => {
    expect(buildQuery({ split: "validation", category: undefined })).toBe("?split=validation");
    expect(buildQuery({})).toBe("");
    expect(buildQuery({ category: "a b" })).toBe("?category=a%20b");
  });
});

describe("request ids", () => {
  it("are unique per call", () => {
    const a = newRequestId();
    const b = newRequestId();
    expect(a).not.toBe(b);
  });
});

describe("evaluation submission", () => {
  it("retries transport failures with the same request id and body", async () => {
    const { impl, calls } = fetchStub(["network-error", { status: 200, body: { seq: 7 } }]);
    const api = new Api("", impl);
    const out = await api.submitEvaluation(
      { id: "s1", score: 7, category: "brain", request_id: "rid-1" },
      3,
      1,
    );
    expect(out.seq).toBe(7);
    expect(calls).toHaveLength(2);
    expect(calls[0].init?.body).toBe(calls[1].init?.body);
    expect(JSON.parse(String(calls[0].init?.body)).request_id).toBe("rid-1");
  });

  it("does not retry server verdicts", async () => {
    const { impl, calls } = fetchStub([{ status: 400, body: { detail: "score out of range" } }]);
    const api = new Api("", impl);
    await expect(
      api.submitEvaluation({ id: "s1", score: 7, request_id: "rid-2" }, 3, 1),
    ).rejects.toThrow(ApiError);
    expect(calls).toHaveLength(1);
  });

  it("gives up after the attempt budget", async () => {
    const { impl, calls } = fetchStub(["network-error", "network-error", "network-error"]);
    const api = new Api("", impl);
    await expect(
      api.submitEvaluation({ id: "s1", score: 3, request_id: "rid-3" }, 3, 1),
    ).rejects.toThrow();
    expect(calls).toHaveLength(3);
  });
});

describe("pinned proposals", () => {
  it("posts the genotype list with the source tag", async () => {
    const { impl, calls } = fetchStub([{ status: 200, body: { proposals: [], stats: null } }]);
    const api = new Api("", impl);
    await api.proposePinned([0.1, 0.2], "map-cell");
    const body = JSON.parse(String(calls[0].init?.body));
    expect(body.strategy).toBe("pinned");
    expect(body.params.genotypes).toEqual([[0.1, 0.2]]);
    expect(body.params.source).toBe("map-cell");
  });
});
