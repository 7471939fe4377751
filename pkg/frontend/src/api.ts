/** Typed client for the speciescope JSON API.
 *
 * Every number the UI shows comes from these responses; nothing is
 * predicted client-side.  Evaluation submissions carry a client-generated
 * request id and retries reuse it, so a flaky network can never produce a
 * duplicate ledger entry.
 */

export interface SpecimenDto {
  id: string;
  image: string | null;
  genotype: number[];
  score: number | null;
  category: string | null;
  split: string;
  prediction?: PredictionDto;
}

export interface PredictionDto {
  labels: string[];
  distribution: number[];
  predicted: string;
  confidence: number;
  expected_score: number | null;
}

export interface ConfidenceGroupDto {
  category: string;
  specimens: SpecimenDto[];
}

export interface ConfidenceOrderDto {
  order: "confidence";
  groups: ConfidenceGroupDto[];
}

export interface EmbeddingDto {
  ids: string[];
  points: [number, number][];
  final_kl: number;
  config: { perplexity: number; epsilon: number } | null;
  categories: (string | null)[] | null;
  scores: (number | null)[] | null;
  bands: (number | null)[] | null;
}

export interface MapDto {
  base: number[];
  dim_x: number;
  dim_y: number;
  ranges: [number, number][];
  resolution: [number, number];
  target: "category" | "score";
  labels: string[][] | null;
  confidence: number[][] | null;
  scores: number[][] | null;
  png: string;
}

export interface ProposalDto {
  genotype: number[];
  strategy: string;
  provenance: Record<string, unknown>;
  predicted: unknown;
  phenotype: string;
  predicted_category?: PredictionDto;
}

export interface JobDto {
  job_id: string;
  kind: string;
  state: "queued" | "running" | "done" | "failed";
  progress: number;
  result_ref: string | null;
  error: string | null;
}

export interface EvaluationSubmission {
  id: string;
  score: number;
  category?: string | null;
  request_id: string;
}

type FetchLike = typeof fetch;

let requestCounter = 0;

/** Unique-enough idempotency token; stable within one page session. */
export function newRequestId(): string {
  requestCounter += 1;
  const rand =
    typeof crypto !== "undefined" && "randomUUID" in crypto
      ? crypto.randomUUID()
      : Math.random().toString(36).slice(2);
  return `ui-${rand}-${requestCounter}`;
}

export function buildQuery(params: Record<string, string | number | undefined>): string {
  const parts = Object.entries(params)
    .filter(([, v]) => v !== undefined && v !== "")
    .map(([k, v]) => `${encodeURIComponent(k)}=${encodeURIComponent(String(v))}`);
  return parts.length ? `?${parts.join("&")}` : "";
}

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
  }
}

export class Api {
  constructor(
    private base: string = "",
    private fetchImpl: FetchLike = fetch,
  ) {}

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(this.base + path, init);
    const body = await response.json().catch(() => ({}));
    if (!response.ok) {
      throw new ApiError(response.status, (body as { detail?: string }).detail ?? response.statusText);
    }
    return body as T;
  }

  specimens(params: { split?: string; category?: string } = {}): Promise<{ specimens: SpecimenDto[] }> {
    return this.json(`/api/specimens${buildQuery(params)}`);
  }

  confidenceGrid(): Promise<ConfidenceOrderDto> {
    return this.json(`/api/specimens?order=confidence`);
  }

  specimen(id: string): Promise<SpecimenDto> {
    return this.json(`/api/specimens/${encodeURIComponent(id)}`);
  }

  categories(): Promise<{ census: Record<string, number> }> {
    return this.json(`/api/categories`);
  }

  /** Submit an evaluation, retrying transport failures with the SAME
   * request id so the ledger sees at most one entry. */
  async submitEvaluation(
    submission: EvaluationSubmission,
    attempts = 3,
    backoffMs = 250,
  ): Promise<{ seq: number }> {
    let lastError: unknown;
    for (let attempt = 0; attempt < attempts; attempt++) {
      try {
        return await this.json(`/api/evaluations`, {
          method: "POST",
          headers: { "content-type": "application/json" },
          body: JSON.stringify(submission),
        });
      } catch (err) {
        if (err instanceof ApiError) throw err; // server verdicts are final
        lastError = err;
        if (attempt + 1 < attempts) {
          await new Promise((resolve) => setTimeout(resolve, backoffMs * (attempt + 1)));
        }
      }
    }
    throw lastError;
  }

  embedding(space: "genotype" | "feature"): Promise<EmbeddingDto> {
    return this.json(`/api/embedding${buildQuery({ space })}`);
  }

  map(params: {
    base_id: string;
    dim_x: number;
    dim_y: number;
    res?: number;
    target?: "category" | "score";
  }): Promise<MapDto> {
    return this.json(`/api/maps${buildQuery(params)}`);
  }

  propose(
    strategy: string,
    n: number,
    params: Record<string, unknown> = {},
  ): Promise<{ proposals: ProposalDto[]; stats: unknown }> {
    return this.json(`/api/proposals`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ strategy, n, params }),
    });
  }

  /** Render + predict one explicit genotype (a clicked map cell). */
  proposePinned(genotype: number[], source: string): Promise<{ proposals: ProposalDto[] }> {
    return this.propose("pinned", 1, { genotypes: [genotype], source });
  }

  startJob(kind: string, params: Record<string, unknown>): Promise<JobDto> {
    return this.json(`/api/jobs`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ kind, params }),
    });
  }

  job(jobId: string): Promise<JobDto> {
    return this.json(`/api/jobs/${encodeURIComponent(jobId)}`);
  }

  async pollJob(jobId: string, intervalMs = 500, timeoutMs = 120_000): Promise<JobDto> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const job = await this.job(jobId);
      if (job.state === "done" || job.state === "failed") return job;
      if (Date.now() > deadline) throw new Error(`job ${jobId} timed out`);
      await new Promise((resolve) => setTimeout(resolve, intervalMs));
    }
  }
}
