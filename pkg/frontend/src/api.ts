export type Candidate = { word: string; logprob: number };

export type CompleteRequest = {
  src: string;
  leftContext: string;
  rightContext: string;
  typed: string;
  topK?: number;
  hardPrefix?: boolean;
};

export type CompleteResponse = {
  candidates: Candidate[];
  truncated: boolean;
  latencyMs: number;
};

export type HealthResponse = {
  status: "ok" | "loading";
  modelId: string | null;
  vocabSize: number | null;
};

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ServiceError extends Error {
  readonly status: number;
  readonly code: string;

  constructor(status: number, code: string) {
    super(`service error ${status}: ${code}`);
    this.status = status;
    this.code = code;
  }
}

/** Thin client for the completion service; the base URL is the only setting. */
export class CompletionClient {
  private readonly baseUrl: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl: string, fetchFn: FetchLike = (...a) => fetch(...a)) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.fetchFn = fetchFn;
  }

  async complete(req: CompleteRequest, signal?: AbortSignal): Promise<CompleteResponse> {
    const body: Record<string, unknown> = {
      src: req.src,
      left_context: req.leftContext,
      right_context: req.rightContext,
      typed: req.typed,
    };
    if (req.topK !== undefined) body.top_k = req.topK;
    if (req.hardPrefix !== undefined) body.hard_prefix = req.hardPrefix;
    const resp = await this.fetchFn(`${this.baseUrl}/v1/complete`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
      signal,
    });
    if (!resp.ok) throw new ServiceError(resp.status, await errorCode(resp));
    const data = await resp.json();
    return {
      candidates: data.candidates as Candidate[],
      truncated: Boolean(data.truncated),
      latencyMs: Number(data.latency_ms),
    };
  }

  async health(): Promise<HealthResponse> {
    const resp = await this.fetchFn(`${this.baseUrl}/v1/health`);
    if (!resp.ok) throw new ServiceError(resp.status, await errorCode(resp));
    const data = await resp.json();
    return {
      status: data.status,
      modelId: data.model_id ?? null,
      vocabSize: data.vocab_size ?? null,
    };
  }
}

async function errorCode(resp: Response): Promise<string> {
  try {
    const data = await resp.json();
    if (data && typeof data.code === "string") return data.code;
  } catch {
    // fall through to a generic code
  }
  return "unknown";
}
