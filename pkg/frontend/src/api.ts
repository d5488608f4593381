import type {
  AdviceItem,
  ApiErrorBody,
  CheckpointInfo,
  ConditionDto,
  GuidanceWeightsDto,
  RunResult,
  SceneSummary,
  SessionInfo,
  WorkflowResult,
} from "./types.js";

export type FetchLike = (
  input: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<{ ok: boolean; status: number; json(): Promise<unknown> }>;

/** Error raised for any non-2xx backend response, carrying the wire code. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export interface RunRequest {
  steps?: number;
  weights?: GuidanceWeightsDto;
  negative?: ConditionDto | null;
  checkpoints?: number[];
  seed?: number | null;
}

/**
 * Thin typed client over the studio backend. All numeric results come from
 * the backend verbatim; the client never post-processes payloads.
 */
export class StudioApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (input, init) =>
      fetch(input, init),
  ) {}

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const init: Parameters<FetchLike>[1] = { method };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const res = await this.fetchImpl(this.baseUrl + path, init);
    const payload = (await res.json()) as unknown;
    if (!res.ok) {
      const err = payload as Partial<ApiErrorBody>;
      throw new ApiError(
        res.status,
        err.code ?? "unknown_error",
        err.message ?? `request failed with status ${res.status}`,
      );
    }
    return payload as T;
  }

  async listCheckpoints(): Promise<CheckpointInfo[]> {
    const out = await this.request<{ checkpoints: CheckpointInfo[] }>(
      "GET",
      "/api/checkpoints",
    );
    return out.checkpoints;
  }

  async listScenes(seed = 0, count = 8): Promise<SceneSummary[]> {
    const out = await this.request<{ scenes: SceneSummary[] }>(
      "GET",
      `/api/scenes?seed=${seed}&count=${count}`,
    );
    return out.scenes;
  }

  createSession(
    checkpointId: string,
    sceneSeed: number,
    condition?: ConditionDto,
  ): Promise<SessionInfo> {
    return this.request<SessionInfo>("POST", "/api/sessions", {
      checkpoint_id: checkpointId,
      scene_seed: sceneSeed,
      ...(condition ? { condition } : {}),
    });
  }

  run(sessionId: string, req: RunRequest = {}): Promise<RunResult> {
    const body: Record<string, unknown> = {};
    if (req.steps !== undefined) body.steps = req.steps;
    if (req.weights !== undefined) body.weights = req.weights;
    if (req.negative != null) body.negative = req.negative;
    if (req.checkpoints !== undefined) body.checkpoints = req.checkpoints;
    if (req.seed != null) body.seed = req.seed;
    return this.request<RunResult>("POST", `/api/sessions/${sessionId}/run`, body);
  }

  async advise(sessionId: string, k = 3): Promise<AdviceItem[]> {
    const out = await this.request<{ negatives: AdviceItem[] }>(
      "POST",
      `/api/sessions/${sessionId}/advise`,
      { k },
    );
    return out.negatives;
  }

  workflow(
    sessionId: string,
    req: { k?: number; steps?: number; weights?: GuidanceWeightsDto; seed?: number } = {},
  ): Promise<WorkflowResult> {
    return this.request<WorkflowResult>(
      "POST",
      `/api/sessions/${sessionId}/workflow`,
      req,
    );
  }
}
