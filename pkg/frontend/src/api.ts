/** Thin client over the service endpoints; every UI state transition goes
 * through these calls and nothing else. */

import type {
  FramesDelta,
  FramesFull,
  ReportPayload,
  RunStatus,
  RunToken,
  TreePayload,
} from "./types.js";

export class ApiError extends Error {
  readonly status: number;
  readonly errorName: string;

  constructor(status: number, errorName: string, detail: string) {
    super(detail || errorName);
    this.status = status;
    this.errorName = errorName;
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function parseError(response: Response): Promise<ApiError> {
  let name = `HTTP ${response.status}`;
  let detail = "";
  try {
    const body = (await response.json()) as { error?: string; detail?: string };
    if (body.error) name = body.error;
    if (body.detail) detail = body.detail;
  } catch {
    // non-JSON error body: keep the status text
    detail = response.statusText;
  }
  return new ApiError(response.status, name, detail);
}

export class ApiClient {
  readonly baseUrl: string;
  private readonly fetchImpl: FetchLike;

  constructor(baseUrl: string, fetchImpl?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.fetchImpl = fetchImpl ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      throw await parseError(response);
    }
    return (await response.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  getTree(): Promise<TreePayload> {
    return this.request<TreePayload>("/tree");
  }

  createSimulation(body: {
    spec: unknown;
    params?: unknown;
    seeds?: Record<string, number>;
    checkpoint_interval?: number;
  }): Promise<{ root_id: string }> {
    return this.post("/simulations", body);
  }

  branchNode(
    nodeId: string,
    body: { at_step: number; overrides?: unknown; annotations?: unknown[] },
  ): Promise<{ node_id: string }> {
    return this.post(`/nodes/${nodeId}/branch`, body);
  }

  runNode(nodeId: string, until: number, incremental = false): Promise<RunToken> {
    return this.post(`/nodes/${nodeId}/run`, { until, incremental });
  }

  getRun(token: string): Promise<RunStatus> {
    return this.request<RunStatus>(`/runs/${token}`);
  }

  /** Poll a run token until it leaves the running state. */
  async pollRun(
    token: string,
    opts: { intervalMs?: number; timeoutMs?: number } = {},
  ): Promise<RunStatus> {
    const interval = opts.intervalMs ?? 150;
    const deadline = Date.now() + (opts.timeoutMs ?? 60_000);
    for (;;) {
      const status = await this.getRun(token);
      if (status.status !== "running") {
        return status;
      }
      if (Date.now() > deadline) {
        throw new ApiError(0, "PollTimeout", `run ${token} still running`);
      }
      await new Promise((resolve) => setTimeout(resolve, interval));
    }
  }

  getFrames(nodeId: string, from: number, to: number): Promise<FramesFull> {
    return this.request<FramesFull>(
      `/nodes/${nodeId}/frames?from=${from}&to=${to}&delta=false`,
    );
  }

  getFrameDeltas(nodeId: string, from: number, to: number): Promise<FramesDelta> {
    return this.request<FramesDelta>(
      `/nodes/${nodeId}/frames?from=${from}&to=${to}&delta=true`,
    );
  }

  probe(nodeId: string, x: number, y: number, step: number): Promise<{ value: number }> {
    return this.request<{ value: number }>(
      `/nodes/${nodeId}/probe?x=${x}&y=${y}&step=${step}`,
    );
  }

  getReport(): Promise<ReportPayload> {
    return this.request<ReportPayload>("/report");
  }
}
