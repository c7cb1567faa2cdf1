/** Typed client for the gateway API.
 *
 * Every public method issues exactly one HTTP request and appends the
 * templated route name to `routeLog`, so callers can verify that each
 * user action maps to exactly one documented route.
 */

import {
  Cell,
  FeedbackOptions,
  IngestResult,
  ProvGraph,
  SCHEMA_VERSION,
  SessionState,
  SuggestionPayload,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly code: string,
    message: string,
    public readonly status: number,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export class SchemaMismatchError extends Error {
  constructor(public readonly got: number) {
    super(`server speaks schema version ${got}, client expects ${SCHEMA_VERSION}`);
    this.name = "SchemaMismatchError";
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

let keyCounter = 0;

export function newIdempotencyKey(): string {
  keyCounter += 1;
  return `wk-${Date.now().toString(36)}-${keyCounter}-${Math.random().toString(36).slice(2, 8)}`;
}

export class GatewayClient {
  readonly routeLog: string[] = [];

  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request(
    route: string,
    method: string,
    path: string,
    body?: unknown,
  ): Promise<unknown> {
    this.routeLog.push(route);
    const init: RequestInit = { method, headers: { "content-type": "application/json" } };
    if (body !== undefined) {
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchImpl(this.baseUrl + path, init);
    const contentType = response.headers.get("content-type") ?? "";
    if (!contentType.includes("json")) {
      if (!response.ok) {
        throw new ApiError("upstream_failure", await response.text(), response.status);
      }
      return response.text();
    }
    const payload = (await response.json()) as Record<string, unknown>;
    if (!response.ok || payload.error !== undefined) {
      const err = (payload.error ?? {}) as { code?: string; message?: string };
      throw new ApiError(
        err.code ?? "upstream_failure",
        err.message ?? response.statusText,
        response.status,
      );
    }
    if (
      typeof payload.schema_version === "number" &&
      payload.schema_version !== SCHEMA_VERSION
    ) {
      throw new SchemaMismatchError(payload.schema_version);
    }
    return payload;
  }

  async createSession(): Promise<string> {
    const payload = (await this.request("POST /sessions", "POST", "/sessions")) as {
      session_id: string;
    };
    return payload.session_id;
  }

  async fetchSession(sessionId: string): Promise<SessionState> {
    const payload = (await this.request(
      "GET /sessions/{id}",
      "GET",
      `/sessions/${sessionId}`,
    )) as { state: SessionState };
    return payload.state;
  }

  async paste(
    sessionId: string,
    cells: Cell[][],
    origin: string,
    idempotencyKey?: string,
  ): Promise<{ state: SessionState; suggestions: SuggestionPayload[] }> {
    return (await this.request(
      "POST /sessions/{id}/paste",
      "POST",
      `/sessions/${sessionId}/paste`,
      { cells, origin, idempotency_key: idempotencyKey },
    )) as { state: SessionState; suggestions: SuggestionPayload[] };
  }

  async suggestions(sessionId: string): Promise<SuggestionPayload[]> {
    const payload = (await this.request(
      "GET /sessions/{id}/suggestions",
      "GET",
      `/sessions/${sessionId}/suggestions`,
    )) as { suggestions: SuggestionPayload[] };
    return payload.suggestions;
  }

  async feedback(
    sessionId: string,
    target: string,
    verdict: "accept" | "reject",
    options: FeedbackOptions = {},
  ): Promise<{ state: SessionState; suggestions: SuggestionPayload[] }> {
    return (await this.request(
      "POST /sessions/{id}/feedback",
      "POST",
      `/sessions/${sessionId}/feedback`,
      {
        target,
        verdict,
        kept_rows: options.keptRows,
        removed_rows: options.removedRows,
        idempotency_key: options.idempotencyKey,
      },
    )) as { state: SessionState; suggestions: SuggestionPayload[] };
  }

  async setMode(
    sessionId: string,
    mode: "import" | "integration",
  ): Promise<SessionState> {
    const payload = (await this.request(
      "POST /sessions/{id}/mode",
      "POST",
      `/sessions/${sessionId}/mode`,
      { mode },
    )) as { state: SessionState };
    return payload.state;
  }

  async labelColumn(
    sessionId: string,
    column: number,
    sourceId: string,
    name: string,
    type: string | null,
  ): Promise<SessionState> {
    const payload = (await this.request(
      "POST /sessions/{id}/columns/{col}/label",
      "POST",
      `/sessions/${sessionId}/columns/${column}/label`,
      { source_id: sourceId, name, type },
    )) as { state: SessionState };
    return payload.state;
  }

  async provenance(sessionId: string, row: number): Promise<ProvGraph> {
    return (await this.request(
      "GET /sessions/{id}/rows/{row}/provenance",
      "GET",
      `/sessions/${sessionId}/rows/${row}/provenance`,
    )) as ProvGraph;
  }

  async exportOutput(sessionId: string, format: "csv" | "json" | "geojson"): Promise<string> {
    const route = "GET /sessions/{id}/export";
    this.routeLog.push(route);
    const response = await this.fetchImpl(
      `${this.baseUrl}/sessions/${sessionId}/export?format=${format}`,
      { method: "GET" },
    );
    if (!response.ok) {
      const text = await response.text();
      let code = "upstream_failure";
      let message = text;
      try {
        const parsed = JSON.parse(text) as { error?: { code?: string; message?: string } };
        code = parsed.error?.code ?? code;
        message = parsed.error?.message ?? message;
      } catch {
        // non-JSON error body: keep raw text
      }
      throw new ApiError(code, message, response.status);
    }
    return response.text();
  }

  async ingestSource(
    id: string,
    format: "csv" | "tsv" | "html",
    content: string,
    attributeNames?: string[],
  ): Promise<IngestResult> {
    return (await this.request("POST /sources", "POST", "/sources", {
      id,
      format,
      content,
      attribute_names: attributeNames,
    })) as IngestResult;
  }

  async catalog(): Promise<unknown> {
    return this.request("GET /catalog", "GET", "/catalog");
  }
}
