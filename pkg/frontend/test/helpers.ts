import type { FetchLike } from "../src/api.js";
import type { SessionState, SuggestionPayload } from "../src/types.js";

export interface RecordedRequest {
  url: string;
  method: string;
  body: unknown;
}

/** Stub fetch returning canned JSON responses in order. */
export function stubFetch(
  responses: Array<{ status?: number; json?: unknown; text?: string; contentType?: string }>,
): { fetch: FetchLike; requests: RecordedRequest[] } {
  const requests: RecordedRequest[] = [];
  let index = 0;
  const impl: FetchLike = async (url, init) => {
    requests.push({
      url,
      method: init?.method ?? "GET",
      body: init?.body !== undefined ? JSON.parse(init.body as string) : undefined,
    });
    const spec = responses[Math.min(index, responses.length - 1)];
    index += 1;
    const isJson = spec?.json !== undefined;
    const body = isJson ? JSON.stringify(spec?.json) : spec?.text ?? "";
    return new Response(body, {
      status: spec?.status ?? 200,
      headers: {
        "content-type": spec?.contentType ?? (isJson ? "application/json" : "text/plain"),
      },
    });
  };
  return { fetch: impl, requests };
}

export function emptyState(overrides: Partial<SessionState> = {}): SessionState {
  return {
    schema_version: 1,
    mode: "import",
    tabs: {},
    output: null,
    active_query: null,
    suggestions: [],
    ...overrides,
  };
}

export function suggestion(overrides: Partial<SuggestionPayload> = {}): SuggestionPayload {
  return {
    id: "rows:shelters:0",
    kind: "row_completion",
    score: 0.5,
    preview_columns: ["name"],
    preview_rows: [["Extra Hall"]],
    source_id: "shelters",
    column: null,
    type_id: null,
    query_id: null,
    ...overrides,
  };
}
