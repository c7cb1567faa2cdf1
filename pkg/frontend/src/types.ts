/** Wire types for the gateway HTTP+JSON API. */

export const SCHEMA_VERSION = 1;

export type Cell = string | null;

export interface ColumnPayload {
  source: string;
  name: string;
  semantic_type: string | null;
}

export interface OutputPayload {
  columns: ColumnPayload[];
  rows: Cell[][];
}

export interface SuggestionPayload {
  id: string;
  kind: "row_completion" | "type_label" | "query";
  score: number;
  preview_columns: string[];
  preview_rows: Cell[][];
  source_id: string | null;
  column: number | null;
  type_id: string | null;
  query_id: string | null;
}

export interface SessionState {
  schema_version: number;
  mode: "import" | "integration";
  tabs: Record<string, Cell[][]>;
  output: OutputPayload | null;
  active_query: string | null;
  suggestions: SuggestionPayload[];
}

export interface SchemaAttribute {
  name: string;
  position: number;
  semantic_type: string | null;
}

export interface IngestResult {
  schema_version: number;
  source_id: string;
  rows: number;
  schema: SchemaAttribute[];
}

export interface ProvNode {
  id: string;
  kind: "leaf" | "join" | "service_call" | "union_branch" | "alt";
  label: string;
  [key: string]: unknown;
}

export interface ProvEdge {
  source: string;
  target: string;
  kind: "join" | "service_call" | "union" | "alt";
  arrow: boolean;
}

export interface ProvGraph {
  schema_version: number;
  root: string;
  nodes: ProvNode[];
  edges: ProvEdge[];
}

export interface FeedbackOptions {
  keptRows?: Cell[][];
  removedRows?: Cell[][];
  idempotencyKey?: string;
}
