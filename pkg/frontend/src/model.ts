/** Client-side mirror of the session grid.
 *
 * The model is never authoritative: every field is (re)filled from a
 * server state payload, and `snapshot()` re-serializes it so callers
 * can prove the rendered grid equals the server's session state.
 */

import { Cell, OutputPayload, SessionState, SuggestionPayload } from "./types.js";

export type CellState = "pasted" | "suggested" | "accepted";

export interface GridSnapshot {
  mode: string;
  tabs: Record<string, Cell[][]>;
  output: OutputPayload | null;
  active_query: string | null;
  suggestions: string[];
}

export class GridModel {
  mode: "import" | "integration" = "import";
  tabs = new Map<string, Cell[][]>();
  output: OutputPayload | null = null;
  activeQuery: string | null = null;
  /** Server order preserved verbatim; the client never re-ranks. */
  suggestions: SuggestionPayload[] = [];

  private pastedRows = new Map<string, Set<number>>();

  /** Mark the next `count` rows of a tab as user-pasted (call before
   * applying the paste response, with the tab's pre-paste length). */
  recordPaste(origin: string, startRow: number, count: number): void {
    const set = this.pastedRows.get(origin) ?? new Set<number>();
    for (let i = 0; i < count; i += 1) {
      set.add(startRow + i);
    }
    this.pastedRows.set(origin, set);
  }

  applyState(state: SessionState): void {
    this.mode = state.mode;
    this.tabs = new Map(Object.entries(state.tabs));
    this.output = state.output;
    this.activeQuery = state.active_query;
    this.suggestions = state.suggestions;
  }

  applySuggestions(suggestions: SuggestionPayload[]): void {
    this.suggestions = suggestions;
  }

  cellState(tab: string, row: number): CellState {
    return this.pastedRows.get(tab)?.has(row) ? "pasted" : "accepted";
  }

  /** Row-completion previews that belong to a given tab, server order. */
  rowSuggestionsFor(tab: string): SuggestionPayload[] {
    return this.suggestions.filter(
      (s) => s.kind === "row_completion" && s.source_id === tab,
    );
  }

  snapshot(): GridSnapshot {
    const tabs: Record<string, Cell[][]> = {};
    for (const key of [...this.tabs.keys()].sort()) {
      tabs[key] = (this.tabs.get(key) ?? []).map((row) => [...row]);
    }
    return {
      mode: this.mode,
      tabs,
      output: this.output,
      active_query: this.activeQuery,
      suggestions: this.suggestions.map((s) => s.id),
    };
  }
}
