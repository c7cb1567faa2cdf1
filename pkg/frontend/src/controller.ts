/** Orchestrates user actions against the gateway.
 *
 * Each action issues exactly one API call and refreshes the grid model
 * from the response, so the client never holds authoritative state.
 * At most one mutation is in flight per session; duplicate triggers of
 * the same feedback action reuse one idempotency key.
 */

import { GatewayClient, newIdempotencyKey } from "./api.js";
import { buildExplanation, ExplanationView } from "./explanation.js";
import { GridModel } from "./model.js";
import { Cell } from "./types.js";

export class WorkbenchController {
  readonly model = new GridModel();
  private sessionId: string | null = null;
  private mutationInFlight = false;
  private feedbackKeys = new Map<string, string>();

  constructor(private readonly client: GatewayClient) {}

  get session(): string {
    if (this.sessionId === null) {
      throw new Error("no session started");
    }
    return this.sessionId;
  }

  private async mutate<T>(run: () => Promise<T>): Promise<T> {
    if (this.mutationInFlight) {
      throw new Error("another change is still being applied");
    }
    this.mutationInFlight = true;
    try {
      return await run();
    } finally {
      this.mutationInFlight = false;
    }
  }

  async start(): Promise<void> {
    this.sessionId = await this.client.createSession();
  }

  async refresh(): Promise<void> {
    this.model.applyState(await this.client.fetchSession(this.session));
  }

  async paste(cells: Cell[][], origin: string): Promise<void> {
    await this.mutate(async () => {
      const before = this.model.tabs.get(origin)?.length ?? 0;
      const response = await this.client.paste(this.session, cells, origin, newIdempotencyKey());
      this.model.recordPaste(origin, before, cells.length);
      this.model.applyState(response.state);
      this.model.applySuggestions(response.suggestions);
    });
  }

  private async sendFeedback(
    target: string,
    verdict: "accept" | "reject",
    removedRows?: Cell[][],
  ): Promise<void> {
    await this.mutate(async () => {
      let key = this.feedbackKeys.get(`${verdict}:${target}`);
      if (key === undefined) {
        key = newIdempotencyKey();
        this.feedbackKeys.set(`${verdict}:${target}`, key);
      }
      const response = await this.client.feedback(this.session, target, verdict, {
        removedRows,
        idempotencyKey: key,
      });
      this.model.applyState(response.state);
      this.model.applySuggestions(response.suggestions);
    });
  }

  async accept(target: string): Promise<void> {
    await this.sendFeedback(target, "accept");
  }

  async reject(target: string, removedRows?: Cell[][]): Promise<void> {
    await this.sendFeedback(target, "reject", removedRows);
  }

  async switchMode(mode: "import" | "integration"): Promise<void> {
    await this.mutate(async () => {
      this.model.applyState(await this.client.setMode(this.session, mode));
    });
  }

  async refreshSuggestions(): Promise<void> {
    this.model.applySuggestions(await this.client.suggestions(this.session));
  }

  async labelColumn(
    column: number,
    sourceId: string,
    name: string,
    type: string | null,
  ): Promise<void> {
    await this.mutate(async () => {
      this.model.applyState(
        await this.client.labelColumn(this.session, column, sourceId, name, type),
      );
    });
  }

  async explain(row: number): Promise<ExplanationView> {
    return buildExplanation(await this.client.provenance(this.session, row));
  }

  async exportOutput(format: "csv" | "json" | "geojson"): Promise<string> {
    return this.client.exportOutput(this.session, format);
  }
}
