/** Browser entry point: wires the controller to a page with
 * `#workbench` and `#explanation` containers and a paste listener on
 * the grid. The gateway base URL comes from `data-gateway` on <body>
 * (default: same origin).
 */

import { GatewayClient, SchemaMismatchError } from "./api.js";
import { WorkbenchController } from "./controller.js";
import { renderBlockingBanner, renderInlineError, renderExplanation, renderWorkbench } from "./render.js";

function parseClipboard(text: string): string[][] {
  return text
    .split(/\r?\n/)
    .filter((line) => line.trim() !== "")
    .map((line) => line.split("\t"));
}

export async function boot(doc: Document): Promise<void> {
  const gridRoot = doc.getElementById("workbench");
  const explanationRoot = doc.getElementById("explanation");
  if (gridRoot === null || explanationRoot === null) {
    throw new Error("missing #workbench / #explanation containers");
  }
  const base = doc.body.dataset.gateway ?? "";
  const client = new GatewayClient(base);
  const controller = new WorkbenchController(client);

  const redraw = (): void => renderWorkbench(controller.model, gridRoot);
  const guard = async (action: () => Promise<void>): Promise<void> => {
    try {
      await action();
      redraw();
    } catch (err) {
      if (err instanceof SchemaMismatchError) {
        renderBlockingBanner(err.message, gridRoot);
      } else {
        renderInlineError(err instanceof Error ? err.message : String(err), explanationRoot);
      }
    }
  };

  await guard(async () => {
    await controller.start();
    await controller.refresh();
  });

  gridRoot.addEventListener("paste", (event) => {
    const clipboard = (event as ClipboardEvent).clipboardData?.getData("text/plain") ?? "";
    const cells = parseClipboard(clipboard);
    if (cells.length === 0) {
      return;
    }
    const origin =
      gridRoot.querySelector<HTMLElement>(".tab-panel.active")?.dataset.tab ?? "unattributed";
    void guard(() => controller.paste(cells, origin));
  });

  gridRoot.addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    const suggestion = target.closest<HTMLElement>("[data-suggestion-id]");
    if (suggestion?.dataset.suggestionId !== undefined) {
      const verdict = (event as MouseEvent).altKey ? "reject" : "accept";
      const id = suggestion.dataset.suggestionId;
      void guard(() =>
        verdict === "accept" ? controller.accept(id) : controller.reject(id),
      );
      return;
    }
    const row = target.closest("tr");
    const panel = target.closest<HTMLElement>(".tab-panel.output");
    if (row !== null && panel !== null && row.parentElement !== null) {
      const index = Array.from(row.parentElement.children).indexOf(row);
      void (async () => {
        try {
          renderExplanation(await controller.explain(index), explanationRoot);
        } catch (err) {
          renderInlineError(err instanceof Error ? err.message : String(err), explanationRoot);
        }
      })();
    }
  });
}
