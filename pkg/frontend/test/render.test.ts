// @vitest-environment jsdom
import { describe, expect, it } from "vitest";

import { buildExplanation } from "../src/explanation.js";
import { GridModel } from "../src/model.js";
import { renderBlockingBanner, renderExplanation, renderWorkbench } from "../src/render.js";
import type { ProvGraph } from "../src/types.js";
import { emptyState, suggestion } from "./helpers.js";

function root(): HTMLElement {
  const el = document.createElement("div");
  document.body.appendChild(el);
  return el;
}

describe("renderWorkbench", () => {
  it("marks suggested cells distinctly from accepted cells", () => {
    const model = new GridModel();
    model.recordPaste("shelters", 0, 1);
    model.applyState(
      emptyState({
        tabs: { shelters: [["row0"], ["row1"]] },
        suggestions: [suggestion({ preview_rows: [["extra"]] })],
      }),
    );
    const container = root();
    renderWorkbench(model, container);
    const cells = [...container.querySelectorAll("td.cell")];
    expect(cells.map((c) => c.className)).toEqual([
      "cell pasted",
      "cell accepted",
      "cell suggested",
    ]);
    const suggested = container.querySelector("td.cell.suggested") as HTMLElement;
    expect(suggested.title).toBe("score 0.5");
  });

  it("renders suggestions in server order with no client re-ranking", () => {
    const model = new GridModel();
    model.applyState(
      emptyState({
        suggestions: [suggestion({ id: "zz-first" }), suggestion({ id: "aa-second" })],
      }),
    );
    const container = root();
    renderWorkbench(model, container);
    const ids = [...container.querySelectorAll("li.suggestion")].map(
      (li) => (li as HTMLElement).dataset.suggestionId,
    );
    expect(ids).toEqual(["zz-first", "aa-second"]);
  });

  it("shows the output tab with column headers and types", () => {
    const model = new GridModel();
    model.applyState(
      emptyState({
        output: {
          columns: [{ source: "zipsvc", name: "zip", semantic_type: "zip" }],
          rows: [["33068"]],
        },
      }),
    );
    const container = root();
    renderWorkbench(model, container);
    const header = container.querySelector("th.column-header") as HTMLElement;
    expect(header.textContent).toBe("zip");
    expect(header.dataset.semanticType).toBe("zip");
  });

  it("caps rendered rows for very large tabs", () => {
    const model = new GridModel();
    model.applyState(
      emptyState({ tabs: { big: Array.from({ length: 500 }, (_, i) => [`r${i}`]) } }),
    );
    const container = root();
    renderWorkbench(model, container);
    expect(container.querySelectorAll("td.cell").length).toBe(200);
  });
});

describe("renderExplanation", () => {
  it("draws arrows only into service-call nodes", () => {
    const graph: ProvGraph = {
      schema_version: 1,
      root: "n2",
      nodes: [
        { id: "n0", kind: "leaf", label: "shelters" },
        { id: "n1", kind: "leaf", label: "contacts" },
        { id: "n2", kind: "join", label: "rl:contacts~shelters" },
        { id: "n3", kind: "service_call", label: "zipsvc" },
      ],
      edges: [
        { source: "n0", target: "n2", kind: "join", arrow: false },
        { source: "n1", target: "n2", kind: "join", arrow: false },
        { source: "n2", target: "n3", kind: "service_call", arrow: true },
      ],
    };
    const container = root();
    renderExplanation(buildExplanation(graph), container);
    expect(container.querySelectorAll("li.prov-node").length).toBe(4);
    const arrows = [...container.querySelectorAll("li.prov-edge.arrow")];
    expect(arrows.map((a) => a.textContent)).toEqual(["n2 → n3"]);
    expect(container.querySelectorAll("li.prov-edge").length).toBe(3);
  });
});

describe("renderBlockingBanner", () => {
  it("replaces the grid with a blocking banner", () => {
    const container = root();
    container.appendChild(document.createElement("table"));
    renderBlockingBanner("schema mismatch", container);
    expect(container.querySelector("table")).toBeNull();
    expect(container.querySelector(".banner.blocking")?.textContent).toBe("schema mismatch");
  });
});
