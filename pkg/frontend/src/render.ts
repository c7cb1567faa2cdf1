/** DOM rendering for the workbench: tabbed grid, suggestion
 * highlighting, suggestion list, explanation pane, error banners.
 *
 * Cell classes: `.cell.pasted`, `.cell.accepted`; suggested previews
 * render as `.cell.suggested` rows/columns, visually distinct from
 * accepted data. Suggestion order on screen equals payload order.
 */

import { ExplanationView } from "./explanation.js";
import { GridModel } from "./model.js";
import { Cell, SuggestionPayload } from "./types.js";

const VIRTUALIZATION_LIMIT = 200;

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

function renderRow(
  doc: Document,
  cells: Cell[],
  cellClass: string,
  tooltip?: string,
): HTMLTableRowElement {
  const tr = doc.createElement("tr");
  for (const value of cells) {
    const td = el(doc, "td", `cell ${cellClass}`, value ?? "");
    if (tooltip !== undefined) {
      td.title = tooltip;
    }
    tr.appendChild(td);
  }
  return tr;
}

function renderTabTable(
  doc: Document,
  model: GridModel,
  tab: string,
  rows: Cell[][],
): HTMLElement {
  const section = el(doc, "section", "tab-panel");
  section.dataset.tab = tab;
  section.appendChild(el(doc, "h2", "tab-title", tab));
  const table = el(doc, "table", "grid");
  const body = doc.createElement("tbody");
  const limit = Math.min(rows.length, VIRTUALIZATION_LIMIT);
  for (let i = 0; i < limit; i += 1) {
    body.appendChild(renderRow(doc, rows[i] ?? [], model.cellState(tab, i)));
  }
  for (const suggestion of model.rowSuggestionsFor(tab)) {
    for (const preview of suggestion.preview_rows) {
      const tr = renderRow(doc, preview, "suggested", `score ${suggestion.score}`);
      tr.dataset.suggestionId = suggestion.id;
      body.appendChild(tr);
    }
  }
  table.appendChild(body);
  section.appendChild(table);
  return section;
}

function renderOutputTab(doc: Document, model: GridModel): HTMLElement | null {
  if (model.output === null) {
    return null;
  }
  const section = el(doc, "section", "tab-panel output");
  section.dataset.tab = "output";
  section.appendChild(el(doc, "h2", "tab-title", "output"));
  const table = el(doc, "table", "grid");
  const head = doc.createElement("thead");
  const headRow = doc.createElement("tr");
  for (const column of model.output.columns) {
    const th = el(doc, "th", "column-header", column.name);
    th.dataset.source = column.source;
    if (column.semantic_type !== null) {
      th.dataset.semanticType = column.semantic_type;
    }
    headRow.appendChild(th);
  }
  head.appendChild(headRow);
  table.appendChild(head);
  const body = doc.createElement("tbody");
  const limit = Math.min(model.output.rows.length, VIRTUALIZATION_LIMIT);
  for (let i = 0; i < limit; i += 1) {
    body.appendChild(renderRow(doc, model.output.rows[i] ?? [], "accepted"));
  }
  table.appendChild(body);
  section.appendChild(table);
  return section;
}

function renderSuggestionList(doc: Document, suggestions: SuggestionPayload[]): HTMLElement {
  const pane = el(doc, "aside", "suggestions");
  const list = doc.createElement("ol");
  for (const suggestion of suggestions) {
    const item = el(doc, "li", `suggestion ${suggestion.kind}`, suggestion.id);
    item.dataset.suggestionId = suggestion.id;
    item.title = `score ${suggestion.score}`;
    list.appendChild(item);
  }
  pane.appendChild(list);
  return pane;
}

export function renderWorkbench(model: GridModel, root: HTMLElement): void {
  const doc = root.ownerDocument;
  root.textContent = "";
  const workbench = el(doc, "div", `workbench mode-${model.mode}`);
  for (const [tab, rows] of model.tabs) {
    workbench.appendChild(renderTabTable(doc, model, tab, rows));
  }
  const output = renderOutputTab(doc, model);
  if (output !== null) {
    workbench.appendChild(output);
  }
  workbench.appendChild(renderSuggestionList(doc, model.suggestions));
  root.appendChild(workbench);
}

export function renderExplanation(view: ExplanationView, root: HTMLElement): void {
  const doc = root.ownerDocument;
  root.textContent = "";
  const pane = el(doc, "div", "explanation");
  const nodeList = doc.createElement("ul");
  for (const node of view.nodes) {
    const item = el(doc, "li", `prov-node ${node.kind}`, node.label);
    item.dataset.nodeId = node.id;
    nodeList.appendChild(item);
  }
  pane.appendChild(nodeList);
  const edgeList = doc.createElement("ul");
  for (const edge of view.edges) {
    const glyph = edge.arrow ? "→" : "—";
    const item = el(
      doc,
      "li",
      edge.arrow ? "prov-edge arrow" : "prov-edge",
      `${edge.source} ${glyph} ${edge.target}`,
    );
    edgeList.appendChild(item);
  }
  pane.appendChild(edgeList);
  root.appendChild(pane);
}

export function renderBlockingBanner(message: string, root: HTMLElement): void {
  const doc = root.ownerDocument;
  root.textContent = "";
  root.appendChild(el(doc, "div", "banner blocking", message));
}

export function renderInlineError(message: string, root: HTMLElement): void {
  const doc = root.ownerDocument;
  root.textContent = "";
  root.appendChild(el(doc, "div", "error-panel", message));
}
