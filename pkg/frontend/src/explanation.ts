/** Tuple-explanation view over a provenance graph payload.
 *
 * Directed arrows appear only on dependent-join (service call) edges;
 * alternative derivations surface as parallel branches meeting at the
 * alt node.
 */

import { ProvEdge, ProvGraph, ProvNode } from "./types.js";

export class ExplanationError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ExplanationError";
  }
}

export interface ExplanationView {
  root: string;
  nodes: ProvNode[];
  edges: ProvEdge[];
  /** node ids of each parallel branch feeding an alt node, keyed by alt id */
  altBranches: Map<string, string[]>;
}

export function buildExplanation(graph: ProvGraph): ExplanationView {
  const ids = new Set(graph.nodes.map((n) => n.id));
  if (!ids.has(graph.root)) {
    throw new ExplanationError(`root ${graph.root} is not among the payload nodes`);
  }
  for (const edge of graph.edges) {
    if (!ids.has(edge.source) || !ids.has(edge.target)) {
      throw new ExplanationError(`edge ${edge.source}->${edge.target} references unknown nodes`);
    }
    if (edge.arrow && edge.kind !== "service_call") {
      throw new ExplanationError(`arrow on non-service edge ${edge.source}->${edge.target}`);
    }
    if (!edge.arrow && edge.kind === "service_call") {
      throw new ExplanationError(`service edge ${edge.source}->${edge.target} missing its arrow`);
    }
  }
  const altBranches = new Map<string, string[]>();
  for (const node of graph.nodes) {
    if (node.kind === "alt") {
      altBranches.set(
        node.id,
        graph.edges.filter((e) => e.kind === "alt" && e.target === node.id).map((e) => e.source),
      );
    }
  }
  return { root: graph.root, nodes: graph.nodes, edges: graph.edges, altBranches };
}
