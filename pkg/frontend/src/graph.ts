/** Justification graph rendering: grounded defaults as nodes, conflicts
 * as dashed undirected edges, defeats as directed arrows from the winner
 * to the loser. Defeated nodes are visually struck. */

import type { GraphEdgePayload, JustificationGraphPayload } from "./types.js";

export interface GraphNodeView {
  index: number;
  /** e.g. `d1[X=l]` */
  label: string;
  conclusion: string;
  defeated: boolean;
  x: number;
  y: number;
}

export interface GraphEdgeView {
  kind: "conflict" | "defeat";
  /** node indices; for defeats, from = winner, to = loser */
  from: number;
  to: number;
}

export interface GraphView {
  step: number;
  nodes: GraphNodeView[];
  edges: GraphEdgeView[];
  /** Shown instead of the canvas when there is nothing to draw. */
  emptyMessage: string | null;
}

const WIDTH = 480;
const HEIGHT = 360;

/** Deterministic layered layout: undefeated defaults on the top row,
 * defeated ones below them, evenly spaced. */
function position(nodes: { defeated: boolean }[]): { x: number; y: number }[] {
  const rows: number[][] = [[], []];
  nodes.forEach((node, i) => rows[node.defeated ? 1 : 0]!.push(i));
  const coords = new Array<{ x: number; y: number }>(nodes.length);
  rows.forEach((row, rowIndex) => {
    row.forEach((nodeIndex, col) => {
      coords[nodeIndex] = {
        x: Math.round(((col + 1) * WIDTH) / (row.length + 1)),
        y: rowIndex === 0 ? Math.round(HEIGHT / 3) : Math.round((2 * HEIGHT) / 3),
      };
    });
  });
  return coords;
}

function edgeView(edge: GraphEdgePayload): GraphEdgeView {
  if (edge.kind === "conflict") return { kind: "conflict", from: edge.a, to: edge.b };
  return { kind: "defeat", from: edge.from, to: edge.to };
}

export function buildGraphView(payload: JustificationGraphPayload): GraphView {
  const coords = position(payload.nodes);
  const nodes = payload.nodes.map((node, i) => {
    const bindings = Object.entries(node.substitution)
      .map(([variable, constant]) => `${variable}=${constant}`)
      .join(", ");
    return {
      index: node.index,
      label: bindings === "" ? node.source : `${node.source}[${bindings}]`,
      conclusion: node.conclusion,
      defeated: node.defeated,
      x: coords[i]!.x,
      y: coords[i]!.y,
    };
  });
  return {
    step: payload.step,
    nodes,
    edges: payload.edges.map(edgeView),
    emptyMessage:
      nodes.length === 0
        ? "No defaults triggered at this step — the agent was unconstrained."
        : null,
  };
}

function escapeXml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Render the view to a standalone SVG string (snapshot-friendly). */
export function renderGraphSvg(view: GraphView): string {
  if (view.emptyMessage !== null) {
    return (
      `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" ` +
      `class="justification empty"><text x="${WIDTH / 2}" y="${HEIGHT / 2}" ` +
      `text-anchor="middle">${escapeXml(view.emptyMessage)}</text></svg>`
    );
  }
  const byIndex = new Map(view.nodes.map((n) => [n.index, n]));
  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" class="justification">`,
  );
  parts.push(
    `<defs><marker id="arrow" markerWidth="10" markerHeight="8" refX="9" refY="4" orient="auto">` +
      `<path d="M0,0 L10,4 L0,8 z"/></marker></defs>`,
  );
  for (const edge of view.edges) {
    const a = byIndex.get(edge.from)!;
    const b = byIndex.get(edge.to)!;
    if (edge.kind === "conflict") {
      parts.push(
        `<line class="edge conflict" x1="${a.x}" y1="${a.y}" x2="${b.x}" y2="${b.y}" ` +
          `stroke-dasharray="6 4"/>`,
      );
    } else {
      parts.push(
        `<line class="edge defeat" x1="${a.x}" y1="${a.y}" x2="${b.x}" y2="${b.y}" ` +
          `marker-end="url(#arrow)"/>`,
      );
    }
  }
  for (const node of view.nodes) {
    const cls = node.defeated ? "node defeated" : "node";
    parts.push(`<g class="${cls}" data-index="${node.index}">`);
    parts.push(`<circle cx="${node.x}" cy="${node.y}" r="28"/>`);
    parts.push(
      `<text x="${node.x}" y="${node.y}" text-anchor="middle"` +
        (node.defeated ? ` text-decoration="line-through"` : ``) +
        `>${escapeXml(node.label)}</text>`,
    );
    parts.push(
      `<text class="conclusion" x="${node.x}" y="${node.y + 42}" text-anchor="middle"` +
        (node.defeated ? ` text-decoration="line-through"` : ``) +
        `>${escapeXml(node.conclusion)}</text>`,
    );
    parts.push(`</g>`);
  }
  parts.push(`</svg>`);
  return parts.join("\n");
}
