/** Live step feed rendering: one card per trace record, straight off the
 * wire payload. Guard rejections are highlighted; a conflict badge shows
 * when the justification recorded conflicting defaults. */

import type { TraceRecord } from "./types.js";

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function chip(text: string, cls: string): string {
  return `<span class="chip ${cls}">${escapeHtml(text)}</span>`;
}

/** Observation digest: first line, clipped. */
export function observationDigest(observation: string, maxLength = 80): string {
  const firstLine = observation.split("\n")[0] ?? "";
  return firstLine.length <= maxLength ? firstLine : firstLine.slice(0, maxLength - 1) + "…";
}

export function renderRecord(record: TraceRecord): string {
  const parts: string[] = [];
  parts.push(`<article class="step-card" data-step="${record.step}">`);
  parts.push(`<header>step ${record.step}</header>`);
  parts.push(
    `<p class="observation">${escapeHtml(observationDigest(record.observation))}</p>`,
  );
  parts.push(
    `<p class="facts">${record.facts.map((f) => chip(f, "fact")).join("")}</p>`,
  );

  if (record.phi_perm.kind === "unconstrained") {
    parts.push(`<p class="phi unconstrained">unconstrained</p>`);
  } else {
    const badge =
      record.justification.conflicts.length > 0
        ? `<span class="badge conflict">conflict</span>`
        : "";
    parts.push(
      `<p class="phi">${record.phi_perm.mats.map((m) => chip(m, "mat")).join("")}${badge}</p>`,
    );
  }

  parts.push(`<ol class="proposals">`);
  record.proposals.forEach((proposal, i) => {
    const verdict = record.verdicts[i];
    const rejected = verdict !== undefined && verdict.kind === "reject";
    const cls = rejected ? "proposal rejected" : "proposal accepted";
    const why =
      rejected && verdict.reason
        ? ` <span class="why">${escapeHtml(verdict.reason)}</span>`
        : "";
    parts.push(
      `<li class="${cls}">${escapeHtml(proposal.action)} — ${verdict ? verdict.kind : "pending"}${why}</li>`,
    );
  });
  parts.push(`</ol>`);

  if (record.executed !== null) {
    parts.push(`<p class="executed">executed: ${escapeHtml(record.executed)}</p>`);
    parts.push(
      `<p class="labels">${record.labels.map((l) => chip(l, "label")).join("")}</p>`,
    );
  } else {
    parts.push(`<p class="executed none">nothing executed</p>`);
  }
  parts.push(`</article>`);
  return parts.join("\n");
}

/** Banner shown once the session stops being steppable. */
export function renderTerminalBanner(halted: boolean): string {
  return halted
    ? `<div class="banner halted">Session halted: containment breach — no conforming action remained.</div>`
    : `<div class="banner finished">Episode finished.</div>`;
}
