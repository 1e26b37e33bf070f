/** Browser entry point: wires the session view model, live stream, theory
 * pane, justification view, and the feedback form into the page. */

import { ApiClient } from "./api.js";
import {
  buildFeedbackPayload,
  parseSignatures,
  validateFeedback,
  type FeedbackForm,
} from "./feedback.js";
import { buildGraphView, renderGraphSvg } from "./graph.js";
import { ConsoleSession } from "./session.js";
import { SseClient } from "./sse.js";
import { renderRecord, renderTerminalBanner } from "./stream.js";
import type { TraceRecord } from "./types.js";

interface Elements {
  feed: HTMLElement;
  theory: HTMLElement;
  graph: HTMLElement;
  form: HTMLFormElement;
  formErrors: HTMLElement;
  revisionReport: HTMLElement;
}

function requireElement<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el as T;
}

export async function mountConsole(baseUrl: string, scenario: string): Promise<void> {
  const elements: Elements = {
    feed: requireElement("feed"),
    theory: requireElement("theory"),
    graph: requireElement("graph"),
    form: requireElement<HTMLFormElement>("feedback-form"),
    formErrors: requireElement("feedback-errors"),
    revisionReport: requireElement("revision-report"),
  };

  const api = new ApiClient(baseUrl);
  const sessionId = await api.createSession({ scenario, advisor: "remote" });
  const session = new ConsoleSession(api, sessionId);
  await session.refreshTheory();
  elements.theory.textContent = session.theoryText;

  const redrawFeed = () => {
    let html = session.records.map(renderRecord).join("\n");
    if (session.ended) html += renderTerminalBanner(session.halted);
    elements.feed.innerHTML = html;
  };

  const showJustification = async (step: number) => {
    const payload = await api.getJustification(sessionId, step);
    elements.graph.innerHTML = renderGraphSvg(buildGraphView(payload));
  };

  const sse = new SseClient(api.eventsUrl(sessionId));
  void sse.run(async (event) => {
    const needsTheory = session.applyEvent(event);
    redrawFeed();
    if (needsTheory) {
      await session.refreshTheory();
      elements.theory.textContent = session.theoryText;
    }
    if (event.event === "record") {
      const record = event.data as TraceRecord;
      await showJustification(record.step);
    }
  });

  elements.form.addEventListener("submit", (submitEvent) => {
    submitEvent.preventDefault();
    void (async () => {
      const data = new FormData(elements.form);
      const matText = String(data.get("expected_mat") ?? "");
      const matMatch = matText.match(/^(\w+)(?:\(([^)]*)\))?$/);
      const atomText = String(data.get("reason_atom") ?? "");
      const atomMatch = atomText.match(/^(\w+)(?:\(([^)]*)\))?$/);
      const splitArgs = (raw: string | undefined) =>
        raw === undefined || raw.trim() === ""
          ? []
          : raw.split(",").map((s) => s.trim());
      const form: FeedbackForm = {
        step: Number(data.get("step") ?? 0),
        criticizedAction: String(data.get("criticized_action") ?? ""),
        expectedMat: {
          name: matMatch?.[1] ?? matText,
          args: splitArgs(matMatch?.[2]),
        },
        reasonAtoms: [
          {
            predicate: atomMatch?.[1] ?? atomText,
            args: splitArgs(atomMatch?.[2]),
          },
        ],
        connective: "and",
      };
      const signatures = parseSignatures(session.theoryText);
      const result = validateFeedback(form, signatures);
      if (!result.ok) {
        elements.formErrors.textContent = Object.values(result.errors).join("; ");
        return; // inline error, no request
      }
      elements.formErrors.textContent = "";
      const revision = await api.submitFeedback(sessionId, buildFeedbackPayload(form));
      const lines: string[] = [`blame: ${revision.blame}`];
      if (revision.added_default) lines.push(`+ rule ${revision.added_default}`);
      for (const [lower, higher] of revision.added_priorities) {
        lines.push(`+ prefer ${higher} > ${lower}`);
      }
      if (revision.forwarded) lines.push("forwarded to the executor; theory unchanged");
      elements.revisionReport.textContent = lines.join("\n");
      await session.refreshTheory();
      elements.theory.textContent = session.theoryText;
    })();
  });
}
