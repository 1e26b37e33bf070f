/** Client-side session state: cached step records, theory text, and the
 * live event subscription feeding both. */

import type { ApiClient } from "./api.js";
import type { RevisionPayload, SessionEvent, TraceRecord } from "./types.js";

export interface RevisionNotice {
  step: number;
  revision: RevisionPayload;
}

export class ConsoleSession {
  /** Step records ordered by step number. */
  readonly records: TraceRecord[] = [];
  /** Canonical theory text as last fetched from the service. */
  theoryText = "";
  /** Steps the service asked the advisor to review. */
  readonly advisorRequests: number[] = [];
  readonly revisions: RevisionNotice[] = [];
  ended = false;
  halted = false;

  constructor(
    private readonly api: ApiClient,
    readonly sessionId: string,
  ) {}

  async refreshTheory(): Promise<string> {
    this.theoryText = await this.api.getTheory(this.sessionId);
    return this.theoryText;
  }

  recordForStep(step: number): TraceRecord | undefined {
    return this.records.find((r) => r.step === step);
  }

  private insertRecord(record: TraceRecord): void {
    const existing = this.records.findIndex((r) => r.step === record.step);
    if (existing >= 0) {
      this.records[existing] = record;
      return;
    }
    const at = this.records.findIndex((r) => r.step > record.step);
    if (at < 0) this.records.push(record);
    else this.records.splice(at, 0, record);
  }

  /** Fold one live event into the view model. Returns true when the
   * theory pane must be refreshed (a revision arrived). */
  applyEvent(event: SessionEvent): boolean {
    switch (event.event) {
      case "record": {
        const payload = event.data as TraceRecord & { halted?: boolean; finished?: boolean };
        this.insertRecord(payload);
        // A step can carry an inline (scripted or blocking) revision.
        return payload.revision !== null && payload.revision !== undefined;
      }
      case "advisor_request": {
        const payload = event.data as { step: number };
        this.advisorRequests.push(payload.step);
        return false;
      }
      case "revision": {
        const payload = event.data as RevisionNotice;
        this.revisions.push(payload);
        return true;
      }
      case "end": {
        const payload = event.data as { halted: boolean };
        this.ended = true;
        this.halted = payload.halted;
        return false;
      }
      default:
        return false;
    }
  }
}
