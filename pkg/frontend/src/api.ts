/** Thin typed client over the session service HTTP endpoints. */

import type {
  FeedbackPayload,
  JustificationGraphPayload,
  RevisionPayload,
  StepResponse,
} from "./types.js";

export interface CreateSessionOptions {
  scenario: string;
  theory?: string;
  advisor?: "scripted" | "remote";
  advisorTimeout?: number;
  seed?: number;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

type FetchLike = typeof fetch;

export class ApiClient {
  constructor(
    public readonly baseUrl: string,
    private readonly fetchFn: FetchLike = fetch,
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const response = await this.fetchFn(this.baseUrl + path, init);
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = (await response.json()) as { detail?: string };
        if (body.detail) detail = body.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return response;
  }

  async createSession(options: CreateSessionOptions): Promise<string> {
    const response = await this.request("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        scenario: options.scenario,
        theory: options.theory ?? null,
        advisor: options.advisor ?? "scripted",
        advisor_timeout: options.advisorTimeout ?? 0,
        seed: options.seed ?? 0,
      }),
    });
    const body = (await response.json()) as { session_id: string };
    return body.session_id;
  }

  async step(sessionId: string): Promise<StepResponse> {
    const response = await this.request(`/sessions/${sessionId}/step`, {
      method: "POST",
    });
    return (await response.json()) as StepResponse;
  }

  async submitFeedback(
    sessionId: string,
    feedback: FeedbackPayload,
  ): Promise<RevisionPayload> {
    const response = await this.request(`/sessions/${sessionId}/feedback`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(feedback),
    });
    const body = (await response.json()) as { revision: RevisionPayload };
    return body.revision;
  }

  async getTheory(sessionId: string): Promise<string> {
    const response = await this.request(`/sessions/${sessionId}/theory`);
    return await response.text();
  }

  async getJustification(
    sessionId: string,
    step: number,
  ): Promise<JustificationGraphPayload> {
    const response = await this.request(
      `/sessions/${sessionId}/justification/${step}`,
    );
    return (await response.json()) as JustificationGraphPayload;
  }

  eventsUrl(sessionId: string): string {
    return `${this.baseUrl}/sessions/${sessionId}/events`;
  }
}
