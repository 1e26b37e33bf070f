/** Server-sent events client built on fetch streaming.
 *
 * Works both in browsers and under node (no EventSource dependency).
 * Reconnects with exponential backoff on stream loss and resumes from
 * the last event id: the service replays its whole per-session event
 * list, so already-delivered ids are dropped client-side.
 */

import type { SessionEvent } from "./types.js";

/** Incremental parser for the text/event-stream wire format. */
export class SseParser {
  private buffer = "";
  private dataLines: string[] = [];
  private eventType = "";
  private eventId = "";

  /** Feed a chunk of stream text; returns any events completed by it. */
  push(chunk: string): SessionEvent[] {
    this.buffer += chunk.replace(/\r\n/g, "\n");
    const events: SessionEvent[] = [];
    let newline: number;
    while ((newline = this.buffer.indexOf("\n")) >= 0) {
      const line = this.buffer.slice(0, newline);
      this.buffer = this.buffer.slice(newline + 1);
      if (line === "") {
        const event = this.flush();
        if (event) events.push(event);
        continue;
      }
      if (line.startsWith(":")) continue; // comment / keep-alive
      const colon = line.indexOf(":");
      const field = colon < 0 ? line : line.slice(0, colon);
      let value = colon < 0 ? "" : line.slice(colon + 1);
      if (value.startsWith(" ")) value = value.slice(1);
      if (field === "data") this.dataLines.push(value);
      else if (field === "event") this.eventType = value;
      else if (field === "id") this.eventId = value;
    }
    return events;
  }

  private flush(): SessionEvent | null {
    if (this.dataLines.length === 0 && this.eventType === "") return null;
    const raw = this.dataLines.join("\n");
    let data: unknown = raw;
    try {
      data = JSON.parse(raw);
    } catch {
      // leave non-JSON payloads as raw text
    }
    const event: SessionEvent = {
      id: this.eventId === "" ? -1 : Number(this.eventId),
      event: this.eventType || "message",
      data,
    };
    this.dataLines = [];
    this.eventType = "";
    this.eventId = "";
    return event;
  }
}

/** Exponential backoff with a cap; pure so tests can enumerate it. */
export function backoffDelayMs(attempt: number, baseMs = 250, capMs = 8000): number {
  return Math.min(capMs, baseMs * 2 ** attempt);
}

export interface SseClientOptions {
  fetchFn?: typeof fetch;
  sleep?: (ms: number) => Promise<void>;
  maxRetries?: number;
  baseDelayMs?: number;
}

const defaultSleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

export class SseClient {
  private readonly fetchFn: typeof fetch;
  private readonly sleep: (ms: number) => Promise<void>;
  private readonly maxRetries: number;
  private readonly baseDelayMs: number;
  private lastSeenId = -1;
  private stopped = false;

  constructor(
    private readonly url: string,
    options: SseClientOptions = {},
  ) {
    this.fetchFn = options.fetchFn ?? fetch;
    this.sleep = options.sleep ?? defaultSleep;
    this.maxRetries = options.maxRetries ?? 20;
    this.baseDelayMs = options.baseDelayMs ?? 250;
  }

  stop(): void {
    this.stopped = true;
  }

  /** Consume the stream until an `end` event, stop(), or retries run out.
   * Events already seen before a reconnect are not re-delivered. */
  async run(onEvent: (event: SessionEvent) => void): Promise<void> {
    let attempt = 0;
    while (!this.stopped) {
      try {
        const done = await this.consumeOnce(onEvent);
        if (done) return;
        attempt = 0; // connection worked; reset the backoff ladder
      } catch {
        // fall through to backoff
      }
      if (this.stopped) return;
      if (attempt >= this.maxRetries) {
        throw new Error(`SSE stream lost after ${attempt} retries: ${this.url}`);
      }
      await this.sleep(backoffDelayMs(attempt, this.baseDelayMs));
      attempt += 1;
    }
  }

  /** Returns true when the terminal `end` event arrived. */
  private async consumeOnce(onEvent: (event: SessionEvent) => void): Promise<boolean> {
    const response = await this.fetchFn(this.url, {
      headers: {
        accept: "text/event-stream",
        "last-event-id": String(this.lastSeenId),
      },
    });
    if (!response.ok || !response.body) {
      throw new Error(`SSE connect failed: HTTP ${response.status}`);
    }
    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    const parser = new SseParser();
    try {
      while (!this.stopped) {
        const { value, done } = await reader.read();
        if (done) return false;
        for (const event of parser.push(decoder.decode(value, { stream: true }))) {
          if (event.id >= 0 && event.id <= this.lastSeenId) continue; // replayed
          if (event.id >= 0) this.lastSeenId = event.id;
          onEvent(event);
          if (event.event === "end") return true;
        }
      }
      return true;
    } finally {
      await reader.cancel().catch(() => undefined);
    }
  }
}
