/** Wire types mirroring the session service responses.
 *
 * The console is a pure read-model over these payloads: every rendered
 * field comes verbatim from the service, never from client-side
 * recomputation.
 */

export interface PhiPerm {
  kind: "unconstrained" | "constrained";
  mats: string[];
}

export interface TriggeredDefault {
  source: string;
  substitution: Record<string, string>;
  conclusion: string;
}

export interface JustificationPayload {
  triggered: TriggeredDefault[];
  conflicts: [number, number][];
  defeats: [number, number][];
}

export interface Proposal {
  action: string;
  declared_target: string | null;
  confidence: number | null;
}

export interface Verdict {
  kind: "accept" | "reject";
  action: string;
  reason?: string;
}

export interface FeedbackPayload {
  step: number;
  criticized_action: string;
  expected_mat: string;
  reason: string;
}

export interface RevisionPayload {
  blame: string;
  added_default: string | null;
  added_priorities: [string, string][];
  forwarded: boolean;
}

export interface TraceRecord {
  schema_version: number;
  step: number;
  observation: string;
  facts: string[];
  phi_perm: PhiPerm;
  justification: JustificationPayload;
  proposals: Proposal[];
  verdicts: Verdict[];
  executed: string | null;
  labels: string[];
  feedback: FeedbackPayload | null;
  revision: RevisionPayload | null;
}

export interface StepResponse extends TraceRecord {
  halted: boolean;
  finished: boolean;
}

export interface GraphNodePayload {
  index: number;
  source: string;
  substitution: Record<string, string>;
  conclusion: string;
  defeated: boolean;
}

export type GraphEdgePayload =
  | { kind: "conflict"; a: number; b: number }
  | { kind: "defeat"; from: number; to: number };

export interface JustificationGraphPayload {
  step: number;
  nodes: GraphNodePayload[];
  edges: GraphEdgePayload[];
  phi_perm: PhiPerm;
}

/** One server-sent event as delivered by GET /sessions/{id}/events. */
export interface SessionEvent {
  id: number;
  event: "record" | "advisor_request" | "revision" | "end" | string;
  data: unknown;
}
