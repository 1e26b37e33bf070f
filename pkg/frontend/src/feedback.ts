/** Schema-driven feedback form.
 *
 * The form constrains its inputs to the signatures declared by the
 * session's theory (fetched as canonical text from GET /theory), so the
 * advisor can never submit a free-text reason the service would reject
 * for shape reasons. Validation errors are surfaced inline and block the
 * request entirely.
 */

import type { FeedbackPayload } from "./types.js";

export interface TheorySignatures {
  /** reason predicate name -> arity */
  reasons: Record<string, number>;
  /** MAT name -> arity */
  mats: Record<string, number>;
}

/** Extract declared signatures from canonical theory text.
 *
 * Relevant lines look like `reason D/1` and `mat report(X) := F reported(X)`.
 */
export function parseSignatures(theoryText: string): TheorySignatures {
  const reasons: Record<string, number> = {};
  const mats: Record<string, number> = {};
  for (const rawLine of theoryText.split("\n")) {
    const line = rawLine.trim();
    let match = line.match(/^reason\s+([A-Za-z_]\w*)\s*\/\s*(\d+)$/);
    if (match) {
      reasons[match[1]!] = Number(match[2]!);
      continue;
    }
    match = line.match(/^mat\s+([A-Za-z_]\w*)\s*(\(([^)]*)\))?\s*:=/);
    if (match) {
      const args = (match[3] ?? "").trim();
      mats[match[1]!] = args === "" ? 0 : args.split(",").length;
    }
  }
  return { reasons, mats };
}

export interface ReasonAtomInput {
  predicate: string;
  args: string[];
}

export interface FeedbackForm {
  step: number;
  criticizedAction: string;
  expectedMat: { name: string; args: string[] };
  /** Atoms joined by one connective; a single atom ignores the connective. */
  reasonAtoms: ReasonAtomInput[];
  connective: "and" | "or";
}

export interface ValidationResult {
  ok: boolean;
  /** field -> inline message */
  errors: Record<string, string>;
}

const CONSTANT = /^[a-z_]\w*$/;

function checkTerm(term: string): string | null {
  if (!CONSTANT.test(term)) {
    return `"${term}" is not a ground constant (lowercase identifier)`;
  }
  return null;
}

export function validateFeedback(
  form: FeedbackForm,
  signatures: TheorySignatures,
): ValidationResult {
  const errors: Record<string, string> = {};
  if (!Number.isInteger(form.step) || form.step < 1) {
    errors["step"] = "step must be a positive integer";
  }
  if (form.criticizedAction.trim() === "") {
    errors["criticizedAction"] = "criticized action is required";
  }

  const mat = form.expectedMat;
  const matArity = signatures.mats[mat.name];
  if (matArity === undefined) {
    errors["expectedMat"] = `unknown MAT "${mat.name}"`;
  } else if (matArity !== mat.args.length) {
    errors["expectedMat"] =
      `MAT "${mat.name}" expects ${matArity} argument(s), got ${mat.args.length}`;
  } else {
    for (const arg of mat.args) {
      const problem = checkTerm(arg);
      if (problem) {
        errors["expectedMat"] = problem;
        break;
      }
    }
  }

  if (form.reasonAtoms.length === 0) {
    errors["reason"] = "at least one reason atom is required";
  }
  form.reasonAtoms.forEach((atom, i) => {
    const key = `reason.${i}`;
    const arity = signatures.reasons[atom.predicate];
    if (arity === undefined) {
      errors[key] = `unknown reason predicate "${atom.predicate}"`;
      return;
    }
    if (arity !== atom.args.length) {
      errors[key] =
        `predicate "${atom.predicate}" expects ${arity} argument(s), got ${atom.args.length}`;
      return;
    }
    for (const arg of atom.args) {
      const problem = checkTerm(arg);
      if (problem) {
        errors[key] = problem;
        return;
      }
    }
  });

  return { ok: Object.keys(errors).length === 0, errors };
}

function atomText(atom: ReasonAtomInput): string {
  return atom.args.length === 0
    ? atom.predicate
    : `${atom.predicate}(${atom.args.join(", ")})`;
}

/** Serialize a validated form into the wire payload for POST /feedback. */
export function buildFeedbackPayload(form: FeedbackForm): FeedbackPayload {
  const mat = form.expectedMat;
  const joiner = form.connective === "and" ? " & " : " | ";
  return {
    step: form.step,
    criticized_action: form.criticizedAction,
    expected_mat:
      mat.args.length === 0 ? mat.name : `${mat.name}(${mat.args.join(", ")})`,
    reason: form.reasonAtoms.map(atomText).join(joiner),
  };
}
