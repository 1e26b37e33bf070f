import { describe, expect, it } from "vitest";
import {
  buildFeedbackPayload,
  parseSignatures,
  validateFeedback,
  type FeedbackForm,
} from "../src/feedback.js";

const THEORY_TEXT = `reason D/1
reason W/1
reason F/1
mat protect(X) := G !disclosed(X)
mat follow(W) := G !intervened
mat report(X) := F reported(X)
rule d1: D(X) => protect(X)
rule d2: W(X) => follow(X)
prefer d2 > d1
conflict protect(X) <> report(Y)
conflict follow(not_i) <> report(X)
`;

const SIGNATURES = parseSignatures(THEORY_TEXT);

function validForm(): FeedbackForm {
  return {
    step: 1,
    criticizedAction: "idle",
    expectedMat: { name: "report", args: ["h"] },
    reasonAtoms: [{ predicate: "F", args: ["h"] }],
    connective: "and",
  };
}

describe("parseSignatures", () => {
  it("collects reason predicate arities", () => {
    expect(SIGNATURES.reasons).toEqual({ D: 1, W: 1, F: 1 });
  });

  it("collects MAT arities from their definitions", () => {
    expect(SIGNATURES.mats).toEqual({ protect: 1, follow: 1, report: 1 });
  });

  it("supports zero-arity declarations", () => {
    const sigs = parseSignatures("reason s/0\nmat halt := G !moved\n");
    expect(sigs.reasons).toEqual({ s: 0 });
    expect(sigs.mats).toEqual({ halt: 0 });
  });
});

describe("validateFeedback", () => {
  it("accepts the canonical protective-disclosure correction", () => {
    expect(validateFeedback(validForm(), SIGNATURES)).toEqual({ ok: true, errors: {} });
  });

  it("rejects an unknown MAT inline", () => {
    const form = validForm();
    form.expectedMat = { name: "escalate", args: ["h"] };
    const result = validateFeedback(form, SIGNATURES);
    expect(result.ok).toBe(false);
    expect(result.errors["expectedMat"]).toMatch(/unknown MAT/);
  });

  it("rejects a MAT arity mismatch inline", () => {
    const form = validForm();
    form.expectedMat = { name: "report", args: [] };
    const result = validateFeedback(form, SIGNATURES);
    expect(result.errors["expectedMat"]).toMatch(/expects 1 argument/);
  });

  it("rejects a reason predicate arity mismatch inline", () => {
    const form = validForm();
    form.reasonAtoms = [{ predicate: "F", args: ["h", "l"] }];
    const result = validateFeedback(form, SIGNATURES);
    expect(result.errors["reason.0"]).toMatch(/expects 1 argument/);
  });

  it("rejects non-ground (uppercase) arguments", () => {
    const form = validForm();
    form.reasonAtoms = [{ predicate: "F", args: ["X"] }];
    const result = validateFeedback(form, SIGNATURES);
    expect(result.errors["reason.0"]).toMatch(/not a ground constant/);
  });

  it("requires at least one reason atom and a criticized action", () => {
    const form = validForm();
    form.reasonAtoms = [];
    form.criticizedAction = " ";
    const result = validateFeedback(form, SIGNATURES);
    expect(result.errors["reason"]).toBeTruthy();
    expect(result.errors["criticizedAction"]).toBeTruthy();
  });
});

describe("buildFeedbackPayload", () => {
  it("serializes a single-atom form", () => {
    expect(buildFeedbackPayload(validForm())).toEqual({
      step: 1,
      criticized_action: "idle",
      expected_mat: "report(h)",
      reason: "F(h)",
    });
  });

  it("joins multiple atoms with the chosen connective", () => {
    const form = validForm();
    form.reasonAtoms = [
      { predicate: "F", args: ["h"] },
      { predicate: "D", args: ["l"] },
    ];
    form.connective = "or";
    expect(buildFeedbackPayload(form).reason).toBe("F(h) | D(l)");
  });
});
