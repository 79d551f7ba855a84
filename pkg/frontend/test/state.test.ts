import { describe, expect, it } from "vitest";
import {
  clampLambda,
  initialState,
  selectMask,
  setModelPosterior,
} from "../src/state";
import type { ModelPosterior } from "../src/types";

function posterior(masks: number[][]): ModelPosterior {
  return {
    masks,
    log_probs: masks.map(() => -1),
    median_active: 1,
  };
}

describe("clampLambda", () => {
  it("stays inside [0, 1]", () => {
    expect(clampLambda(-0.5)).toBe(0);
    expect(clampLambda(1.7)).toBe(1);
  });

  it("snaps to the 0.01 slider grid", () => {
    expect(clampLambda(0.123456)).toBeCloseTo(0.12, 12);
    expect(clampLambda(0.875)).toBeCloseTo(0.88, 12);
  });

  it("maps non-finite input to 0", () => {
    expect(clampLambda(NaN)).toBe(0);
  });
});

describe("mask selection invariant", () => {
  it("rejects a mask outside the current posterior", () => {
    let s = initialState();
    s = setModelPosterior(s, posterior([[1, 0, 1]]));
    expect(() => selectMask(s, [0, 1, 1])).toThrow(/not part/);
  });

  it("keeps a selection that survives a refresh", () => {
    let s = initialState();
    s = setModelPosterior(s, posterior([[1, 0, 1], [0, 1, 1]]));
    s = selectMask(s, [0, 1, 1]);
    s = setModelPosterior(s, posterior([[0, 1, 1]]));
    expect(s.selectedMask).toEqual([0, 1, 1]);
  });

  it("drops a selection that vanished from the new payload", () => {
    let s = initialState();
    s = setModelPosterior(s, posterior([[1, 0, 1]]));
    s = selectMask(s, [1, 0, 1]);
    s = setModelPosterior(s, posterior([[0, 1, 1]]));
    expect(s.selectedMask).toBeNull();
    expect(s.paramPosterior).toBeNull();
    expect(s.localPredictive).toBeNull();
  });
});
