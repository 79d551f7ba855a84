import { describe, expect, it } from "vitest";
import { RequestSequencer } from "../src/sequencer";

function delayed<T>(value: T, ms: number): Promise<T> {
  return new Promise((resolve) => setTimeout(() => resolve(value), ms));
}

describe("RequestSequencer", () => {
  it("hands out increasing tickets per endpoint", () => {
    const seq = new RequestSequencer();
    expect(seq.next("a")).toBe(1);
    expect(seq.next("a")).toBe(2);
    expect(seq.next("b")).toBe(1);
  });

  it("discards a slow response that was superseded", async () => {
    const seq = new RequestSequencer();
    const slow = seq.run("posterior", () => delayed("old", 40));
    const fast = seq.run("posterior", () => delayed("new", 5));
    expect(await fast).toBe("new");
    expect(await slow).toBeNull();
  });

  it("keeps the latest response even when it is the slowest", async () => {
    const seq = new RequestSequencer();
    const first = seq.run("posterior", () => delayed("first", 5));
    const second = seq.run("posterior", () => delayed("second", 40));
    expect(await first).toBeNull();
    expect(await second).toBe("second");
  });

  it("tracks endpoints independently", async () => {
    const seq = new RequestSequencer();
    const a = seq.run("a", () => delayed("a1", 30));
    const b = seq.run("b", () => delayed("b1", 5));
    expect(await a).toBe("a1");
    expect(await b).toBe("b1");
  });
});
