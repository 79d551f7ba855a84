import { describe, expect, it } from "vitest";
import { maskEquation } from "../src/equations";
import type { Metadata, ModelPosterior, Predictive } from "../src/types";
import {
  histogram,
  renderBandSvg,
  renderMaskTable,
  topMasks,
} from "../src/views";

const metadata: Metadata = {
  library: [
    { id: 0, token: "Linear", kind: "base", expression: "a*x", dim: 1, bounds: [[-3, 3]] },
    { id: 1, token: "Quadratic", kind: "base", expression: "b*x^2", dim: 1, bounds: [[-2, 2]] },
    { id: 2, token: "NoiseObserver", kind: "noise", expression: "eps~N(0,s)", dim: 1, bounds: [[0.05, 2]] },
  ],
  lambda_range: [0, 1],
  n_points: 100,
  grid: [0, 1, 2],
  checkpoint_info: { path: null, step: 0, base_count: 2, noise_count: 1 },
};

describe("topMasks", () => {
  it("groups by bit pattern and sorts by frequency", () => {
    const payload: ModelPosterior = {
      masks: [
        [1, 0, 1],
        [0, 1, 1],
        [1, 0, 1],
        [1, 1, 1],
        [1, 0, 1],
      ],
      log_probs: [-1, -2, -1, -3, -1],
      median_active: 1,
    };
    const rows = topMasks(payload);
    expect(rows.map((r) => r.label)).toEqual(["101", "011", "111"]);
    expect(rows[0].frequency).toBeCloseTo(0.6, 12);
    expect(rows[0].count).toBe(3);
  });

  it("truncates to the requested k", () => {
    const masks: number[][] = [];
    for (let i = 0; i < 12; i++) {
      const bits = [0, 0, 0, 0, 1];
      bits[i % 4] = 1;
      masks.push([...bits, ...[i]].slice(0, 5));
    }
    const payload: ModelPosterior = {
      masks,
      log_probs: masks.map(() => -1),
      median_active: 1,
    };
    expect(topMasks(payload, 2)).toHaveLength(2);
  });
});

describe("maskEquation", () => {
  it("joins active base expressions and names the noise model", () => {
    expect(maskEquation([1, 1, 1], metadata)).toBe(
      "y = a*x + b*x^2  |  noise: eps~N(0,s)",
    );
  });

  it("renders the empty base set as 0", () => {
    expect(maskEquation([0, 0, 1], metadata)).toBe("y = 0  |  noise: eps~N(0,s)");
  });

  it("rejects a mask of the wrong length", () => {
    expect(() => maskEquation([1, 0], metadata)).toThrow(/length/);
  });
});

describe("renderMaskTable", () => {
  it("marks the selected row and embeds equations", () => {
    const payload: ModelPosterior = {
      masks: [
        [1, 0, 1],
        [0, 1, 1],
      ],
      log_probs: [-1, -2],
      median_active: 1,
    };
    const html = renderMaskTable(topMasks(payload), metadata, "011");
    expect(html).toContain('data-mask="101"');
    expect(html).toContain('class="selected"');
    expect(html).toContain("a*x");
    expect(html).toContain("b*x^2");
  });
});

describe("histogram", () => {
  it("spans exactly the prior bounds", () => {
    const h = histogram([0.1, 0.2, 2.9], -3, 3, 6);
    expect(h.edges[0]).toBe(-3);
    expect(h.edges[6]).toBe(3);
    expect(h.counts.reduce((a, b) => a + b, 0)).toBe(3);
  });

  it("clips out-of-bound values into the edge bins", () => {
    const h = histogram([-10, 10], 0, 1, 4);
    expect(h.counts[0]).toBe(1);
    expect(h.counts[3]).toBe(1);
  });
});

describe("renderBandSvg", () => {
  const predictive: Predictive = {
    curves: [],
    masks: [],
    quantile_band: { lo: [-1, 0, 1], hi: [1, 2, 3] },
  };

  it("draws the band polygon and the data points", () => {
    const svg = renderBandSvg([0, 1, 2], predictive, [{ x: 0.5, y: 0.5 }]);
    expect(svg).toContain('class="band"');
    expect((svg.match(/class="obs"/g) ?? []).length).toBe(1);
  });

  it("rejects a band that does not match the grid", () => {
    expect(() =>
      renderBandSvg([0, 1], predictive, [{ x: 0, y: 0 }]),
    ).toThrow(/grid/);
  });
});
