import { maskEquation, maskLabel } from "./equations";
import type { Metadata, ModelPosterior, Observation, Predictive } from "./types";

export interface MaskRow {
  mask: number[];
  label: string;
  count: number;
  frequency: number;
  logProb: number;
}

/** Groups sampled masks by bit pattern and returns the top k by empirical
 * frequency; ties break lexicographically on the bit string. */
export function topMasks(payload: ModelPosterior, k = 10): MaskRow[] {
  const groups = new Map<string, MaskRow>();
  payload.masks.forEach((mask, i) => {
    const label = maskLabel(mask);
    const row = groups.get(label);
    if (row) {
      row.count += 1;
    } else {
      groups.set(label, {
        mask,
        label,
        count: 1,
        frequency: 0,
        logProb: payload.log_probs[i],
      });
    }
  });
  const total = payload.masks.length;
  const rows = [...groups.values()];
  for (const row of rows) row.frequency = row.count / total;
  rows.sort((a, b) => b.count - a.count || a.label.localeCompare(b.label));
  return rows.slice(0, k);
}

function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export function renderMaskTable(
  rows: MaskRow[],
  metadata: Metadata,
  selectedLabel: string | null,
): string {
  const body = rows
    .map((row) => {
      const sel = row.label === selectedLabel ? ' class="selected"' : "";
      return (
        `<tr${sel} data-mask="${row.label}">` +
        `<td class="mask-bits">${row.label}</td>` +
        `<td class="mask-freq">${(row.frequency * 100).toFixed(1)}%</td>` +
        `<td class="mask-eq">${esc(maskEquation(row.mask, metadata))}</td>` +
        `</tr>`
      );
    })
    .join("");
  return (
    `<table class="mask-table"><thead><tr>` +
    `<th>mask</th><th>freq</th><th>equation</th>` +
    `</tr></thead><tbody>${body}</tbody></table>`
  );
}

export function renderMedianActive(payload: ModelPosterior): string {
  return `<span class="median-active">median active terms: ${payload.median_active}</span>`;
}

export interface Histogram {
  edges: number[];
  counts: number[];
}

/** Bins values over [lo, hi]; values are clipped into the end bins so the
 * display always spans exactly the prior bounds. */
export function histogram(
  values: number[],
  lo: number,
  hi: number,
  nBins = 24,
): Histogram {
  const edges: number[] = [];
  for (let i = 0; i <= nBins; i++) edges.push(lo + ((hi - lo) * i) / nBins);
  const counts = new Array<number>(nBins).fill(0);
  for (const v of values) {
    let b = Math.floor(((v - lo) / (hi - lo)) * nBins);
    b = Math.min(nBins - 1, Math.max(0, b));
    counts[b] += 1;
  }
  return { edges, counts };
}

export function renderHistogramSvg(
  hist: Histogram,
  title: string,
  width = 240,
  height = 90,
): string {
  const peak = Math.max(1, ...hist.counts);
  const n = hist.counts.length;
  const bars = hist.counts
    .map((c, i) => {
      const h = (c / peak) * (height - 16);
      const x = (i / n) * width;
      return `<rect x="${x.toFixed(1)}" y="${(height - h).toFixed(1)}" width="${(width / n).toFixed(1)}" height="${h.toFixed(1)}"/>`;
    })
    .join("");
  return (
    `<svg class="param-hist" viewBox="0 0 ${width} ${height}" ` +
    `data-title="${esc(title)}">` +
    `<text x="4" y="11">${esc(title)}</text>${bars}</svg>`
  );
}

/** 95% predictive band plus the observed points, drawn in data coordinates
 * mapped to a fixed viewBox. */
export function renderBandSvg(
  grid: number[],
  predictive: Predictive,
  obs: Observation,
  width = 560,
  height = 280,
): string {
  const { lo, hi } = predictive.quantile_band;
  if (lo.length !== grid.length || hi.length !== grid.length) {
    throw new Error("band length does not match the evaluation grid");
  }
  const ys = [...lo, ...hi, ...obs.map((p) => p.y)];
  const xs = [...grid, ...obs.map((p) => p.x)];
  const xMin = Math.min(...xs);
  const xMax = Math.max(...xs);
  const yMin = Math.min(...ys);
  const yMax = Math.max(...ys);
  const sx = (x: number) =>
    ((x - xMin) / Math.max(xMax - xMin, 1e-12)) * (width - 20) + 10;
  const sy = (y: number) =>
    height - 10 - ((y - yMin) / Math.max(yMax - yMin, 1e-12)) * (height - 20);
  const upper = grid.map((x, i) => `${sx(x).toFixed(1)},${sy(hi[i]).toFixed(1)}`);
  const lower = grid
    .map((x, i) => `${sx(x).toFixed(1)},${sy(lo[i]).toFixed(1)}`)
    .reverse();
  const band = `<polygon class="band" points="${upper.join(" ")} ${lower.join(" ")}"/>`;
  const dots = obs
    .map(
      (p) =>
        `<circle class="obs" cx="${sx(p.x).toFixed(1)}" cy="${sy(p.y).toFixed(1)}" r="2.5"/>`,
    )
    .join("");
  return (
    `<svg class="predictive" viewBox="0 0 ${width} ${height}">` +
    band +
    dots +
    `</svg>`
  );
}

export function renderBanner(message: string | null): string {
  if (message === null) return "";
  return `<div class="banner" role="alert">${esc(message)}</div>`;
}
