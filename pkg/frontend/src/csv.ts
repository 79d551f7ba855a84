import type { Observation } from "./types";

/** Parses an observation CSV with header x,y. */
export function parseObservationCsv(text: string): Observation {
  const lines = text.split(/\r?\n/).filter((l) => l.trim().length > 0);
  if (lines.length === 0) {
    throw new Error("empty file");
  }
  const header = lines[0].split(",").map((h) => h.trim());
  if (header.length !== 2 || header[0] !== "x" || header[1] !== "y") {
    throw new Error("expected CSV header 'x,y'");
  }
  return lines.slice(1).map((line, i) => {
    const cells = line.split(",");
    const x = Number(cells[0]);
    const y = Number(cells[1]);
    if (cells.length !== 2 || !Number.isFinite(x) || !Number.isFinite(y)) {
      throw new Error(`bad row ${i + 2}: ${line}`);
    }
    return { x, y };
  });
}
