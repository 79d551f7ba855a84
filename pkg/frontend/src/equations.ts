import type { ComponentEntry, Metadata } from "./types";

/** Renders a mask as a human-readable additive equation using the component
 * expressions published by the service. Base terms are joined with " + ";
 * the active noise model is appended after "  |  noise: ". */
export function maskEquation(mask: number[], metadata: Metadata): string {
  const lib = metadata.library;
  if (mask.length !== lib.length) {
    throw new Error(
      `mask length ${mask.length} does not match library size ${lib.length}`,
    );
  }
  const base: ComponentEntry[] = [];
  const noise: ComponentEntry[] = [];
  lib.forEach((entry, i) => {
    if (mask[i] === 1) {
      (entry.kind === "base" ? base : noise).push(entry);
    }
  });
  const lhs = base.length > 0 ? base.map((e) => e.expression).join(" + ") : "0";
  const rhs = noise.map((e) => e.expression).join(", ");
  return rhs.length > 0 ? `y = ${lhs}  |  noise: ${rhs}` : `y = ${lhs}`;
}

export function maskLabel(mask: number[]): string {
  return mask.join("");
}
