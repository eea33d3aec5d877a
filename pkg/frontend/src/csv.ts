import { mkdtempSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { BcpError } from "./cli.js";

/**
 * Serialize a finite number for the core's CSV/JSON surfaces.
 * JavaScript's default formatting is shortest-round-trip decimal, which the
 * core parses back to the identical double.
 */
export function formatNumber(x: number): string {
  if (!Number.isFinite(x)) {
    throw new BcpError(`cannot serialize non-finite value ${x}`);
  }
  return String(x);
}

/** 17-significant-digit form used for bit-level output comparisons. */
export function toPrecision17(x: number): string {
  if (!Number.isFinite(x)) {
    throw new BcpError(`cannot serialize non-finite value ${x}`);
  }
  return x.toPrecision(17);
}

export function checkScoreShape(scores: number[][], labels: number[]): {
  n: number;
  k: number;
} {
  const n = scores.length;
  if (n === 0) {
    throw new BcpError("shape mismatch: scores matrix is empty");
  }
  const k = scores[0].length;
  if (k < 2) {
    throw new BcpError(`shape mismatch: need at least 2 score columns, got ${k}`);
  }
  for (const [i, row] of scores.entries()) {
    if (row.length !== k) {
      throw new BcpError(
        `shape mismatch: score row ${i} has ${row.length} entries, expected ${k}`,
      );
    }
  }
  if (labels.length !== n) {
    throw new BcpError(
      `shape mismatch: ${labels.length} labels for ${n} score rows`,
    );
  }
  return { n, k };
}

/** Score CSV text: header `label,s0,...,s{K-1}`, one row per point, LF endings. */
export function scoresCsv(scores: number[][], labels: number[]): string {
  const { n, k } = checkScoreShape(scores, labels);
  const header = ["label", ...Array.from({ length: k }, (_, i) => `s${i}`)];
  const lines = [header.join(",")];
  for (let i = 0; i < n; i++) {
    if (!Number.isInteger(labels[i])) {
      throw new BcpError(`shape mismatch: label ${labels[i]} at row ${i} is not an integer`);
    }
    lines.push([String(labels[i]), ...scores[i].map(formatNumber)].join(","));
  }
  return lines.join("\n") + "\n";
}

/** Embedding CSV text: header `e0,...,e{d-1}`, row order matching the scores. */
export function embeddingsCsv(points: number[][]): string {
  if (points.length === 0) {
    throw new BcpError("shape mismatch: embedding matrix is empty");
  }
  const d = points[0].length;
  for (const [i, row] of points.entries()) {
    if (row.length !== d) {
      throw new BcpError(
        `shape mismatch: embedding row ${i} has ${row.length} entries, expected ${d}`,
      );
    }
  }
  const header = Array.from({ length: d }, (_, i) => `e${i}`);
  const lines = [header.join(",")];
  for (const row of points) {
    lines.push(row.map(formatNumber).join(","));
  }
  return lines.join("\n") + "\n";
}

/** Scratch directory for the CSV files handed to the core. */
export class ScratchDir {
  readonly path: string;
  private counter = 0;

  constructor() {
    this.path = mkdtempSync(join(tmpdir(), "bcp-bindings-"));
  }

  write(stem: string, text: string): string {
    const file = join(this.path, `${stem}-${this.counter++}.csv`);
    writeFileSync(file, text, { encoding: "utf-8" });
    return file;
  }

  dispose(): void {
    rmSync(this.path, { recursive: true, force: true });
  }
}
