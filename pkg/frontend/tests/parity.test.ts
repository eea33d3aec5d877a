// Criterion: binding outputs must be bit-identical to direct CLI use.
// 100 fuzzed inputs go through py_backward/py_loo and, independently,
// through a direct CLI invocation on the same serialized files; outputs are
// compared as exact doubles and as 17-significant-digit strings.

import { mkdtempSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, describe, expect, it } from "vitest";

import {
  py_backward,
  py_loo,
  runCliJson,
  scoresCsv,
  toPrecision17,
  type RuleConfig,
} from "../src/index.js";

// deterministic 32-bit PRNG so the fuzz corpus is reproducible
function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

interface FuzzCase {
  scores: number[][];
  labels: number[];
  testScores: number[];
  rule: RuleConfig;
}

function fuzzCase(rand: () => number): FuzzCase {
  const n = 2 + Math.floor(rand() * 11);
  const k = 2 + Math.floor(rand() * 5);
  const draw = () => Math.exp(2.0 * (rand() - 0.5)) * (0.05 + 4.0 * rand());
  const scores = Array.from({ length: n }, () =>
    Array.from({ length: k }, draw),
  );
  const labels = Array.from({ length: n }, () => Math.floor(rand() * k));
  const testScores = Array.from({ length: k }, draw);
  const cap = 1 + Math.floor(rand() * (k - 1));
  return { scores, labels, testScores, rule: { kind: "constant", t: cap } };
}

const scratch = mkdtempSync(join(tmpdir(), "bcp-parity-"));
let fileCounter = 0;

function writeScratch(text: string): string {
  const file = join(scratch, `case-${fileCounter++}.csv`);
  writeFileSync(file, text, { encoding: "utf-8" });
  return file;
}

afterAll(() => {
  rmSync(scratch, { recursive: true, force: true });
});

function expectSameDoubles(actual: number[], expected: number[]): void {
  expect(actual.length).toBe(expected.length);
  for (let i = 0; i < actual.length; i++) {
    expect(actual[i]).toBe(expected[i]);
    expect(toPrecision17(actual[i])).toBe(toPrecision17(expected[i]));
  }
}

describe("bindings parity with the primary CLI", () => {
  it("py_backward and py_loo match direct CLI output on 100 fuzzed inputs", () => {
    const rand = mulberry32(0xbc12);
    for (let caseIdx = 0; caseIdx < 100; caseIdx++) {
      const { scores, labels, testScores, rule } = fuzzCase(rand);
      const n = scores.length;

      const viaBinding = py_backward(scores, labels, rule, testScores);
      const poolFile = writeScratch(
        scoresCsv([...scores, testScores], [...labels, 0]),
      );
      const direct = runCliJson<{
        alpha: number;
        set: number[];
        degenerate: boolean;
        cap: number;
      }>([
        "run",
        "--scores",
        poolFile,
        "--rule",
        JSON.stringify(rule),
        "--test-row",
        String(n),
      ]);
      expect(viaBinding.alpha).toBe(direct.alpha);
      expect(toPrecision17(viaBinding.alpha)).toBe(toPrecision17(direct.alpha));
      expect(viaBinding.set).toEqual(direct.set);
      expect(viaBinding.degenerate).toBe(direct.degenerate);
      expect(viaBinding.cap).toBe(direct.cap);

      const looBinding = py_loo(scores, labels, rule);
      const calFile = writeScratch(scoresCsv(scores, labels));
      const looDirect = runCliJson<{ alpha_loo: number; per_j: number[] }>([
        "loo",
        "--scores",
        calFile,
        "--rule",
        JSON.stringify(rule),
      ]);
      expect(looBinding.alpha_loo).toBe(looDirect.alpha_loo);
      expect(toPrecision17(looBinding.alpha_loo)).toBe(
        toPrecision17(looDirect.alpha_loo),
      );
      expectSameDoubles(looBinding.per_j, looDirect.per_j);
    }
  }, 600_000);
});
