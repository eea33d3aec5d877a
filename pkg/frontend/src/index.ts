// ---------------------------------------------------------------------------
// backward-cp-bindings: typed access to the backward-cp core from Node.
//
// Every function marshals plain arrays into the core's CSV/JSON surfaces,
// invokes the `bcp` CLI and parses its JSON output.  No math is
// re-implemented here; every number and every diagnostic originates in the
// core, so results are bit-identical to direct CLI use.
// ---------------------------------------------------------------------------

import { BcpError, runCliJson } from "./cli.js";
import {
  ScratchDir,
  checkScoreShape,
  embeddingsCsv,
  formatNumber,
  scoresCsv,
} from "./csv.js";
import type {
  BackwardResult,
  BoundArgs,
  BoundReport,
  EmbeddingArgs,
  LooResult,
  RuleConfig,
  TrustReport,
} from "./types.js";

export { BcpError, cliCommand, runCli, runCliJson } from "./cli.js";
export { formatNumber, scoresCsv, embeddingsCsv, toPrecision17 } from "./csv.js";
export type {
  BackwardResult,
  BoundArgs,
  BoundReport,
  EmbeddingArgs,
  LooResult,
  RuleConfig,
  TrustReport,
} from "./types.js";

interface RunPayload {
  alpha: number;
  set: number[];
  degenerate: boolean;
  cap: number;
  covered: boolean;
  test_label: number;
  alpha_loo: number;
}

interface LooPayload {
  alpha_loo: number;
  per_j: number[];
  per_j_caps: number[];
}

function checkTestScores(testScores: number[], k: number): void {
  if (testScores.length !== k) {
    throw new BcpError(
      `shape mismatch: test_scores has ${testScores.length} entries, expected ${k}`,
    );
  }
}

function ruleJson(rule: RuleConfig): string {
  if (typeof rule !== "object" || rule === null || !("kind" in rule)) {
    throw new BcpError("rule must be a mapping with a 'kind' key");
  }
  return JSON.stringify(rule);
}

/**
 * Size-capped conformal pass: adaptive miscoverage level and prediction set
 * for one test score vector against a calibration set.
 */
export function py_backward(
  scores: number[][],
  labels: number[],
  rule: RuleConfig,
  testScores: number[],
  embeddings?: EmbeddingArgs,
): BackwardResult {
  const { n, k } = checkScoreShape(scores, labels);
  checkTestScores(testScores, k);
  const scratch = new ScratchDir();
  try {
    // the core takes the test point as a held-out row of the pool; its
    // label column is irrelevant to alpha/set/cap
    const pool = scoresCsv([...scores, testScores], [...labels, 0]);
    const args = [
      "run",
      "--scores",
      scratch.write("scores", pool),
      "--rule",
      ruleJson(rule),
      "--test-row",
      String(n),
    ];
    if (embeddings?.embeddings) {
      if (!embeddings.testEmbedding) {
        throw new BcpError("testEmbedding is required when embeddings are given");
      }
      const rows = [...embeddings.embeddings, embeddings.testEmbedding];
      args.push("--embeddings", scratch.write("embeddings", embeddingsCsv(rows)));
    }
    const payload = runCliJson<RunPayload>(args);
    return {
      alpha: payload.alpha,
      set: payload.set,
      degenerate: payload.degenerate,
      cap: payload.cap,
    };
  } finally {
    scratch.dispose();
  }
}

/** Leave-one-out estimate of the marginal miscoverage of a calibration set. */
export function py_loo(
  scores: number[][],
  labels: number[],
  rule: RuleConfig,
  embeddings?: number[][],
): LooResult {
  checkScoreShape(scores, labels);
  const scratch = new ScratchDir();
  try {
    const args = [
      "loo",
      "--scores",
      scratch.write("scores", scoresCsv(scores, labels)),
      "--rule",
      ruleJson(rule),
    ];
    if (embeddings) {
      args.push("--embeddings", scratch.write("embeddings", embeddingsCsv(embeddings)));
    }
    const payload = runCliJson<LooPayload>(args);
    return { alpha_loo: payload.alpha_loo, per_j: payload.per_j };
  } finally {
    scratch.dispose();
  }
}

/** Finite-sample error bound and optional trust decision (mirrors `bcp bound`). */
export function bound_report(args: BoundArgs): BoundReport {
  const argv = [
    "bound",
    "--n",
    String(args.n),
    "--smin",
    formatNumber(args.s_min),
    "--smax",
    formatNumber(args.s_max),
    "--delta",
    formatNumber(args.delta),
  ];
  if (args.mu !== undefined) {
    argv.push("--mu", formatNumber(args.mu));
  }
  if (args.alpha_loo !== undefined || args.tau !== undefined) {
    if (args.alpha_loo === undefined || args.tau === undefined) {
      throw new BcpError("alpha_loo and tau must be given together");
    }
    argv.push("--alpha-loo", formatNumber(args.alpha_loo), "--tau", formatNumber(args.tau));
  }
  return runCliJson<BoundReport>(argv);
}

/**
 * A calibration set pinned into the core's file format once, for repeated
 * queries.  The CSV text is serialized at construction; each query appends
 * the test row, writes one scratch file and invokes the core.  Call
 * `dispose()` (or rely on process exit) to drop the scratch directory.
 */
export class CalibrationSession {
  private readonly calCsv: string;
  private readonly embCsv?: string;
  private readonly scratch = new ScratchDir();
  readonly n: number;
  readonly numLabels: number;

  constructor(scores: number[][], labels: number[], embeddings?: number[][]) {
    const { n, k } = checkScoreShape(scores, labels);
    this.n = n;
    this.numLabels = k;
    this.calCsv = scoresCsv(scores, labels);
    if (embeddings) {
      if (embeddings.length !== n) {
        throw new BcpError(
          `shape mismatch: ${embeddings.length} embedding rows for ${n} points`,
        );
      }
      this.embCsv = embeddingsCsv(embeddings);
    }
  }

  backward(rule: RuleConfig, testScores: number[], testEmbedding?: number[]): BackwardResult {
    checkTestScores(testScores, this.numLabels);
    const pool = this.calCsv + `0,${testScores.map(formatNumber).join(",")}\n`;
    const args = [
      "run",
      "--scores",
      this.scratch.write("scores", pool),
      "--rule",
      ruleJson(rule),
      "--test-row",
      String(this.n),
    ];
    if (this.embCsv) {
      if (!testEmbedding) {
        throw new BcpError("testEmbedding is required when embeddings are given");
      }
      const pts = this.embCsv + testEmbedding.map(formatNumber).join(",") + "\n";
      args.push("--embeddings", this.scratch.write("embeddings", pts));
    }
    const payload = runCliJson<RunPayload>(args);
    return {
      alpha: payload.alpha,
      set: payload.set,
      degenerate: payload.degenerate,
      cap: payload.cap,
    };
  }

  loo(rule: RuleConfig): LooResult {
    const args = [
      "loo",
      "--scores",
      this.scratch.write("scores", this.calCsv),
      "--rule",
      ruleJson(rule),
    ];
    if (this.embCsv) {
      args.push("--embeddings", this.scratch.write("embeddings", this.embCsv));
    }
    const payload = runCliJson<LooPayload>(args);
    return { alpha_loo: payload.alpha_loo, per_j: payload.per_j };
  }

  /** Bound report with n defaulted to this calibration size. */
  bound(args: Omit<BoundArgs, "n"> & { n?: number }): BoundReport {
    return bound_report({ n: args.n ?? this.n, ...args });
  }

  /** The exact CSV texts handed to the core (useful for audits). */
  serialized(): { scores: string; embeddings?: string } {
    return { scores: this.calCsv, embeddings: this.embCsv };
  }

  dispose(): void {
    this.scratch.dispose();
  }
}
