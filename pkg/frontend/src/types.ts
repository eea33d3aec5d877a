/** Size-rule configuration, passed through to the core unchanged. */
export type RuleConfig =
  | { kind: "constant"; t: number }
  | {
      kind: "entropy";
      k: number;
      t_min: number;
      t_max: number;
      skew_exponent?: number;
    };

/** Result of one size-capped conformal pass. */
export interface BackwardResult {
  alpha: number;
  set: number[];
  degenerate: boolean;
  cap: number;
}

/** Leave-one-out miscoverage estimate. */
export interface LooResult {
  alpha_loo: number;
  per_j: number[];
}

export interface TrustReport {
  alpha_loo: number;
  r_delta: number;
  tau: number;
  lower_coverage: number;
  decision: "trust" | "reject";
  caveat: string;
}

export interface BoundReport {
  n: number;
  s_min: number;
  s_max: number;
  delta: number;
  r_delta: number;
  mu?: number;
  bound_with_mu?: number;
  trust?: TrustReport;
  caveat?: string;
}

export interface BoundArgs {
  n: number;
  s_min: number;
  s_max: number;
  delta: number;
  mu?: number;
  alpha_loo?: number;
  tau?: number;
}

/** Optional embedding data for the entropy-adaptive rule. */
export interface EmbeddingArgs {
  embeddings?: number[][];
  testEmbedding?: number[];
}
