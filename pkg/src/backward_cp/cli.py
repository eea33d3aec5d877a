"""bcp command line: simulate experiments, run single passes, estimate and bound.

Subcommands
-----------
simulate   run a Monte Carlo experiment from a JSON config; writes
           summary.json, histogram.csv and trials.csv
run        single pass on a score CSV with one row held out as the test point
loo        leave-one-out miscoverage estimate over a whole score CSV
bound      finite-sample error bound and optional trust decision

All floating-point output uses 17 significant digits.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import _jsonfmt
from .backward import adaptive_alpha, loo_estimator
from .bounds import BoundParams, explicit_bound_with_mu, r_delta, trust_decision
from .bounds import TAYLOR_CAVEAT
from .evalues import test_ratio_vector
from .harness import TrialConfig, run_experiment, write_outputs
from .rules import apply_rule, rule_from_config
from .scores import (
    CalibrationSet,
    EmbeddingMatrix,
    ScoreMatrix,
    load_embeddings_csv,
    load_scores_csv,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bcp",
        description="Size-capped conformal prediction with adaptive miscoverage",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run a Monte Carlo experiment")
    p_sim.add_argument("--config", required=True, help="JSON config file")
    p_sim.add_argument("--out-dir", default=".", help="output directory")

    p_run = sub.add_parser("run", help="single pass with one row as test point")
    p_run.add_argument("--scores", required=True, help="score CSV")
    p_run.add_argument("--embeddings", help="embedding CSV (entropy rule)")
    p_run.add_argument("--rule", required=True, help="size-rule config as JSON")
    p_run.add_argument("--test-row", required=True, type=int,
                       help="0-based CSV data row used as the test point")

    p_loo = sub.add_parser("loo", help="leave-one-out miscoverage estimate")
    p_loo.add_argument("--scores", required=True, help="score CSV")
    p_loo.add_argument("--embeddings", help="embedding CSV (entropy rule)")
    p_loo.add_argument("--rule", required=True, help="size-rule config as JSON")

    p_bound = sub.add_parser("bound", help="finite-sample error bound")
    p_bound.add_argument("--n", required=True, type=int)
    p_bound.add_argument("--smin", required=True, type=float)
    p_bound.add_argument("--smax", required=True, type=float)
    p_bound.add_argument("--delta", required=True, type=float)
    p_bound.add_argument("--mu", type=float)
    p_bound.add_argument("--alpha-loo", type=float, dest="alpha_loo")
    p_bound.add_argument("--tau", type=float)
    return parser


def _parse_rule_json(text: str) -> dict:
    try:
        config = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValueError(f"--rule is not valid JSON: {e}") from None
    if not isinstance(config, dict):
        raise ValueError("--rule must be a JSON object")
    return config


def _emit(obj) -> None:
    print(_jsonfmt.dumps(obj))


def _cmd_simulate(args) -> int:
    with open(args.config, encoding="utf-8") as fh:
        raw = json.load(fh)
    config = TrialConfig.from_dict(raw)
    summary = run_experiment(config)
    paths = write_outputs(summary, args.out_dir)
    for name in ("summary", "histogram", "trials"):
        print(f"wrote {paths[name]}")
    return 0


def _load_inputs(args):
    cal = load_scores_csv(args.scores)
    embeddings = load_embeddings_csv(args.embeddings) if args.embeddings else None
    if embeddings is not None and embeddings.n != cal.n:
        raise ValueError(
            f"embedding CSV has {embeddings.n} rows, score CSV has {cal.n}"
        )
    return cal, embeddings


def _cmd_run(args) -> int:
    pool, pool_emb = _load_inputs(args)
    i = args.test_row
    if not 0 <= i < pool.n:
        raise ValueError(f"--test-row {i} out of range [0, {pool.n})")
    if pool.n < 3:
        raise ValueError("need at least 3 rows: 2 calibration points plus the test row")
    keep = np.arange(pool.n) != i
    cal = CalibrationSet(ScoreMatrix(pool.scores.values[keep]), pool.labels[keep])
    embeddings = None
    test_embedding = None
    if pool_emb is not None:
        embeddings = EmbeddingMatrix(pool_emb.points[keep])
        test_embedding = pool_emb.points[i]
    rule = rule_from_config(_parse_rule_json(args.rule), cal, embeddings)
    cap = apply_rule(rule, cal, test_embedding)
    test_scores = pool.scores.values[i]
    result = adaptive_alpha(test_ratio_vector(cal, test_scores), cap)
    loo = loo_estimator(cal, rule, embeddings)
    test_label = int(pool.labels[i])
    _emit(
        {
            "alpha": result.alpha,
            "set": result.set_indices,
            "degenerate": result.degenerate,
            "cap": result.cap,
            "covered": bool(test_label in result.set_indices),
            "test_label": test_label,
            "alpha_loo": loo.alpha_loo,
        }
    )
    return 0


def _cmd_loo(args) -> int:
    cal, embeddings = _load_inputs(args)
    rule = rule_from_config(_parse_rule_json(args.rule), cal, embeddings)
    loo = loo_estimator(cal, rule, embeddings)
    _emit(
        {
            "alpha_loo": loo.alpha_loo,
            "per_j": loo.per_j,
            "per_j_caps": loo.per_j_caps,
        }
    )
    return 0


def _cmd_bound(args) -> int:
    if (args.alpha_loo is None) != (args.tau is None):
        raise ValueError("--alpha-loo and --tau must be given together")
    params = BoundParams(
        n=args.n, s_min=args.smin, s_max=args.smax, delta=args.delta, mu=args.mu
    )
    r = r_delta(params)
    out = {
        "n": params.n,
        "s_min": params.s_min,
        "s_max": params.s_max,
        "delta": params.delta,
        "r_delta": r,
    }
    if params.mu is not None:
        out["mu"] = params.mu
        out["bound_with_mu"] = explicit_bound_with_mu(params)
    if args.alpha_loo is not None:
        out["trust"] = trust_decision(args.alpha_loo, r, args.tau).to_dict()
    else:
        out["caveat"] = TAYLOR_CAVEAT
    _emit(out)
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "run": _cmd_run,
    "loo": _cmd_loo,
    "bound": _cmd_bound,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError, RuntimeError) as e:
        print(f"bcp: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
