"""Command-line entry point: ``winnerdesign <command> ...``.

Exit codes: 0 success, 1 domain or infeasibility error (or a failed
validation suite), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .design import NormalSource, SourceExhausted, equal_split, run_two_stage
from .gaussian import DomainError
from .model import Hyperparams, InfeasibleError, PreconditionError, canonical_json
from .objective import ESTIMATORS, oracle_mse
from .optimizer import oracle_search
from .replay import REPLAY_EXTRA_COLUMNS, REPLAY_METHODS, RecordsError, load_records, parse_arm_map, pseudo_treatment_split, run_replay
from .simulator import (
    FULL_REPLICATIONS,
    SS_SE_MODES,
    ConfigError,
    SimConfig,
    default_workers,
    records_to_csv,
    records_to_json,
    run_benchmark,
    sweep_T0,
)
from .validation import SUITES, run_suite

DOMAIN_ERRORS = (
    PreconditionError,
    InfeasibleError,
    DomainError,
    ConfigError,
    RecordsError,
    SourceExhausted,
    OSError,
    json.JSONDecodeError,
)


class UsageError(Exception):
    pass


def _hyperparams(args) -> Hyperparams:
    sds = (args.sigma0, args.sigma1, args.sigma2)
    if any(not (math.isfinite(s) and s > 0) for s in sds):
        raise PreconditionError(f"standard deviations must be positive, got {sds}")
    return Hyperparams.from_gap(args.delta, tuple(s * s for s in sds))


def _add_model_flags(p):
    p.add_argument("--delta", type=float, required=True, help="mean gap mu2 - mu1")
    p.add_argument("--sigma0", type=float, default=1.0, help="control outcome standard deviation")
    p.add_argument("--sigma1", type=float, default=1.0, help="arm 1 outcome standard deviation")
    p.add_argument("--sigma2", type=float, default=1.0, help="arm 2 outcome standard deviation")
    p.add_argument("--T", type=int, required=True, help="total budget")


def _emit(args, payload: dict, text: str):
    if args.json:
        print(canonical_json(payload, indent=2))
    else:
        print(text)


def cmd_oracle_alloc(args) -> int:
    h = _hyperparams(args)
    res = oracle_search(h, args.T, args.estimator)
    a = res.allocation
    payload = {
        "command": "oracle-alloc",
        "T": args.T,
        "estimator": args.estimator,
        "hyperparams": h.to_dict(),
        "allocation": list(a.n),
        "mse": oracle_mse(h, a, args.estimator),
    }
    _emit(args, payload, f"allocation n0={a[0]} n1={a[1]} n2={a[2]}  mse={payload['mse']:.10g}")
    return 0


def cmd_two_stage(args) -> int:
    h = _hyperparams(args)
    if args.T0 is None:
        args.T0 = int(round(args.T / 3))
    rng = np.random.default_rng(args.seed)
    res = run_two_stage(
        NormalSource(h),
        args.T,
        equal_split(args.T0),
        rng,
        debias=not args.no_debias,
        estimator=args.estimator,
    )
    o = res.outcome
    payload = {
        "command": "two-stage",
        "seed": args.seed,
        "plan": {"pilot": list(res.plan.pilot.n), "post": list(res.plan.post.n), "T": res.plan.total_budget},
        "outcome": o.to_dict(),
    }
    text = "\n".join(
        [
            f"pilot  {res.plan.pilot.n}",
            f"post   {res.plan.post.n}",
            f"winner {o.winner}",
            f"tau_raw      {o.tau_raw:.6g}",
            f"bias_term    {o.bias_term:.6g}",
            f"tau_debiased {o.tau_debiased:.6g}",
        ]
    )
    _emit(args, payload, text)
    return 0


def _load_config(path) -> SimConfig:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ConfigError(["config must be a JSON object"])
    return SimConfig.from_dict(data)


def _write_outputs(args, records, extra_columns=()):
    csv_text = records_to_csv(records, extra_columns)
    if args.out:
        Path(args.out).write_text(csv_text, encoding="utf-8")
    if args.json_out:
        Path(args.json_out).write_text(records_to_json(records), encoding="utf-8")
    if args.json:
        print(records_to_json(records))
    elif not args.out:
        sys.stdout.write(csv_text)


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    if args.seed is not None:
        cfg.master_seed = args.seed
    if args.full_scale:
        cfg.replications = FULL_REPLICATIONS
    if args.replications is not None:
        cfg.replications = args.replications
    if args.ss_se_mode is not None:
        cfg.ss_se_mode = args.ss_se_mode
    cfg.validate()
    workers = args.workers if args.workers is not None else default_workers()
    if args.sweep_T0:
        if len(cfg.T_grid) != 1:
            raise ConfigError(["--sweep-T0 needs a config with exactly one T in T_grid"])
        T0_grid = [int(x) for x in args.sweep_T0.split(",")]
        records = sweep_T0(cfg, cfg.T_grid[0], T0_grid, workers=workers)
    else:
        records = run_benchmark(cfg, workers=workers)
    _write_outputs(args, records)
    return 0


def _parse_pseudo(text: str) -> tuple:
    parts = dict(p.split("=", 1) for p in text.split(",") if "=" in p)
    if set(parts) != {"drop", "split"}:
        raise UsageError("--pseudo must look like drop=<label>,split=<label>")
    return parts["drop"], parts["split"]


def cmd_replay(args) -> int:
    arm_map = parse_arm_map(args.map)
    rs = load_records(args.data, arm_map)
    corpus = Path(args.data).name
    if args.pseudo:
        drop, split = _parse_pseudo(args.pseudo)
        rs = pseudo_treatment_split(rs, drop, split, np.random.default_rng(np.random.SeedSequence(args.seed, spawn_key=(99,))))
        corpus += f"[pseudo drop={drop} split={split}]"
    methods = args.methods.split(",") if args.methods else list(REPLAY_METHODS)
    workers = args.workers if args.workers is not None else default_workers()
    records = run_replay(rs, args.T, args.T0, args.reps, args.seed, methods=methods, corpus=corpus, workers=workers)
    _write_outputs(args, records, REPLAY_EXTRA_COLUMNS)
    return 0


def cmd_validate(args) -> int:
    checks = run_suite(args.suite, args.seed)
    ok = all(c.passed for c in checks)
    if args.json:
        print(
            json.dumps(
                {"command": "validate", "suite": args.suite, "seed": args.seed, "passed": ok, "checks": [c.to_dict() for c in checks]},
                indent=2,
            )
        )
    else:
        for c in checks:
            print(c.line())
        print(f"{args.suite}: {'PASS' if ok else 'FAIL'} ({sum(c.passed for c in checks)}/{len(checks)})")
    return 0 if ok else 1


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2^64)")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="winnerdesign", description="Adaptive three-arm design with winner selection.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("oracle-alloc", help="optimal allocation under known hyperparameters")
    _add_model_flags(p)
    p.add_argument("--estimator", choices=ESTIMATORS, default="debiased")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_oracle_alloc)

    p = sub.add_parser("two-stage", help="one synthetic two-stage run")
    _add_model_flags(p)
    p.add_argument("--T0", type=int, default=None, help="pilot size (default round(T/3)), split equally")
    p.add_argument("--seed", type=_seed, default=None)
    p.add_argument("--no-debias", action="store_true")
    p.add_argument("--estimator", choices=ESTIMATORS, default="debiased")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_two_stage)

    def output_flags(q):
        q.add_argument("--out", help="CSV output path (default: stdout)")
        q.add_argument("--json-out", help="also write the records as a JSON array")
        q.add_argument("--json", action="store_true", help="print the records as JSON instead of CSV")
        q.add_argument("--workers", type=int, default=None, help="worker processes (default: $WINNERDESIGN_WORKERS or 1)")

    p = sub.add_parser("simulate", help="Monte Carlo benchmark from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=_seed, default=None, help="overrides master_seed in the config")
    p.add_argument("--full-scale", action="store_true", help=f"{FULL_REPLICATIONS} replications per cell")
    p.add_argument("--replications", type=int, default=None)
    p.add_argument("--ss-se-mode", choices=SS_SE_MODES, default=None)
    p.add_argument("--sweep-T0", default=None, help="comma-separated pilot sizes at the config's single T")
    output_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("replay", help="replay designs against a records file")
    p.add_argument("--data", required=True)
    p.add_argument("--map", required=True, help="label=index pairs, e.g. regular=0,small=1,aide=2")
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--T0", type=int, required=True)
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--pseudo", default=None, help="drop=<label>,split=<label>")
    p.add_argument("--methods", default=None, help=f"comma-separated subset of {','.join(REPLAY_METHODS)}")
    output_flags(p)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("validate", help="run a Monte Carlo property suite")
    p.add_argument("--suite", choices=sorted(SUITES), required=True)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "workers", None) is not None and args.workers < 1:
        parser.error("--workers must be at least 1")
    try:
        return args.func(args)
    except UsageError as e:
        parser.error(str(e))
    except DOMAIN_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
