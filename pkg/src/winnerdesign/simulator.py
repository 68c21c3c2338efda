"""Monte Carlo benchmark of the adaptive design against baseline designs.

Methods
-------
proposal          two-stage adaptive design, debiased with pilot estimates
proposal_nocorr   same pipeline, allocation tuned for and reporting the raw estimate
ss_se             pilot selects the winner, post-pilot data estimate its mean
ss_hyper          pilot only estimates hyperparameters; post-pilot data select and estimate
nonadaptive       equal thirds, debiased with full-sample plug-in estimates
oracle            known-hyperparameter optimum, debiased with the true values

Every replication draws from its own generator seeded by
``(master_seed, panel, method, T, T0, replication)``, and per-replication
results are reduced in replication order, so the output does not depend on
the number of workers.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .design import (
    NormalSource,
    OutcomeSource,
    conclude,
    equal_split,
    plug_in,
    run_oracle_design,
    run_two_stage,
)
from .estimator import select_winner
from .model import Allocation, DesignOutcome, Hyperparams, PreconditionError
from .optimizer import solve_adaptive_allocation, solve_oracle_allocation

METHODS = ("proposal", "proposal_nocorr", "ss_se", "ss_hyper", "nonadaptive", "oracle")
SS_SE_MODES = ("pilot_control", "neyman")
SCHEMA_VERSION = 1
DESK_REPLICATIONS = 20_000
FULL_REPLICATIONS = 500_000
N_BATCHES = 100

CSV_COLUMNS = (
    "method",
    "T",
    "T0",
    "delta",
    "sigma_ratio",
    "mse",
    "mse_se",
    "sel_prob",
    "sel_prob_se",
    "max_cond_bias",
    "max_cond_bias_se",
    "exp_cond_var",
    "exp_cond_var_se",
    "replications",
    "seed",
)


class ConfigError(ValueError):
    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("invalid simulation config:\n  " + "\n  ".join(self.problems))


# --------------------------------------------------------------------------
# methods


def method_nonadaptive(source: OutcomeSource, T: int, rng, **_) -> DesignOutcome:
    if T < 6:
        raise PreconditionError(f"equal allocation needs T >= 6, got {T}")
    alloc = equal_split(T)
    stats = source.draw_stats(alloc, rng)
    est, floored = plug_in(stats)
    return conclude(None, stats, rng, est, alloc, variance_floored=floored)


def method_ss_se(source: OutcomeSource, T: int, rng, pilot: Allocation, ss_se_mode: str = "pilot_control", **_):
    """Pilot picks the winner; only post-pilot data estimate the winner's mean.

    ``pilot_control`` spends the whole post-pilot budget on the winner and
    takes the control mean from the pilot. ``neyman`` splits the post-pilot
    budget between winner and control in proportion to the pilot standard
    deviations and uses post-pilot data for both.
    """
    if ss_se_mode not in SS_SE_MODES:
        raise PreconditionError(f"unknown SS.SE mode {ss_se_mode!r}")
    if T - pilot.total < 2:
        raise PreconditionError("SS.SE needs at least 2 post-pilot units")
    T1 = T - pilot.total
    pstats = source.draw_stats(pilot, rng)
    sel = select_winner(pstats.mean[1], pstats.mean[2], rng)
    w = sel.winner
    n = [0, 0, 0]
    if ss_se_mode == "pilot_control":
        n[w] = T1
    else:
        est, _ = plug_in(pstats)
        sd0, sdw = est.sigma[0], est.sigma[w]
        n0 = min(max(int(round(T1 * sd0 / (sd0 + sdw))), 1), T1 - 1)
        n[0], n[w] = n0, T1 - n0
    post = source.draw_stats(n, rng)
    means = list(pstats.mean)
    omega = [1.0, 1.0, 1.0]
    means[w], omega[w] = post.mean[w], 0.0
    if ss_se_mode == "neyman":
        means[0], omega[0] = post.mean[0], 0.0
    counts = [pstats.count[k] + post.count[k] for k in range(3)]
    return DesignOutcome.build(w, means[w] - means[0], 0.0, means, omega, counts, tie_broken=sel.tie_broken)


def method_ss_hyper(source: OutcomeSource, T: int, rng, pilot: Allocation, **_):
    """Pilot estimates hyperparameters only; everything else uses post-pilot data."""
    T1 = T - pilot.total
    pstats = source.draw_stats(pilot, rng)
    est, floored = plug_in(pstats)
    post = solve_adaptive_allocation(est, Allocation((0, 0, 0)), T1)
    stats = source.draw_stats(post, rng)
    return conclude(None, stats, rng, est, post, variance_floored=floored)


def method_proposal(source, T, rng, pilot, **_):
    return run_two_stage(source, T, pilot, rng).outcome


def method_proposal_nocorr(source, T, rng, pilot, **_):
    return run_two_stage(source, T, pilot, rng, debias=False, estimator="raw").outcome


def method_oracle(source, T, rng, h: Optional[Hyperparams] = None, oracle_allocation=None, **_):
    if h is None:
        raise PreconditionError("the oracle method needs true hyperparameters")
    return run_oracle_design(source, h, T, rng, allocation=oracle_allocation)


METHOD_FUNCS = {
    "proposal": method_proposal,
    "proposal_nocorr": method_proposal_nocorr,
    "ss_se": method_ss_se,
    "ss_hyper": method_ss_hyper,
    "nonadaptive": method_nonadaptive,
    "oracle": method_oracle,
}


# --------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class Truth:
    """Population means the estimates are scored against."""

    mu: tuple

    @property
    def w_max(self) -> int:
        return 2 if self.mu[2] >= self.mu[1] else 1

    def tau(self, w):
        return np.asarray(self.mu)[np.asarray(w)] - self.mu[0]


@dataclass
class MetricsRecord:
    method: str
    T: int
    T0: int
    delta: float
    sigma_ratio: float
    mse: float
    mse_se: float
    sel_prob: float
    sel_prob_se: float
    max_cond_bias: float
    max_cond_bias_se: float
    exp_cond_var: float
    exp_cond_var_se: float
    replications: int
    seed: int
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        extra = d.pop("extra")
        d.update(extra)
        return d


def _group_metrics(winner, est, truth: Truth):
    tau_w = truth.tau(winner)
    tau_best = truth.tau(truth.w_max)
    mse = float(np.mean((est - tau_best) ** 2))
    sel = float(np.mean(winner == truth.w_max))
    biases, var = [], 0.0
    n = winner.size
    for w in (1, 2):
        g = winner == w
        k = int(g.sum())
        if k == 0:
            continue
        err = est[g] - tau_w[g]
        se = float(np.std(err, ddof=1) / math.sqrt(k)) if k >= 2 else math.nan
        biases.append((abs(float(np.mean(err))), se))
        if k >= 2:
            var += k / n * float(np.var(est[g], ddof=1))
    worst = max(biases, key=lambda b: b[0]) if biases else (math.nan, math.nan)
    return mse, sel, worst, var


def compute_metrics(winner, est, truth: Truth, n_batches: int = N_BATCHES) -> dict:
    """Point estimates over all replications with Monte Carlo standard errors.

    The conditional-bias error is the standard error of the group mean for the
    arm attaining the maximum; batch means of a maximum of absolute values
    would understate it. The other three use batch means.
    """
    winner = np.asarray(winner)
    est = np.asarray(est, dtype=float)
    mse, sel, (bias, bias_se), var = _group_metrics(winner, est, truth)
    b = min(n_batches, winner.size)
    per = []
    if b >= 2:
        for idx in np.array_split(np.arange(winner.size), b):
            m, s, _, v = _group_metrics(winner[idx], est[idx], truth)
            per.append((m, s, v))
    per = np.array(per, dtype=float) if per else np.full((0, 3), np.nan)
    se = []
    for j in range(3):
        col = per[:, j][np.isfinite(per[:, j])] if per.size else np.array([])
        se.append(float(np.std(col, ddof=1) / math.sqrt(col.size)) if col.size >= 2 else math.nan)
    return {
        "mse": mse,
        "mse_se": se[0],
        "sel_prob": sel,
        "sel_prob_se": se[1],
        "max_cond_bias": bias,
        "max_cond_bias_se": bias_se,
        "exp_cond_var": var,
        "exp_cond_var_se": se[2],
    }


# --------------------------------------------------------------------------
# replication engine


class NormalSourceFactory:
    def __init__(self, h: Hyperparams):
        self.h = h

    def __call__(self, rng):
        return NormalSource(self.h)


def replication_rng(master_seed: int, key: Sequence[int], rep: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key) + (int(rep),))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class Cell:
    method: str
    T: int
    pilot: Allocation
    key: tuple
    source_factory: object
    h: Optional[Hyperparams] = None
    oracle_allocation: Optional[Allocation] = None
    ss_se_mode: str = "pilot_control"


def run_replications(cell: Cell, master_seed: int, start: int, stop: int):
    """Winner, reported estimate and raw estimate for replications ``start..stop-1``."""
    func = METHOD_FUNCS[cell.method]
    k = stop - start
    winner = np.empty(k, dtype=np.int8)
    est = np.empty(k)
    raw = np.empty(k)
    for i, rep in enumerate(range(start, stop)):
        rng = replication_rng(master_seed, cell.key, rep)
        source = cell.source_factory(rng)
        out = func(
            source,
            cell.T,
            rng,
            pilot=cell.pilot,
            h=cell.h,
            oracle_allocation=cell.oracle_allocation,
            ss_se_mode=cell.ss_se_mode,
        )
        winner[i] = out.winner
        est[i] = out.tau_debiased
        raw[i] = out.tau_raw
    return winner, est, raw


def _run_chunk(args):
    return run_replications(*args)


def simulate_cell(cell: Cell, replications: int, master_seed: int, workers: int = 1):
    """All replications of one cell, assembled in replication order."""
    if workers <= 1 or replications < 2:
        return run_replications(cell, master_seed, 0, replications)
    n_chunks = min(replications, workers * 4)
    bounds = np.linspace(0, replications, n_chunks + 1).astype(int)
    tasks = [(cell, master_seed, int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_chunk, tasks))
    return tuple(np.concatenate([p[j] for p in parts]) for j in range(3))


# --------------------------------------------------------------------------
# configuration


@dataclass
class SimConfig:
    delta: list
    sigma_ratio: list
    sigma0_sq: float = 1.0
    T_grid: list = field(default_factory=lambda: [300, 900, 1500])
    T0_rule: dict = field(default_factory=lambda: {"kind": "fraction", "value": 1.0 / 3.0})
    pilot_split: object = "equal"
    replications: int = DESK_REPLICATIONS
    master_seed: int = 0
    methods: list = field(default_factory=lambda: list(METHODS))
    ss_se_mode: str = "pilot_control"
    schema_version: int = SCHEMA_VERSION

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        problems = []
        known = {f for f in cls.__dataclass_fields__}
        for k in data:
            if k not in known:
                problems.append(f"unknown field {k!r}")
        for required in ("delta", "sigma_ratio", "master_seed"):
            if required not in data:
                problems.append(f"missing required field {required!r}")
        if problems:
            raise ConfigError(problems)
        kw = dict(data)
        for k in ("delta", "sigma_ratio"):
            if not isinstance(kw[k], list):
                kw[k] = [kw[k]]
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    def T0_for(self, T: int) -> int:
        rule = self.T0_rule
        if rule["kind"] == "fraction":
            return int(round(rule["value"] * T))
        return int(rule["value"])

    def pilot_for(self, T: int) -> Allocation:
        T0 = self.T0_for(T)
        if self.pilot_split == "equal":
            return equal_split(T0)
        return Allocation(self.pilot_split)

    def panels(self):
        return [(float(d), float(r)) for d in self.delta for r in self.sigma_ratio]

    def validate(self):
        p = []
        if self.schema_version != SCHEMA_VERSION:
            p.append(f"schema_version must be {SCHEMA_VERSION}, got {self.schema_version!r}")
        for name in ("delta", "sigma_ratio"):
            vals = getattr(self, name)
            if not vals or not all(isinstance(v, (int, float)) and math.isfinite(v) for v in vals):
                p.append(f"{name} must be a finite number or a nonempty list of them")
        if all(isinstance(v, (int, float)) for v in self.sigma_ratio) and any(v <= 0 for v in self.sigma_ratio):
            p.append("sigma_ratio values must be positive")
        if not (isinstance(self.sigma0_sq, (int, float)) and self.sigma0_sq > 0):
            p.append("sigma0_sq must be positive")
        if not isinstance(self.replications, int) or isinstance(self.replications, bool) or self.replications < 1:
            p.append("replications must be a positive integer")
        if not isinstance(self.master_seed, int) or isinstance(self.master_seed, bool) or not 0 <= self.master_seed < 2**64:
            p.append("master_seed must be an integer in [0, 2^64)")
        bad = [m for m in self.methods] if not isinstance(self.methods, list) else [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            p.append(f"methods must be a nonempty subset of {list(METHODS)}; bad entries {bad}")
        if self.ss_se_mode not in SS_SE_MODES:
            p.append(f"ss_se_mode must be one of {list(SS_SE_MODES)}")
        rule = self.T0_rule
        rule_ok = isinstance(rule, dict) and rule.get("kind") in ("fraction", "fixed") and isinstance(rule.get("value"), (int, float))
        if not rule_ok:
            p.append('T0_rule must be {"kind": "fraction"|"fixed", "value": number}')
        split_ok = self.pilot_split == "equal" or (
            isinstance(self.pilot_split, list) and len(self.pilot_split) == 3 and all(isinstance(m, int) and m >= 2 for m in self.pilot_split)
        )
        if not split_ok:
            p.append('pilot_split must be "equal" or a list of three integers >= 2')
        if not isinstance(self.T_grid, list) or not self.T_grid or not all(isinstance(t, int) and not isinstance(t, bool) for t in self.T_grid):
            p.append("T_grid must be a nonempty list of integers")
        elif rule_ok and split_ok:
            for T in self.T_grid:
                T0 = self.T0_for(T)
                if not 0 < T0 < T:
                    p.append(f"T0={T0} must lie strictly between 0 and T={T}")
                    continue
                if self.pilot_split != "equal" and sum(self.pilot_split) != T0:
                    p.append(f"pilot_split sums to {sum(self.pilot_split)} but T0={T0} at T={T}")
                elif min(self.pilot_for(T).n) < 2:
                    p.append(f"pilot at T={T} leaves an arm with fewer than 2 units")
                elif T - T0 < 3:
                    p.append(f"post-pilot budget at T={T} is below 3 units")
                if T < 6 and "nonadaptive" in self.methods:
                    p.append(f"nonadaptive needs T >= 6, got {T}")
        if p:
            raise ConfigError(p)


def _cells_for(cfg: SimConfig, panel_idx: int, h: Hyperparams, T: int, T0: Optional[int] = None):
    if T0 is None:
        pilot = cfg.pilot_for(T)
    else:
        pilot = equal_split(T0) if cfg.pilot_split == "equal" else Allocation(cfg.pilot_split)
    factory = NormalSourceFactory(h)
    oracle_alloc = solve_oracle_allocation(h, T) if "oracle" in cfg.methods else None
    for method in cfg.methods:
        key = (panel_idx, METHODS.index(method), T, pilot.total)
        yield Cell(method, T, pilot, key, factory, h, oracle_alloc, cfg.ss_se_mode)


def _record(cell: Cell, cfg: SimConfig, delta, ratio, results, truth: Truth, replications) -> MetricsRecord:
    winner, est, _ = results
    m = compute_metrics(winner, est, truth)
    return MetricsRecord(
        method=cell.method,
        T=cell.T,
        T0=cell.pilot.total,
        delta=delta,
        sigma_ratio=ratio,
        replications=replications,
        seed=cfg.master_seed,
        **m,
    )


def run_benchmark(cfg: SimConfig, workers: int = 1, replications: Optional[int] = None) -> list:
    """Metrics for every (panel, T, method) cell of the configuration."""
    cfg.validate()
    reps = replications or cfg.replications
    records = []
    for i, (delta, ratio) in enumerate(cfg.panels()):
        h = Hyperparams.from_ratio(delta, ratio, cfg.sigma0_sq)
        truth = Truth(h.mu)
        for T in cfg.T_grid:
            for cell in _cells_for(cfg, i, h, T):
                res = simulate_cell(cell, reps, cfg.master_seed, workers)
                records.append(_record(cell, cfg, delta, ratio, res, truth, reps))
    return records


def sweep_T0(cfg: SimConfig, T: int, T0_grid: Sequence[int], workers: int = 1, methods=("proposal", "ss_hyper")) -> list:
    """Metrics of the given methods across pilot sizes at a fixed total budget."""
    problems = [f"T0={t0} must be below T={T}" for t0 in T0_grid if t0 >= T]
    problems += [f"T0={t0} leaves a pilot arm with fewer than 2 units" for t0 in T0_grid if t0 < 6]
    if problems:
        raise ConfigError(problems)
    sub = SimConfig(**{**asdict(cfg), "methods": list(methods), "T_grid": [T]})
    sub.validate()
    records = []
    for i, (delta, ratio) in enumerate(sub.panels()):
        h = Hyperparams.from_ratio(delta, ratio, sub.sigma0_sq)
        truth = Truth(h.mu)
        for T0 in T0_grid:
            for cell in _cells_for(sub, i, h, T, T0):
                res = simulate_cell(cell, sub.replications, sub.master_seed, workers)
                records.append(_record(cell, sub, delta, ratio, res, truth, sub.replications))
    return records


# --------------------------------------------------------------------------
# output


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def records_to_csv(records: Sequence[MetricsRecord], extra_columns: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    cols = list(CSV_COLUMNS) + list(extra_columns)
    writer.writerow(cols)
    for rec in records:
        d = rec.to_dict()
        writer.writerow([_fmt(d.get(c, "")) for c in cols])
    return buf.getvalue()


def records_to_json(records: Sequence[MetricsRecord]) -> str:
    def clean(v):
        return None if isinstance(v, float) and not math.isfinite(v) else v

    return json.dumps([{k: clean(v) for k, v in r.to_dict().items()} for r in records], indent=2)


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("WINNERDESIGN_WORKERS", "1")))
    except ValueError:
        return 1
