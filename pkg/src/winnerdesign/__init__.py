"""Adaptive three-arm experiment design that selects the better treatment and
estimates its effect over control, with a correction for selection bias."""

from .design import NormalSource, OutcomeSource, SourceExhausted, equal_split, run_oracle_design, run_two_stage
from .estimator import bias_term, debias, pooled_mean, sample_stats, select_winner
from .estimators import AdaptiveAllocator, WinnerEffectEstimator
from .gaussian import DomainError, GaussPair, mills_ratio, std_cdf, std_pdf, trunc_mean, trunc_second_moment
from .model import (
    Allocation,
    ArmStats,
    ClipDomain,
    DesignOutcome,
    Hyperparams,
    InfeasibleError,
    PreconditionError,
    TwoStagePlan,
)
from .objective import adaptive_objective, mse_treatment, oracle_mse
from .optimizer import neyman_allocation, solve_adaptive_allocation, solve_oracle_allocation, top_up
from .replay import RecordSet, finite_source, load_records, pseudo_treatment_split, run_replay
from .simulator import MetricsRecord, SimConfig, run_benchmark, sweep_T0

__version__ = "0.1.0"
