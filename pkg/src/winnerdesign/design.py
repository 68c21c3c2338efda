"""Two-stage adaptive design and the oracle design, run against an outcome source."""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .estimator import bias_from_moments, pooled_mean, sample_stats, select_winner
from .model import (
    Allocation,
    ArmStats,
    ClipDomain,
    DesignOutcome,
    Hyperparams,
    PreconditionError,
    TwoStagePlan,
)
from .optimizer import solve_adaptive_allocation, solve_oracle_allocation

VARIANCE_FLOOR = 1e-12


class SourceExhausted(RuntimeError):
    """A finite outcome source has fewer records left than requested."""


class OutcomeSource(ABC):
    """Anything that can produce outcomes for an arm."""

    @abstractmethod
    def draw(self, arm: int, count: int, rng: np.random.Generator) -> np.ndarray:
        """Return ``count`` outcomes for ``arm``."""

    def draw_stats(self, counts, rng: np.random.Generator) -> ArmStats:
        """Draw ``counts[w]`` outcomes for arms 0, 1, 2 (in that order) and summarize."""
        return sample_stats([self.draw(w, int(counts[w]), rng) for w in range(3)])


class NormalSource(OutcomeSource):
    """Independent normal outcomes with the given hyperparameters.

    ``draw_stats`` samples the sufficient statistics directly (normal mean,
    scaled chi-square sum of squares), which has exactly the distribution of
    the summarized raw draws. Pass ``raw=True`` to summarize raw draws instead.
    """

    def __init__(self, h: Hyperparams, raw: bool = False):
        self.h = h
        self.raw = raw

    def draw(self, arm, count, rng):
        return rng.normal(self.h.mu[arm], math.sqrt(self.h.sigma2[arm]), size=count)

    def draw_stats(self, counts, rng):
        if self.raw:
            return super().draw_stats(counts, rng)
        count, total, m2 = [], [], []
        for w in range(3):
            n = int(counts[w])
            if n > 0:
                mean = rng.normal(self.h.mu[w], math.sqrt(self.h.sigma2[w] / n))
                q = self.h.sigma2[w] * rng.chisquare(n - 1) if n > 1 else 0.0
            else:
                mean, q = 0.0, 0.0
            count.append(n)
            total.append(n * mean)
            m2.append(q)
        return ArmStats.from_moments(count, total, m2)


@dataclass(frozen=True)
class TwoStageResult:
    outcome: DesignOutcome
    plan: TwoStagePlan
    pilot_stats: ArmStats
    post_stats: ArmStats

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome.to_dict(),
            "plan": self.plan.to_dict(),
            "pilot_stats": self.pilot_stats.to_dict(),
            "post_stats": self.post_stats.to_dict(),
        }


def equal_split(total: int) -> Allocation:
    """Thirds of ``total``; the remainder goes to control first, then arm 1."""
    base, rem = divmod(int(total), 3)
    return Allocation(tuple(base + (1 if w < rem else 0) for w in range(3)))


def plug_in(stats: ArmStats) -> tuple:
    """Hyperparameter estimates with the variance floor applied, and whether it bit."""
    return stats.to_hyperparams(VARIANCE_FLOOR), stats.floored(VARIANCE_FLOOR)


def conclude(
    pilot_stats: Optional[ArmStats],
    post_stats: ArmStats,
    rng: np.random.Generator,
    bias_params: Optional[Hyperparams],
    effective: Allocation,
    **flags,
) -> DesignOutcome:
    """Pool both stages, select the winner and debias with ``bias_params``.

    ``bias_params=None`` skips the correction. ``effective`` holds the
    counts the bias term is evaluated at.
    """
    if pilot_stats is None:
        pilot_stats = ArmStats((0, 0, 0), (0.0, 0.0, 0.0), (math.nan,) * 3, (None,) * 3)
    pooled, omega = zip(*(pooled_mean(pilot_stats, post_stats, w) for w in range(3)))
    sel = select_winner(pooled[1], pooled[2], rng)
    w = sel.winner
    tau_raw = pooled[w] - pooled[0]
    if bias_params is None:
        b = 0.0
    else:
        b = float(
            bias_from_moments(
                bias_params.delta,
                bias_params.sigma2[1] / effective[1],
                bias_params.sigma2[2] / effective[2],
                w,
            )
        )
    counts = tuple(pilot_stats.count[k] + post_stats.count[k] for k in range(3))
    return DesignOutcome.build(w, tau_raw, b, pooled, omega, counts, tie_broken=sel.tie_broken, **flags)


def _check_pilot(T: int, pilot: Allocation):
    if any(m < 2 for m in pilot):
        raise PreconditionError(f"every pilot arm needs at least 2 units, got {pilot.n}")
    if T <= pilot.total + 2:
        raise PreconditionError(f"total budget T={T} must exceed pilot size {pilot.total} + 2")


def run_two_stage(
    source: OutcomeSource,
    T: int,
    pilot,
    rng: np.random.Generator,
    true_hyperparams: Optional[Hyperparams] = None,
    debias: bool = True,
    estimator: str = "debiased",
    clip: Optional[ClipDomain] = None,
) -> TwoStageResult:
    """Pilot, plug-in allocation of the remaining units, pooled selection and debiasing.

    The bias term uses the pilot estimates unless ``true_hyperparams`` is
    given. ``debias=False`` reports the uncorrected estimate (bias 0).
    """
    pilot = pilot if isinstance(pilot, Allocation) else Allocation(pilot)
    _check_pilot(T, pilot)
    T1 = T - pilot.total
    pilot_stats = source.draw_stats(pilot, rng)
    est, floored = plug_in(pilot_stats)
    post = solve_adaptive_allocation(est, pilot, T1, clip=clip, estimator=estimator)
    post_stats = source.draw_stats(post, rng)
    bias_params = None if not debias else (true_hyperparams or est)
    outcome = conclude(pilot_stats, post_stats, rng, bias_params, pilot + post, variance_floored=floored)
    return TwoStageResult(outcome, TwoStagePlan(pilot, T, post), pilot_stats, post_stats)


def run_oracle_design(
    source: OutcomeSource,
    h: Hyperparams,
    T: int,
    rng: np.random.Generator,
    allocation: Optional[Allocation] = None,
    debias: bool = True,
) -> DesignOutcome:
    """Single batch at the known-hyperparameter optimum, debiased with the true values."""
    if allocation is None:
        allocation = solve_oracle_allocation(h, T)
    elif allocation.total != T:
        raise PreconditionError(f"allocation {allocation.n} does not sum to T={T}")
    stats = source.draw_stats(allocation, rng)
    return conclude(None, stats, rng, h if debias else None, allocation)
