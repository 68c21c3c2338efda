"""Sample statistics, winner selection and the conditional-bias correction."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .gaussian import DomainError, mills_ratio, std_cdf
from .model import Allocation, ArmStats, Hyperparams, PreconditionError, SelectionResult


def sample_stats(outcomes_by_arm: Sequence[Sequence[float]]) -> ArmStats:
    """Counts, sums, means and (n-1)-denominator variances per arm."""
    if len(outcomes_by_arm) != 3:
        raise PreconditionError("expected outcomes for exactly 3 arms")
    count, total, m2 = [], [], []
    for y in outcomes_by_arm:
        y = np.asarray(y, dtype=float)
        count.append(y.size)
        s = float(y.sum())
        total.append(s)
        m2.append(float(((y - s / y.size) ** 2).sum()) if y.size else 0.0)
    return ArmStats.from_moments(count, total, m2)


def merge_stats(a: ArmStats, b: ArmStats) -> ArmStats:
    """Statistics of the union of two samples (Chan's parallel update)."""
    count, total, m2 = [], [], []
    for w in range(3):
        na, nb = a.count[w], b.count[w]
        qa = (a.var_hat[w] or 0.0) * max(na - 1, 0)
        qb = (b.var_hat[w] or 0.0) * max(nb - 1, 0)
        n = na + nb
        q = qa + qb
        if na and nb:
            d = b.mean[w] - a.mean[w]
            q += d * d * na * nb / n
        count.append(n)
        total.append(a.total[w] + b.total[w])
        m2.append(q)
    return ArmStats.from_moments(count, total, m2)


def select_winner(mean1: float, mean2: float, rng: np.random.Generator) -> SelectionResult:
    """Treatment with the larger mean; exact ties go to a fair coin from ``rng``."""
    if not (math.isfinite(mean1) and math.isfinite(mean2)):
        raise DomainError("candidate means must be finite")
    if mean1 > mean2:
        return SelectionResult(1)
    if mean2 > mean1:
        return SelectionResult(2)
    return SelectionResult(1 if rng.random() < 0.5 else 2, tie_broken=True)


def bias_from_moments(delta, s1, s2, winner):
    """Conditional bias of the winner's mean given the per-arm mean variances.

    ``s1`` and ``s2`` are Var(mean1) and Var(mean2). Vectorized over all
    arguments; ``winner`` may be an array of 1s and 2s.
    """
    s1 = np.asarray(s1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    sd = np.sqrt(s1 + s2)
    r = np.asarray(delta, dtype=float) / sd
    w2 = np.asarray(winner) == 2
    signed = np.where(w2, r, -r)
    own = np.where(w2, s2, s1)
    return own / sd * np.asarray(mills_ratio(signed))


def bias_term(h: Hyperparams, a: Allocation, winner: int) -> float:
    """Expected overshoot of the selected arm's sample mean given it was selected."""
    if winner not in (1, 2):
        raise PreconditionError(f"winner must be 1 or 2, got {winner}")
    if a[1] < 1 or a[2] < 1:
        raise PreconditionError(f"both treatment arms need at least one unit, got {a.n}")
    return float(bias_from_moments(h.delta, h.sigma2[1] / a[1], h.sigma2[2] / a[2], winner))


def debias(tau_raw: float, b: float) -> float:
    return tau_raw - b


def pooled_mean(pilot: ArmStats, post: ArmStats, arm: int) -> tuple:
    """Mean of all outcomes of ``arm`` across both stages, and the pilot weight."""
    m, n = pilot.count[arm], post.count[arm]
    if m < 0 or n < 0 or m + n == 0:
        raise PreconditionError(f"arm {arm} has no outcomes in either stage")
    mean = (pilot.total[arm] + post.total[arm]) / (m + n)
    return mean, m / (m + n)


class ThresholdRule:
    """Selection rule that picks arm 2 when the estimated gap falls in given intervals.

    ``intervals`` are open ``(lo, hi)`` pairs on the estimated gap
    ``mean2 - mean1``; arm 1 is picked otherwise. The default rule is
    ``ThresholdRule([(0, inf)])``.
    """

    def __init__(self, intervals):
        self.intervals = [(float(lo), float(hi)) for lo, hi in intervals]
        for lo, hi in self.intervals:
            if not lo < hi:
                raise PreconditionError(f"empty interval ({lo}, {hi})")

    def prob_pick_2(self, delta, gap_sd):
        """P(rule picks arm 2) when the estimated gap is N(delta, gap_sd^2)."""
        delta = np.asarray(delta, dtype=float)
        gap_sd = np.asarray(gap_sd, dtype=float)
        p = np.zeros(np.broadcast(delta, gap_sd).shape)
        for lo, hi in self.intervals:
            upper = 1.0 if hi == math.inf else std_cdf((hi - delta) / gap_sd)
            lower = 0.0 if lo == -math.inf else std_cdf((lo - delta) / gap_sd)
            p = p + upper - lower
        return p

    def error_prob(self, delta, gap_sd):
        """Probability of picking the worse treatment; ``delta`` must be nonzero."""
        delta = np.asarray(delta, dtype=float)
        if np.any(delta == 0):
            raise PreconditionError("the wrong arm is undefined at delta = 0")
        p2 = self.prob_pick_2(delta, gap_sd)
        return np.where(delta > 0, 1.0 - p2, p2)


ARGMAX_RULE = ThresholdRule([(0.0, math.inf)])


def worst_case_error(rule: ThresholdRule, gap_sd_of, deltas) -> tuple:
    """Largest error probability of ``rule`` over ``deltas``, and where it occurs.

    ``gap_sd_of(delta)`` gives the standard deviation of the estimated gap
    under the allocation used at that gap.
    """
    deltas = np.asarray(deltas, dtype=float)
    sds = np.array([gap_sd_of(d) for d in deltas])
    err = rule.error_prob(deltas, sds)
    k = int(np.argmax(err))
    return float(err[k]), float(deltas[k])
