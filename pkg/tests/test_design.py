import math

import numpy as np
import pytest

from winnerdesign.design import (
    NormalSource,
    OutcomeSource,
    conclude,
    equal_split,
    run_oracle_design,
    run_two_stage,
)
from winnerdesign.estimator import sample_stats
from winnerdesign.model import Allocation, Hyperparams, PreconditionError
from winnerdesign.optimizer import solve_adaptive_allocation, solve_oracle_allocation


class ConstantSource(OutcomeSource):
    def draw(self, arm, count, rng):
        return np.full(count, float(arm))


class RecordingSource(OutcomeSource):
    """Normal draws that keep every outcome handed out, per arm."""

    def __init__(self, h):
        self.h = h
        self.seen = {0: [], 1: [], 2: []}

    def draw(self, arm, count, rng):
        y = rng.normal(self.h.mu[arm], math.sqrt(self.h.sigma2[arm]), count)
        self.seen[arm].extend(y)
        return y


def test_equal_split_remainder_order():
    assert equal_split(30).n == (10, 10, 10)
    assert equal_split(31).n == (11, 10, 10)
    assert equal_split(32).n == (11, 11, 10)


def test_constant_source():
    res = run_two_stage(ConstantSource(), 30, (3, 3, 3), np.random.default_rng(0))
    o = res.outcome
    assert o.winner == 2
    assert o.tau_raw == 2.0
    assert o.variance_floored
    assert math.isfinite(o.tau_debiased)


def test_pooled_means_are_grand_means_and_plan_sums():
    h = Hyperparams.from_ratio(0.15, 1.25)
    src = RecordingSource(h)
    res = run_two_stage(src, 300, (34, 33, 33), np.random.default_rng(4))
    for w in range(3):
        assert res.outcome.pooled_means[w] == pytest.approx(np.mean(src.seen[w]), abs=1e-12)
        assert res.outcome.counts[w] == len(src.seen[w])
    assert res.plan.post.total == 300 - 100
    assert res.outcome.omega[1] == pytest.approx(33 / (33 + res.plan.post[1]))


def test_plan_matches_solver_on_same_pilot_draw():
    h = Hyperparams.from_ratio(0.1, 0.8)
    res = run_two_stage(NormalSource(h), 400, (20, 20, 20), np.random.default_rng(8))
    est = res.pilot_stats.to_hyperparams()
    assert res.plan.post == solve_adaptive_allocation(est, Allocation((20, 20, 20)), 340)


def test_bias_uses_pilot_gap_and_effective_counts():
    h = Hyperparams.from_ratio(0.1, 0.8)
    res = run_two_stage(NormalSource(h), 400, (20, 20, 20), np.random.default_rng(9))
    est = res.pilot_stats.to_hyperparams()
    n = res.plan.combined
    V = est.sigma2[1] / n[1] + est.sigma2[2] / n[2]
    r = est.delta / math.sqrt(V)
    w = res.outcome.winner
    s = est.sigma2[w] / n[w]
    sign = 1 if w == 2 else -1
    phi = math.exp(-0.5 * r * r) / math.sqrt(2 * math.pi)
    Phi = 0.5 * math.erfc(-sign * r / math.sqrt(2))
    assert res.outcome.bias_term == pytest.approx(s / math.sqrt(V) * phi / Phi, rel=1e-12)


def test_no_debias_reports_raw():
    res = run_two_stage(NormalSource(Hyperparams.from_ratio(0.1, 1.0)), 90, (10, 10, 10), np.random.default_rng(1), debias=False)
    assert res.outcome.bias_term == 0.0
    assert res.outcome.tau_debiased == res.outcome.tau_raw


def test_seed_reproducible():
    h = Hyperparams.from_ratio(0.1, 1.0)
    a = run_two_stage(NormalSource(h), 300, (34, 33, 33), np.random.default_rng(42))
    b = run_two_stage(NormalSource(h), 300, (34, 33, 33), np.random.default_rng(42))
    assert a == b


@pytest.mark.parametrize("T, pilot", [(32, (10, 10, 10)), (30, (10, 10, 10)), (60, (1, 10, 10))])
def test_preconditions(T, pilot):
    with pytest.raises(PreconditionError):
        run_two_stage(NormalSource(Hyperparams.from_ratio(0.1, 1.0)), T, pilot, np.random.default_rng(0))


def test_sufficient_statistic_sampling_matches_raw():
    h = Hyperparams((0.0, 0.3, -0.2), (1.0, 2.0, 0.5))
    counts = (5, 8, 3)
    fast = NormalSource(h)
    slow = NormalSource(h, raw=True)
    rng_a, rng_b = np.random.default_rng(0), np.random.default_rng(1)
    A = np.array([[fast.draw_stats(counts, rng_a).mean[w] for w in range(3)] + list(fast.draw_stats(counts, rng_a).var_hat) for _ in range(20000)])
    B = np.array([[slow.draw_stats(counts, rng_b).mean[w] for w in range(3)] + list(slow.draw_stats(counts, rng_b).var_hat) for _ in range(20000)])
    se = np.sqrt(A.var(0) / 20000 + B.var(0) / 20000)
    assert np.all(np.abs(A.mean(0) - B.mean(0)) < 4 * se)


def test_oracle_design_uses_oracle_allocation():
    h = Hyperparams.from_ratio(0.15, 1.25)
    o = run_oracle_design(NormalSource(h), h, 300, np.random.default_rng(0))
    assert o.counts == solve_oracle_allocation(h, 300).n


def test_oracle_design_large_gap_picks_best():
    h = Hyperparams.from_gap(5.0, (1.0, 0.5, 0.5))
    a = solve_oracle_allocation(h, 300)
    rng = np.random.default_rng(3)
    wins = [run_oracle_design(NormalSource(h), h, 300, rng, allocation=a).winner for _ in range(10_000)]
    assert np.mean(np.array(wins) == 2) >= 0.999


def test_oracle_design_null_is_fair():
    h = Hyperparams((0, 0, 0), (1, 1, 1))
    a = solve_oracle_allocation(h, 90)
    rng = np.random.default_rng(5)
    wins = np.array([run_oracle_design(NormalSource(h), h, 90, rng, allocation=a).winner for _ in range(10_000)])
    assert abs(np.mean(wins == 2) - 0.5) <= 3 * math.sqrt(0.25 / 10_000)


def test_oracle_design_allocation_must_sum():
    h = Hyperparams.from_ratio(0.1, 1.0)
    with pytest.raises(PreconditionError):
        run_oracle_design(NormalSource(h), h, 300, np.random.default_rng(0), allocation=Allocation((1, 1, 1)))


def _conditional_errors(run, reps, seed, h):
    rng = np.random.default_rng(seed)
    w = np.empty(reps, int)
    err = np.empty(reps)
    for i in range(reps):
        o = run(rng)
        w[i], err[i] = o.winner, o.tau_debiased - h.tau(o.winner)
    out = {}
    for arm in (1, 2):
        e = err[w == arm]
        if e.size > 1:
            out[arm] = (e.mean(), e.std(ddof=1) / math.sqrt(e.size))
    return out


def test_oracle_design_is_conditionally_unbiased():
    h = Hyperparams.from_ratio(0.15, 1.25)
    res = _conditional_errors(lambda rng: run_oracle_design(NormalSource(h), h, 300, rng), 20_000, 17, h)
    for m, se in res.values():
        assert abs(m) <= 3 * se


@pytest.mark.xfail(
    strict=True,
    reason="pilot-dependent post allocation makes pooled means non-Gaussian given the winner; "
    "true-hyperparameter debiasing leaves about -0.006 on arm 2 at T=300",
)
def test_two_stage_true_hyperparameters_unbiased_at_small_T():
    h = Hyperparams.from_ratio(0.15, 1.25)
    res = _conditional_errors(
        lambda rng: run_two_stage(NormalSource(h), 300, (34, 33, 33), rng, true_hyperparams=h).outcome, 20_000, 17, h
    )
    for m, se in res.values():
        assert abs(m) <= 3 * se


def test_two_stage_true_hyperparameter_bias_vanishes_at_large_T():
    h = Hyperparams.from_ratio(0.15, 1.25)
    res = _conditional_errors(
        lambda rng: run_two_stage(NormalSource(h), 3000, (333, 333, 333), rng, true_hyperparams=h).outcome, 10_000, 17, h
    )
    for m, se in res.values():
        assert abs(m) <= 3 * se


def test_conclude_without_pilot():
    stats = sample_stats([[0.0, 1.0], [1.0, 2.0], [3.0, 4.0]])
    o = conclude(None, stats, np.random.default_rng(0), None, Allocation((2, 2, 2)))
    assert o.winner == 2 and o.tau_raw == 3.0 and o.omega == (0.0, 0.0, 0.0)
