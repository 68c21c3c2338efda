import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from winnerdesign.model import (
    Allocation,
    ArmStats,
    ClipDomain,
    DesignOutcome,
    Hyperparams,
    InfeasibleError,
    NeymanTarget,
    PreconditionError,
    TwoStagePlan,
    canonical_json,
    gap_variance,
)


@pytest.mark.parametrize(
    "sigma2, n, expected",
    [((1.0, 1.0), (100, 100), 0.02), ((0.5, 0.5), (50, 200), 0.0125), ((1.0, 1.0), (1, 1), 2.0)],
)
def test_gap_variance(sigma2, n, expected):
    h = Hyperparams((0, 0, 0), (1.0, *sigma2))
    assert gap_variance(h, Allocation((5, *n))) == pytest.approx(expected, rel=1e-15)


def test_gap_variance_needs_both_treatments():
    h = Hyperparams((0, 0, 0), (1, 1, 1))
    with pytest.raises(PreconditionError):
        gap_variance(h, Allocation((5, 0, 3)))


@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3))
def test_accessors(mu):
    h = Hyperparams(tuple(mu), (1.0, 2.0, 3.0))
    assert h.delta == mu[2] - mu[1]
    assert h.tau(1) == mu[1] - mu[0]
    best = 2 if mu[2] >= mu[1] else 1
    assert h.w_max == best
    assert h.w_sub == 3 - h.w_max


def test_w_max_on_tie_is_arm_2():
    assert Hyperparams((0, 1, 1), (1, 1, 1)).w_max == 2


def test_from_ratio_normalizes_treatment_variances():
    h = Hyperparams.from_ratio(0.1, 1.25, 2.0)
    assert h.sigma2[1] + h.sigma2[2] == pytest.approx(1.0)
    assert h.sigma[2] / h.sigma[1] == pytest.approx(1.25)
    assert h.sigma2[0] == 2.0 and h.delta == pytest.approx(0.1)


def test_swapped_negates_gap():
    h = Hyperparams((0.0, 0.2, 0.5), (1.0, 2.0, 3.0))
    s = h.swapped()
    assert s.delta == pytest.approx(-h.delta)
    assert s.sigma2 == (1.0, 3.0, 2.0)


@pytest.mark.parametrize("sigma2", [(1, 0, 1), (1, -1, 1), (1, math.inf, 1)])
def test_hyperparams_reject_bad_variances(sigma2):
    with pytest.raises(PreconditionError):
        Hyperparams((0, 0, 0), sigma2)


def test_allocation_validation_and_arithmetic():
    a = Allocation((36, 24, 60))
    assert a.total == 120 and list(a) == [36, 24, 60]
    assert (a - Allocation((10, 10, 10))).n == (26, 14, 50)
    with pytest.raises(PreconditionError):
        Allocation((1, -1, 3))
    with pytest.raises(PreconditionError):
        Allocation((1.5, 1, 3))
    with pytest.raises(PreconditionError):
        Allocation((1, 2))


def test_plan_invariants():
    plan = TwoStagePlan(Allocation((10, 10, 10)), 120, Allocation((26, 14, 50)))
    assert (plan.T0, plan.T1) == (30, 90)
    assert plan.combined.n == (36, 24, 60)
    with pytest.raises(PreconditionError):
        TwoStagePlan(Allocation((1, 10, 10)), 111, Allocation((26, 14, 50)))
    with pytest.raises(PreconditionError):
        TwoStagePlan(Allocation((10, 10, 10)), 121, Allocation((26, 14, 50)))


def test_arm_stats_variance_defined_only_from_two():
    s = ArmStats.from_moments((1, 2, 4), (5.0, 6.0, 4.0), (0.0, 2.0, 0.0))
    assert s.var_hat == (None, 2.0, 0.0)
    assert not s.variances_defined
    with pytest.raises(PreconditionError):
        s.to_hyperparams()


def test_design_outcome_debiased_is_exact_difference():
    o = DesignOutcome.build(2, 0.3, 0.05, (0, 1, 2), (0.5, 0.5, 0.5))
    assert o.tau_debiased == 0.3 - 0.05


def test_clip_domain():
    c = ClipDomain.for_budget(0.25, 10_000)
    assert c.delta == pytest.approx(0.05)
    assert c.min_count(1000) == 50
    with pytest.raises(PreconditionError):
        ClipDomain(0.6, 0.1)
    with pytest.raises(InfeasibleError):
        ClipDomain(0.25, 0.4)


def test_json_round_trip():
    h = Hyperparams((0.0, 0.1, 0.2), (1.0, 0.5, 0.5))
    assert Hyperparams.from_dict(json.loads(h.to_json())) == h
    a = Allocation((1, 2, 3))
    assert Allocation.from_dict(a.to_dict()) == a
    plan = TwoStagePlan(Allocation((10, 10, 10)), 120, Allocation((26, 14, 50)))
    assert TwoStagePlan.from_dict(json.loads(plan.to_json())) == plan
    assert canonical_json(NeymanTarget((0.5, 0.0, 0.5))) == '{"p_star": [0.5, 0.0, 0.5], "winner": 2}'


def test_non_finite_serializes_as_null():
    s = ArmStats.from_moments((0, 2, 2), (0.0, 2.0, 2.0), (0.0, 0.0, 0.0))
    assert json.loads(s.to_json())["mean"][0] is None
