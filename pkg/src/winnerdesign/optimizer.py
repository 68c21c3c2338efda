"""Integer allocation search for the oracle and adaptive designs.

The feasible set is ``{(n0, n1, n2): n0 + n1 + n2 = budget, lo_w <= n_w <= hi_w}``
and is parameterized by ``(n0, n1)``. Small problems are scanned
exhaustively. Larger ones use a zooming grid: a grid of at most
``GRID_POINTS`` values per axis, then a window of +/- 2 grid steps around
the best point, repeated until the step is 1, at which point the window is
scanned exhaustively.

Ties are broken toward the smallest ``n1``, then the smallest ``n0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .model import (
    Allocation,
    ArmStats,
    ClipDomain,
    Hyperparams,
    InfeasibleError,
    NeymanTarget,
    PreconditionError,
)
from .objective import _check_estimator, design_mse_kernel, treatment_mse_kernel

EXHAUSTIVE_LIMIT = 20_000
GRID_POINTS = 33


@dataclass(frozen=True)
class SearchResult:
    allocation: Allocation
    value: float
    evaluations: int


def _axis(lo, hi, step):
    pts = np.arange(lo, hi + 1, step, dtype=np.int64)
    if pts[-1] != hi:
        pts = np.append(pts, hi)
    return pts


def _evaluate(objective, budget, n0_pts, n1_pts, lo2, hi2):
    # rows: n1, columns: n0 -> row-major argmin prefers small n1, then small n0
    n1 = n1_pts[:, None]
    n0 = n0_pts[None, :]
    n2 = budget - n0 - n1
    ok = (n2 >= lo2) & (n2 <= hi2)
    vals = np.full(ok.shape, np.inf)
    if ok.any():
        n0b, n1b, n2b = np.broadcast_arrays(n0, n1, n2)
        vals[ok] = objective(n0b[ok], n1b[ok], n2b[ok])
    k = int(np.argmin(vals))
    i, j = divmod(k, vals.shape[1])
    return int(n0_pts[j]), int(n1_pts[i]), float(vals[i, j]), int(ok.sum())


def grid_search(
    objective: Callable,
    budget: int,
    lower=(1, 1, 1),
    upper=None,
    exhaustive: Optional[bool] = None,
) -> SearchResult:
    """Minimize ``objective(n0, n1, n2)`` (vectorized) over the integer simplex."""
    lo = [int(x) for x in lower]
    hi = [budget] * 3 if upper is None else [int(x) for x in upper]
    hi = [min(h, budget - sum(lo) + l) for h, l in zip(hi, lo)]
    if any(h < l for h, l in zip(hi, lo)) or sum(lo) > budget or sum(hi) < budget:
        raise InfeasibleError(f"no allocation of {budget} units within bounds {lo}..{hi}")
    lo0, hi0 = lo[0], hi[0]
    lo1, hi1 = lo[1], hi[1]
    size = (hi0 - lo0 + 1) * (hi1 - lo1 + 1)
    if exhaustive is None:
        exhaustive = size <= EXHAUSTIVE_LIMIT
    if exhaustive:
        n0, n1, val, evals = _evaluate(objective, budget, _axis(lo0, hi0, 1), _axis(lo1, hi1, 1), lo[2], hi[2])
        return SearchResult(Allocation((n0, n1, budget - n0 - n1)), val, evals)

    box = [lo0, hi0, lo1, hi1]
    evals = 0
    while True:
        s0 = max(1, math.ceil((box[1] - box[0]) / (GRID_POINTS - 1)))
        s1 = max(1, math.ceil((box[3] - box[2]) / (GRID_POINTS - 1)))
        n0, n1, val, k = _evaluate(
            objective, budget, _axis(box[0], box[1], s0), _axis(box[2], box[3], s1), lo[2], hi[2]
        )
        evals += k
        if s0 == 1 and s1 == 1:
            break
        box = [
            max(lo0, n0 - 2 * s0),
            min(hi0, n0 + 2 * s0),
            max(lo1, n1 - 2 * s1),
            min(hi1, n1 + 2 * s1),
        ]
    return SearchResult(Allocation((n0, n1, budget - n0 - n1)), val, evals)


def optimize_within_treatment(h: Hyperparams, n_t: int, estimator: str = "debiased"):
    """Best split of ``n_t`` treatment units; returns ``(n1, n2, treatment_mse)``."""
    _check_estimator(estimator)
    if n_t < 2:
        raise PreconditionError(f"need at least 2 treatment units, got {n_t}")
    n1 = np.arange(1, n_t, dtype=float)
    vals = treatment_mse_kernel(h.delta, h.sigma2[1] / n1, h.sigma2[2] / (n_t - n1), estimator)
    k = int(np.argmin(vals))
    return k + 1, n_t - k - 1, float(vals[k])


def oracle_search(h: Hyperparams, T: int, estimator: str = "debiased", exhaustive=None) -> SearchResult:
    _check_estimator(estimator)
    if T < 3:
        raise InfeasibleError(f"budget T={T} is too small; need at least 3 units")

    def objective(n0, n1, n2):
        return design_mse_kernel(h, n0, n1, n2, estimator)

    return grid_search(objective, T, (1, 1, 1), exhaustive=exhaustive)


def solve_oracle_allocation(h: Hyperparams, T: int, estimator: str = "debiased", exhaustive=None) -> Allocation:
    """Allocation of ``T`` units minimizing the MSE under known hyperparameters.

    Equivalent to splitting treatment units optimally for every treatment
    total and then choosing the treatment/control split.
    """
    return oracle_search(h, T, estimator, exhaustive).allocation


def _estimates(stats) -> Hyperparams:
    if isinstance(stats, Hyperparams):
        return stats
    if isinstance(stats, ArmStats):
        return stats.to_hyperparams()
    raise TypeError(f"expected ArmStats or Hyperparams, got {type(stats).__name__}")


def adaptive_search(
    stats,
    pilot: Allocation,
    T1: int,
    clip: Optional[ClipDomain] = None,
    estimator: str = "debiased",
    lower=None,
    upper=None,
    exhaustive=None,
) -> SearchResult:
    _check_estimator(estimator)
    if T1 < 3:
        raise InfeasibleError(f"post-pilot budget T1={T1} is too small; need at least 3 units")
    est = _estimates(stats)
    m = pilot.n
    if lower is None:
        floor = clip.min_count(T1) if clip is not None else 1
        lower = (floor, floor, floor)

    def objective(n0, n1, n2):
        return design_mse_kernel(est, n0 + m[0], n1 + m[1], n2 + m[2], estimator)

    return grid_search(objective, T1, lower, upper, exhaustive)


def solve_adaptive_allocation(
    stats,
    pilot: Allocation,
    T1: int,
    clip: Optional[ClipDomain] = None,
    estimator: str = "debiased",
    exhaustive=None,
) -> Allocation:
    """Post-pilot allocation minimizing the plug-in MSE of the full budget.

    Every arm is scored at its total count (pilot + post), so the result is
    the top-up that brings the realized totals to the full-budget plan.
    Each post-pilot arm gets at least one unit, or at least
    ``ceil(T1 * clip.delta)`` units when ``clip`` is given.
    """
    return adaptive_search(stats, pilot, T1, clip, estimator, exhaustive=exhaustive).allocation


def top_up(target: Allocation, pilot: Allocation, estimates=None, estimator: str = "debiased") -> Allocation:
    """Post-pilot counts that bring ``pilot`` up to ``target``.

    An arm whose target is below its pilot count gets no post-pilot units;
    the remaining budget is then re-optimized over the other arms, which
    requires ``estimates``.
    """
    post = tuple(t - m for t, m in zip(target.n, pilot.n))
    if min(post) >= 0:
        return Allocation(post)
    if estimates is None:
        raise InfeasibleError(f"target {target.n} is below pilot {pilot.n}; estimates needed to re-optimize")
    T1 = target.total - pilot.total
    frozen = [p < 0 for p in post]
    m = pilot.n
    lower = tuple(0 if frozen[w] or m[w] > 0 else 1 for w in range(3))
    upper = tuple(0 if frozen[w] else T1 for w in range(3))
    est = _estimates(estimates)

    def objective(n0, n1, n2):
        return design_mse_kernel(est, n0 + m[0], n1 + m[1], n2 + m[2], estimator)

    return grid_search(objective, T1, lower, upper).allocation


def neyman_allocation(sigma0: float, sigma_w: float, winner: int = 2) -> NeymanTarget:
    """Control/winner split proportional to standard deviations."""
    if not (sigma0 > 0 and sigma_w > 0):
        raise PreconditionError("standard deviations must be positive")
    if winner not in (1, 2):
        raise PreconditionError(f"winner must be 1 or 2, got {winner}")
    p = [sigma0 / (sigma0 + sigma_w), 0.0, 0.0]
    p[winner] = sigma_w / (sigma0 + sigma_w)
    return NeymanTarget(tuple(p), winner)
