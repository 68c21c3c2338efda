"""Closed-form mean squared errors of the winner's effect estimate.

The treatment part of the MSE depends on the design only through the
variances of the two treatment means, ``s1 = sigma1^2/n1`` and
``s2 = sigma2^2/n2``; the control part is ``sigma0^2/n0``. The array kernels
below take those variances directly, so counts may be real-valued.

Two estimators are supported:

``"debiased"``
    the selected arm's mean minus its conditional bias,
``"raw"``
    the selected arm's mean with no correction.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erfc

from .gaussian import mills_ratio
from .model import Allocation, ArmStats, Hyperparams, PreconditionError

ESTIMATORS = ("debiased", "raw")

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_SQRT_HALF = math.sqrt(0.5)


def _check_estimator(estimator):
    if estimator not in ESTIMATORS:
        raise ValueError(f"estimator must be one of {ESTIMATORS}, got {estimator!r}")


def treatment_mse_kernel(delta, s1, s2, estimator="debiased"):
    """E[(selected mean [- bias] - best mean)^2] for arrays of (delta, s1, s2)."""
    delta = np.asarray(delta, dtype=float)
    s1 = np.asarray(s1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    v = s1 + s2
    sd = np.sqrt(v)
    r = delta / sd
    phi = _INV_SQRT_2PI * np.exp(-0.5 * r * r)
    cdf_pos = 0.5 * erfc(-r * _SQRT_HALF)
    cdf_neg = 0.5 * erfc(r * _SQRT_HALF)
    if estimator == "debiased":
        c1sq = s1 * s1 / v
        c2sq = s2 * s2 / v
        # phi * Mills keeps phi^2/Phi finite for any r
        out = (
            s2 * cdf_pos
            - c2sq * phi * (r + mills_ratio(r))
            + s1 * cdf_neg
            + c1sq * phi * (r - mills_ratio(-r))
        )
        miss = np.where(delta > 0, cdf_neg, np.where(delta < 0, cdf_pos, 0.0))
        return out + delta * delta * miss
    if estimator == "raw":
        c1 = s1 / sd
        c2 = s2 / sd
        d2 = np.minimum(delta, 0.0)
        d1 = -np.maximum(delta, 0.0)
        return (
            cdf_pos * (d2 * d2 + s2)
            + c2 * phi * (2.0 * d2 - c2 * r)
            + cdf_neg * (d1 * d1 + s1)
            + c1 * phi * (2.0 * d1 + c1 * r)
        )
    _check_estimator(estimator)


def design_mse_kernel(h: Hyperparams, n0, n1, n2, estimator="debiased"):
    """Full MSE (treatment + control) on arrays of real-valued counts."""
    n0 = np.asarray(n0, dtype=float)
    t = treatment_mse_kernel(h.delta, h.sigma2[1] / np.asarray(n1, float), h.sigma2[2] / np.asarray(n2, float), estimator)
    return t + h.sigma2[0] / n0


def _float(x):
    return float(x) if np.ndim(x) == 0 else x


def mse_treatment(h: Hyperparams, n1, n2, estimator: str = "debiased"):
    """Treatment part of the MSE for counts ``n1``, ``n2`` (>= 1, may be real)."""
    _check_estimator(estimator)
    if np.any(np.asarray(n1) < 1) or np.any(np.asarray(n2) < 1):
        raise PreconditionError("treatment counts must be at least 1")
    return _float(treatment_mse_kernel(h.delta, h.sigma2[1] / np.asarray(n1, float), h.sigma2[2] / np.asarray(n2, float), estimator))


def oracle_mse(h: Hyperparams, a: Allocation, estimator: str = "debiased") -> float:
    """MSE of the winner's effect estimate under allocation ``a``."""
    if a[0] < 1:
        raise PreconditionError(f"control needs at least one unit, got {a.n}")
    return mse_treatment(h, a[1], a[2], estimator) + h.sigma2[0] / a[0]


def _plug_in(stats) -> Hyperparams:
    if isinstance(stats, Hyperparams):
        return stats
    if isinstance(stats, ArmStats):
        return stats.to_hyperparams()
    raise TypeError(f"expected ArmStats or Hyperparams, got {type(stats).__name__}")


def adaptive_objective(stats, pilot: Allocation, candidate: Allocation, estimator: str = "debiased") -> float:
    """Plug-in full-budget MSE for a post-pilot candidate.

    Pilot estimates replace the hyperparameters and every arm is evaluated at
    its effective count ``candidate + pilot``. ``stats`` may also be a
    :class:`Hyperparams` of already-formed estimates.
    """
    est = _plug_in(stats)
    if not math.isfinite(est.delta):
        raise PreconditionError("estimated gap is not finite")
    if min(candidate.n) < 1:
        raise PreconditionError(f"candidate counts must be at least 1, got {candidate.n}")
    return oracle_mse(est, candidate + pilot, estimator)


def neyman_variance(h: Hyperparams, p, winner: int) -> float:
    """sigma_winner^2 / p_winner + sigma0^2 / p0, ignoring the other arm."""
    p = tuple(float(x) for x in p)
    if len(p) != 3 or abs(sum(p) - 1.0) > 1e-9 or min(p) < 0:
        raise PreconditionError(f"proportions must lie on the simplex, got {p}")
    if p[0] <= 0 or p[winner] <= 0:
        raise PreconditionError("control and winner proportions must be positive")
    return h.sigma2[winner] / p[winner] + h.sigma2[0] / p[0]
