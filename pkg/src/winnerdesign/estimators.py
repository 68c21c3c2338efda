"""scikit-learn style wrappers.

``X`` is a single column of arm indices (0 control, 1 and 2 treatments)
and ``y`` the matching outcomes. The functional API in the other modules
does the work; these classes only validate input and hold fitted state.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted, check_random_state, check_X_y

from .design import VARIANCE_FLOOR, conclude
from .estimator import sample_stats
from .model import Allocation, ClipDomain, Hyperparams, PreconditionError
from .optimizer import solve_adaptive_allocation


def _arms_and_outcomes(X, y):
    X, y = check_X_y(X, y, ensure_2d=False, y_numeric=True)
    arms = np.asarray(X).reshape(len(y), -1)
    if arms.shape[1] != 1:
        raise ValueError(f"X must have a single column of arm indices, got {arms.shape[1]} columns")
    arms = arms[:, 0]
    if not np.all(np.isin(arms, (0, 1, 2))):
        raise ValueError("arm indices must be 0, 1 or 2")
    return arms.astype(int), np.asarray(y, dtype=float)


def _stats(arms, y):
    return sample_stats([y[arms == w] for w in range(3)])


class WinnerEffectEstimator(BaseEstimator):
    """Pick the better treatment and estimate its effect over control.

    With ``debias=True`` the estimate is corrected for selection using
    ``hyperparams`` when given, else plug-in estimates from the data.
    """

    def __init__(self, debias=True, hyperparams=None, random_state=None):
        self.debias = debias
        self.hyperparams = hyperparams
        self.random_state = random_state

    def fit(self, X, y):
        arms, y = _arms_and_outcomes(X, y)
        stats = _stats(arms, y)
        if min(stats.count) < 1:
            raise ValueError(f"every arm needs at least one outcome, got counts {stats.count}")
        rng = check_random_state(self.random_state)
        gen = np.random.default_rng(rng.randint(0, 2**31 - 1))
        params = None
        if self.debias:
            if self.hyperparams is not None:
                params = self.hyperparams if isinstance(self.hyperparams, Hyperparams) else Hyperparams(*self.hyperparams)
            else:
                if not stats.variances_defined:
                    raise ValueError("plug-in debiasing needs at least 2 outcomes per arm")
                params = stats.to_hyperparams(VARIANCE_FLOOR)
        self.stats_ = stats
        self.outcome_ = conclude(None, stats, gen, params, Allocation(stats.count))
        self.winner_ = self.outcome_.winner
        self.tau_raw_ = self.outcome_.tau_raw
        self.bias_ = self.outcome_.bias_term
        self.tau_ = self.outcome_.tau_debiased
        return self

    def predict(self, X):
        """Estimated effect over control for each row's arm; the winner's is debiased."""
        check_is_fitted(self, "outcome_")
        arms = np.asarray(X).reshape(-1)
        if not np.all(np.isin(arms, (0, 1, 2))):
            raise ValueError("arm indices must be 0, 1 or 2")
        means = np.asarray(self.outcome_.pooled_means)
        effects = means - means[0]
        effects[self.winner_] = self.tau_
        return effects[arms.astype(int)]


class AdaptiveAllocator(BaseEstimator):
    """Post-pilot allocation of ``T`` total units fitted on pilot outcomes."""

    def __init__(self, T=300, estimator="debiased", clip_alpha=None):
        self.T = T
        self.estimator = estimator
        self.clip_alpha = clip_alpha

    def fit(self, X, y):
        arms, y = _arms_and_outcomes(X, y)
        stats = _stats(arms, y)
        if min(stats.count) < 2:
            raise PreconditionError(f"every pilot arm needs at least 2 outcomes, got {stats.count}")
        pilot = Allocation(stats.count)
        T1 = int(self.T) - pilot.total
        clip = ClipDomain.for_budget(self.clip_alpha, int(self.T)) if self.clip_alpha is not None else None
        self.pilot_ = pilot
        self.estimates_ = stats.to_hyperparams(VARIANCE_FLOOR)
        self.allocation_ = solve_adaptive_allocation(self.estimates_, pilot, T1, clip=clip, estimator=self.estimator)
        return self

    def predict(self, X=None):
        """Post-pilot counts per arm as an array of length 3."""
        check_is_fitted(self, "allocation_")
        return np.array(self.allocation_.n)
