"""Value types shared across the package.

Arm indices are fixed: 0 is control, 1 and 2 are the two treatments.
All types are frozen dataclasses and serialize to plain JSON through
``to_dict`` / ``from_dict`` using the field names below.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from typing import Optional, Sequence

ARMS = (0, 1, 2)
TREATMENTS = (1, 2)


class PreconditionError(ValueError):
    """An argument violates a documented precondition."""


class InfeasibleError(ValueError):
    """No allocation satisfies the requested constraints."""


def _triple(values, name, cast=float):
    values = tuple(cast(v) for v in values)
    if len(values) != 3:
        raise PreconditionError(f"{name} must have exactly 3 entries, got {len(values)}")
    return values


class _JsonMixin:
    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


@dataclass(frozen=True)
class Hyperparams(_JsonMixin):
    """Super-population means and variances per arm."""

    mu: tuple
    sigma2: tuple

    def __post_init__(self):
        object.__setattr__(self, "mu", _triple(self.mu, "mu"))
        object.__setattr__(self, "sigma2", _triple(self.sigma2, "sigma2"))
        if not all(math.isfinite(m) for m in self.mu):
            raise PreconditionError("means must be finite")
        if not all(math.isfinite(s) and s > 0 for s in self.sigma2):
            raise PreconditionError(f"variances must be positive and finite, got {self.sigma2}")

    @classmethod
    def from_gap(cls, delta: float, sigma2, mu0: float = 0.0, mu1: float = 0.0) -> "Hyperparams":
        """Means (mu0, mu1, mu1 + delta), the layout used by the simulations."""
        return cls((mu0, mu1, mu1 + delta), sigma2)

    @classmethod
    def from_ratio(cls, delta: float, sigma_ratio: float, sigma0_sq: float = 1.0) -> "Hyperparams":
        """Treatment variances with sigma2/sigma1 = ratio and sigma1^2 + sigma2^2 = 1."""
        if not sigma_ratio > 0:
            raise PreconditionError("sigma_ratio must be positive")
        s1 = 1.0 / (1.0 + sigma_ratio**2)
        return cls.from_gap(delta, (sigma0_sq, s1, 1.0 - s1))

    @property
    def delta(self) -> float:
        return self.mu[2] - self.mu[1]

    @property
    def sigma(self) -> tuple:
        return tuple(math.sqrt(s) for s in self.sigma2)

    def tau(self, w: int) -> float:
        return self.mu[w] - self.mu[0]

    @property
    def w_max(self) -> int:
        # a zero gap makes both arms optimal; report arm 2
        return 2 if self.mu[2] >= self.mu[1] else 1

    @property
    def w_sub(self) -> int:
        return 3 - self.w_max

    def swapped(self) -> "Hyperparams":
        """Relabel treatments 1 <-> 2."""
        return Hyperparams(
            (self.mu[0], self.mu[2], self.mu[1]),
            (self.sigma2[0], self.sigma2[2], self.sigma2[1]),
        )


@dataclass(frozen=True)
class Allocation(_JsonMixin):
    """Units per arm for one batch."""

    n: tuple

    def __post_init__(self):
        n = _triple(self.n, "n", cast=_as_int)
        if any(v < 0 for v in n):
            raise PreconditionError(f"counts must be nonnegative, got {n}")
        object.__setattr__(self, "n", n)

    def __getitem__(self, w: int) -> int:
        return self.n[w]

    def __iter__(self):
        return iter(self.n)

    @property
    def total(self) -> int:
        return sum(self.n)

    def __add__(self, other: "Allocation") -> "Allocation":
        return Allocation(tuple(a + b for a, b in zip(self.n, other.n)))

    def __sub__(self, other: "Allocation") -> "Allocation":
        return Allocation(tuple(a - b for a, b in zip(self.n, other.n)))


def _as_int(v) -> int:
    if isinstance(v, bool):
        raise PreconditionError("counts must be integers")
    iv = int(v)
    if iv != v:
        raise PreconditionError(f"counts must be integers, got {v!r}")
    return iv


def gap_variance(h: Hyperparams, a: Allocation) -> float:
    """V = sigma1^2/n1 + sigma2^2/n2, the variance of the estimated gap."""
    if a[1] < 1 or a[2] < 1:
        raise PreconditionError(f"both treatment arms need at least one unit, got {a.n}")
    return h.sigma2[1] / a[1] + h.sigma2[2] / a[2]


@dataclass(frozen=True)
class TwoStagePlan(_JsonMixin):
    pilot: Allocation
    total_budget: int
    post: Allocation

    def __post_init__(self):
        if isinstance(self.pilot, dict):
            object.__setattr__(self, "pilot", Allocation(self.pilot["n"]))
        if isinstance(self.post, dict):
            object.__setattr__(self, "post", Allocation(self.post["n"]))
        if any(m < 2 for m in self.pilot):
            raise PreconditionError(f"every pilot arm needs at least 2 units, got {self.pilot.n}")
        if self.pilot.total + self.post.total != self.total_budget:
            raise PreconditionError(
                f"pilot {self.pilot.n} + post {self.post.n} does not sum to T={self.total_budget}"
            )

    @property
    def T0(self) -> int:
        return self.pilot.total

    @property
    def T1(self) -> int:
        return self.total_budget - self.T0

    @property
    def combined(self) -> Allocation:
        return self.pilot + self.post


@dataclass(frozen=True)
class ArmStats(_JsonMixin):
    """Per-arm count, sum, mean and unbiased variance (``None`` when count < 2)."""

    count: tuple
    total: tuple
    mean: tuple
    var_hat: tuple

    @classmethod
    def from_moments(cls, count: Sequence[int], total: Sequence[float], m2: Sequence[float]):
        """Build from counts, sums and centred sums of squares."""
        mean, var = [], []
        for n, s, q in zip(count, total, m2):
            mean.append(s / n if n > 0 else math.nan)
            var.append(max(q, 0.0) / (n - 1) if n >= 2 else None)
        return cls(tuple(int(c) for c in count), tuple(float(s) for s in total), tuple(mean), tuple(var))

    @property
    def delta_hat(self) -> float:
        return self.mean[2] - self.mean[1]

    @property
    def variances_defined(self) -> bool:
        return all(v is not None for v in self.var_hat)

    def to_hyperparams(self, floor: float = 1e-12) -> Hyperparams:
        """Plug-in hyperparameters; zero variances are floored at ``floor``."""
        if not self.variances_defined:
            raise PreconditionError(f"pilot variances undefined for counts {self.count}")
        return Hyperparams(self.mean, tuple(max(v, floor) for v in self.var_hat))

    def floored(self, floor: float = 1e-12) -> bool:
        return any(v is not None and v < floor for v in self.var_hat)


@dataclass(frozen=True)
class DesignOutcome(_JsonMixin):
    winner: int
    tau_raw: float
    bias_term: float
    tau_debiased: float
    pooled_means: tuple
    omega: tuple
    counts: tuple = (0, 0, 0)
    tie_broken: bool = False
    variance_floored: bool = False

    @classmethod
    def build(cls, winner, tau_raw, bias_term, pooled_means, omega, counts=(0, 0, 0), **flags):
        return cls(
            winner=int(winner),
            tau_raw=float(tau_raw),
            bias_term=float(bias_term),
            tau_debiased=float(tau_raw) - float(bias_term),
            pooled_means=tuple(float(m) for m in pooled_means),
            omega=tuple(float(o) for o in omega),
            counts=tuple(int(c) for c in counts),
            **flags,
        )


@dataclass(frozen=True)
class ClipDomain(_JsonMixin):
    """Lower bound ``delta`` on every allocation proportion."""

    alpha: float
    delta: float

    def __post_init__(self):
        if not 0 < self.alpha < 0.5:
            raise PreconditionError(f"alpha must lie in (0, 1/2), got {self.alpha}")
        if not 0 < self.delta < 1.0 / 3.0:
            raise InfeasibleError(f"clip level {self.delta} leaves an empty simplex")

    @classmethod
    def for_budget(cls, alpha: float, T: int) -> "ClipDomain":
        return cls(alpha, 0.5 * T ** (-alpha))

    def min_count(self, T1: int) -> int:
        return max(1, math.ceil(T1 * self.delta - 1e-9))


@dataclass(frozen=True)
class NeymanTarget(_JsonMixin):
    p_star: tuple
    winner: int = 2

    def __post_init__(self):
        object.__setattr__(self, "p_star", _triple(self.p_star, "p_star"))


@dataclass(frozen=True)
class SelectionResult(_JsonMixin):
    winner: int
    tie_broken: bool = False


def canonical_json(obj, indent: Optional[int] = None) -> str:
    data = obj.to_dict() if hasattr(obj, "to_dict") else obj
    return json.dumps(_jsonable(data), indent=indent, sort_keys=True)
