"""Monte Carlo property suites behind ``winnerdesign validate``.

Each suite returns a list of :class:`Check` records with the observed value,
the reference value, the deviation and the tolerance it was held to.
Replication counts are parameters so tests can run scaled-down versions.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Dict, List

import numpy as np

from .design import NormalSource, equal_split, run_two_stage
from .estimator import bias_from_moments
from .gaussian import GaussPair, std_cdf, trunc_mean, trunc_second_moment
from .model import Allocation, ClipDomain, Hyperparams
from .objective import mse_treatment, oracle_mse
from .optimizer import neyman_allocation

CHUNK = 1_000_000


@dataclass(frozen=True)
class Check:
    suite: str
    name: str
    observed: float
    expected: float
    deviation: float
    tolerance: float
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"[{status}] {self.suite}/{self.name}: observed={self.observed:.6g} "
            f"expected={self.expected:.6g} |dev|={self.deviation:.3g} tol={self.tolerance:.3g}"
        )

    def to_dict(self) -> dict:
        return asdict(self)


def _se_check(suite, name, observed, expected, se, k=3.0) -> Check:
    dev = abs(observed - expected)
    return Check(suite, name, float(observed), float(expected), float(dev), float(k * se), bool(dev <= k * se))


def _rng(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


# --------------------------------------------------------------------------


def random_pair_configs(n: int, rng) -> list:
    """Random (pair, a, b) with a truncation probability of at least ~2%."""
    out = []
    while len(out) < n:
        p = GaussPair(
            float(rng.uniform(-1, 1)),
            float(rng.uniform(-1, 1)),
            float(rng.uniform(0.2, 2.0)),
            float(rng.uniform(0.2, 2.0)),
        )
        a = float(rng.uniform(-1, 1))
        b = float(rng.uniform(-1, 1))
        if std_cdf((p.mu_x - p.mu_y - a) / p.gap_sd) > 0.02:
            out.append((p, a, b))
    return out


def suite_lemma(seed: int = 0, draws: int = 10_000_000, n_configs: int = 20) -> List[Check]:
    """Truncated first and second moments against direct simulation."""
    checks = []
    configs = random_pair_configs(n_configs, _rng(seed, 0))
    for i, (p, a, b) in enumerate(configs):
        rng = _rng(seed, 1, i)
        n = s1 = s2 = q1 = q2 = 0.0
        left = draws
        while left > 0:
            k = min(CHUNK, left)
            left -= k
            x = rng.normal(p.mu_x, math.sqrt(p.var_x), k)
            y = rng.normal(p.mu_y, math.sqrt(p.var_y), k)
            sel = x[x > y + a]
            z = (sel + b) ** 2
            n += sel.size
            s1 += sel.sum()
            q1 += (sel * sel).sum()
            s2 += z.sum()
            q2 += (z * z).sum()
        m1, m2 = s1 / n, s2 / n
        se1 = math.sqrt(max(q1 / n - m1 * m1, 0.0) / n)
        se2 = math.sqrt(max(q2 / n - m2 * m2, 0.0) / n)
        checks.append(_se_check("lemma", f"config{i:02d}/mean", m1, trunc_mean(p, a), se1))
        checks.append(_se_check("lemma", f"config{i:02d}/second_moment", m2, trunc_second_moment(p, a, b), se2))
    return checks


# --------------------------------------------------------------------------


def simulate_fixed(h: Hyperparams, a: Allocation, reps: int, rng, debias_with=None):
    """Winner and effect estimate of a single fixed-allocation batch, ``reps`` times.

    Arm means are drawn from their exact sampling distributions. Returns
    ``(winner, tau_raw, bias, selected_mean_error)`` arrays.
    """
    means = [rng.normal(h.mu[w], math.sqrt(h.sigma2[w] / a[w]), reps) for w in range(3)]
    winner = np.where(means[2] > means[1], 2, 1)
    ties = means[2] == means[1]
    if ties.any():
        winner[ties] = np.where(rng.random(int(ties.sum())) < 0.5, 1, 2)
    sel_mean = np.where(winner == 2, means[2], means[1])
    tau_raw = sel_mean - means[0]
    if debias_with is None:
        bias = np.zeros(reps)
    else:
        g = debias_with
        bias = bias_from_moments(g.delta, g.sigma2[1] / a[1], g.sigma2[2] / a[2], winner)
    mu_sel = np.where(winner == 2, h.mu[2], h.mu[1])
    return winner, tau_raw, bias, sel_mean - mu_sel


def _cond_mean_se(values, mask):
    v = values[mask]
    if v.size < 2:
        return math.nan, math.nan
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


BIAS_ALLOCATION = Allocation((30, 20, 30))


def suite_bias(seed: int = 0, reps: int = 1_000_000, unbiased_reps: int = 200_000) -> List[Check]:
    """Conditional bias formula, and conditional unbiasedness after correction."""
    checks = []
    a = BIAS_ALLOCATION
    for i, (delta, ratio) in enumerate((d, r) for d in (0.0, 0.1, 0.5) for r in (0.8, 1.25)):
        h = Hyperparams.from_ratio(delta, ratio)
        winner, _, _, err = simulate_fixed(h, a, reps, _rng(seed, 2, i))
        for w in (1, 2):
            m, se = _cond_mean_se(err, winner == w)
            expected = float(bias_from_moments(h.delta, h.sigma2[1] / a[1], h.sigma2[2] / a[2], w))
            checks.append(_se_check("bias", f"delta={delta}/ratio={ratio}/w={w}", m, expected, se))

    # true-hyperparameter correction removes the conditional bias; the raw estimate keeps it
    h = Hyperparams.from_ratio(0.1, 1.25)
    a = Allocation((100, 100, 100))
    winner, tau_raw, bias, _ = simulate_fixed(h, a, unbiased_reps, _rng(seed, 3), debias_with=h)
    tau = np.where(winner == 2, h.tau(2), h.tau(1))
    for w in (1, 2):
        g = winner == w
        m, se = _cond_mean_se(tau_raw - bias - tau, g)
        checks.append(_se_check("bias", f"debiased_conditional/w={w}", m, 0.0, se))
        m_raw, se_raw = _cond_mean_se(tau_raw - tau, g)
        dev = abs(m_raw)
        checks.append(Check("bias", f"raw_conditional_exceeds_5se/w={w}", m_raw, 0.0, dev, 5 * se_raw, bool(dev > 5 * se_raw)))
    return checks


# --------------------------------------------------------------------------

MSE_GRID = (
    (Hyperparams.from_ratio(0.0, 1.0), Allocation((100, 100, 100))),
    (Hyperparams.from_ratio(0.1, 0.8), Allocation((120, 60, 120))),
    (Hyperparams.from_ratio(0.15, 1.25), Allocation((150, 50, 100))),
    (Hyperparams.from_ratio(-0.2, 1.25, 2.0), Allocation((80, 40, 30))),
)


def suite_mse(seed: int = 0, reps: int = 200_000) -> List[Check]:
    """Closed-form MSE against simulation, and the selection/variance decomposition."""
    checks = []
    spot = mse_treatment(Hyperparams((0.0, 0.0, 0.0), (1.0, 1.0, 1.0)), 100, 100)
    exact = (1 - 1 / math.pi) / 100
    checks.append(Check("mse", "spot_delta0", spot, exact, abs(spot - exact), 1e-9, abs(spot - exact) <= 1e-9))
    for i, (h, a) in enumerate(MSE_GRID):
        winner, tau_raw, bias, _ = simulate_fixed(h, a, reps, _rng(seed, 4, i), debias_with=h)
        est = tau_raw - bias
        sq = (est - h.tau(h.w_max)) ** 2
        closed = oracle_mse(h, a)
        label = f"delta={h.delta:g}/n={a.n}"
        checks.append(_se_check("mse", f"closed_form/{label}", float(sq.mean()), closed, float(sq.std(ddof=1) / math.sqrt(reps))))

        # per-batch Delta^2 * mis-selection + frequency-weighted conditional variance
        def decomposition(idx):
            w = winner[idx]
            e = est[idx]
            val = h.delta**2 * float(np.mean(w != h.w_max))
            for arm in (1, 2):
                g = w == arm
                if g.sum() >= 2:
                    val += g.mean() * float(np.var(e[g], ddof=1))
            return val

        batches = np.array_split(np.arange(reps), 100)
        per = np.array([decomposition(b) for b in batches])
        checks.append(
            _se_check(
                "mse",
                f"decomposition/{label}",
                decomposition(np.arange(reps)),
                closed,
                float(per.std(ddof=1) / math.sqrt(per.size)),
            )
        )
    return checks


# --------------------------------------------------------------------------

SELECTION_GRID = (
    (Hyperparams.from_gap(0.1, (1.0, 0.5, 0.5)), Allocation((200, 200, 200))),
    (Hyperparams.from_gap(-0.05, (1.0, 0.3, 0.7)), Allocation((100, 150, 150))),
    (Hyperparams.from_gap(0.2, (1.0, 0.8, 0.2)), Allocation((50, 40, 30))),
)


def suite_selection(seed: int = 0, reps: int = 200_000) -> List[Check]:
    """Frequency of picking the better treatment against Phi(|delta| / sd)."""
    checks = []
    for i, (h, a) in enumerate(SELECTION_GRID):
        winner, *_ = simulate_fixed(h, a, reps, _rng(seed, 5, i))
        hit = (winner == h.w_max).astype(float)
        sd = math.sqrt(h.sigma2[1] / a[1] + h.sigma2[2] / a[2])
        expected = std_cdf(abs(h.delta) / sd)
        p = hit.mean()
        se = math.sqrt(max(p * (1 - p), 1e-300) / reps)
        checks.append(_se_check("selection", f"delta={h.delta:g}/n={a.n}", p, expected, se))
    return checks


# --------------------------------------------------------------------------

CONVERGENCE_PARAMS = Hyperparams.from_ratio(0.15, 1.25, 1.0)
CONVERGENCE_LADDER = (1_000, 10_000, 100_000)
CONVERGENCE_ALPHA = 0.25


def allocation_distance(h: Hyperparams, T: int, rng, alpha: float = CONVERGENCE_ALPHA) -> float:
    """||p_hat - p*|| for one run with pilot T^(4/7) and the clipped domain."""
    T0 = int(round(T ** (4 / 7)))
    pilot = equal_split(T0)
    res = run_two_stage(NormalSource(h), T, pilot, rng, clip=ClipDomain.for_budget(alpha, T))
    p_hat = np.array(res.plan.combined.n, dtype=float) / T
    sigma = h.sigma
    target = neyman_allocation(sigma[0], sigma[h.w_max], h.w_max).p_star
    return float(np.linalg.norm(p_hat - np.array(target)))


def suite_convergence(seed: int = 0, reps: int = 200, ladder=CONVERGENCE_LADDER) -> List[Check]:
    """Median distance to the Neyman target shrinks along the budget ladder."""
    h = CONVERGENCE_PARAMS
    medians = []
    checks = []
    for T in ladder:
        d = [allocation_distance(h, T, _rng(seed, 6, T, r)) for r in range(reps)]
        medians.append(float(np.median(d)))
    for (T_a, m_a), (T_b, m_b) in zip(zip(ladder, medians), zip(ladder[1:], medians[1:])):
        checks.append(Check("convergence", f"median_distance/T={T_a}->{T_b}", m_b, m_a, m_a - m_b, 0.0, bool(m_b < m_a)))
    return checks


SUITES: Dict[str, Callable[..., List[Check]]] = {
    "lemma": suite_lemma,
    "bias": suite_bias,
    "mse": suite_mse,
    "convergence": suite_convergence,
    "selection": suite_selection,
}


def run_suite(name: str, seed: int = 0, **kwargs) -> List[Check]:
    return SUITES[name](seed=seed, **kwargs)
