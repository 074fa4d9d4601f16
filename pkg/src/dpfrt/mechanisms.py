"""Release mechanisms: geometric count release, Laplace perturbation of the
p-value, separate perturbation of statistic and reference, and Monte Carlo
perturbation of all replicate statistics.

Noise samplers are inverse-CDF transforms of a single uniform draw, so a
seeded generator replays the exact same release stream.  The keyword-only
``_forced_noise`` hooks exist for golden tests; the HTTP service never
exposes them.
"""

from __future__ import annotations

import math
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .errors import DomainError
from .exact import (
    DesignSizes,
    OutcomeTable,
    diff_in_proportions,
    frt_p_value,
    hypergeom_log_pmf_support,
    p_value_sensitivity,
    statistic_sensitivity,
    _log_tail_from,
    log_binomial,
)
from .ledger import BudgetLedger


@dataclass(frozen=True)
class PrivacyBudget:
    """A strictly positive privacy-loss parameter."""

    epsilon: float

    def __post_init__(self):
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise DomainError(f"epsilon must be positive and finite, got {self.epsilon}")


def as_epsilon(budget) -> float:
    """Accept a PrivacyBudget or a bare positive float."""
    eps = budget.epsilon if isinstance(budget, PrivacyBudget) else float(budget)
    if not (eps > 0 and math.isfinite(eps)):
        raise DomainError(f"epsilon must be positive and finite, got {eps}")
    return eps


@dataclass(frozen=True)
class GeometricKernel:
    """Two-sided geometric noise kernel with masses (1-rho)/(1+rho) * rho^|h|."""

    rho: float

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise DomainError(f"rho must lie in (0, 1), got {self.rho}")

    @classmethod
    def from_epsilon(cls, budget, sensitivity: float = 1.0) -> "GeometricKernel":
        return cls(math.exp(-as_epsilon(budget) / sensitivity))

    def mass(self, h) -> float:
        return np.exp(self.log_mass(h))

    def log_mass(self, h):
        h = np.abs(np.asarray(h))
        out = math.log1p(-self.rho) - math.log1p(self.rho) + h * math.log(self.rho)
        return out if out.shape else float(out)

    def tail_mass(self, m: int) -> float:
        """One-sided tail sum over h >= m (m >= 1): rho^m / (1 + rho)."""
        if m < 1:
            raise DomainError(f"tail requires m >= 1, got {m}")
        return math.exp(m * math.log(self.rho) - math.log1p(self.rho))

    def cdf(self, h) -> np.ndarray:
        """Pr(H <= h), exact closed form on both branches."""
        h = np.asarray(h, dtype=float)
        log_rho = math.log(self.rho)
        neg = np.exp(-h * log_rho) / (1.0 + self.rho)
        pos = 1.0 - np.exp((h + 1.0) * log_rho) / (1.0 + self.rho)
        return np.where(h < 0, neg, pos)

    def inverse_cdf(self, u) -> np.ndarray:
        """Smallest integer h with cdf(h) >= u, for u in (0, 1)."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        rho, log_rho = self.rho, math.log(self.rho)
        h = np.zeros(u.shape, dtype=np.int64)
        lo = u <= rho / (1.0 + rho)
        hi = u > 1.0 / (1.0 + rho)
        with np.errstate(divide="ignore"):
            h[lo] = np.ceil(-np.log(u[lo] * (1.0 + rho)) / log_rho).astype(np.int64)
            h[hi] = (
                np.ceil(np.log((1.0 - u[hi]) * (1.0 + rho)) / log_rho).astype(np.int64)
                - 1
            )
        # guard against rounding at lattice boundaries
        for _ in range(2):
            too_high = self.cdf(h - 1) >= u
            h[too_high] -= 1
            too_low = self.cdf(h) < u
            h[too_low] += 1
        return h

    def sample(self, rng: np.random.Generator, size=None):
        u = rng.random(size if size is not None else 1)
        h = self.inverse_cdf(u)
        return h if size is not None else int(h[0])


def geometric_kernel_mass(kernel: GeometricKernel, h: int) -> float:
    return float(kernel.mass(h))


def geometric_tail_mass(kernel: GeometricKernel, m: int) -> float:
    return kernel.tail_mass(m)


def sample_two_sided_geometric(kernel: GeometricKernel, rng: np.random.Generator) -> int:
    return kernel.sample(rng)


def sample_laplace(rng: np.random.Generator, scale: float, size=None):
    """Inverse-CDF Laplace(0, scale) with a sign branch on u - 1/2."""
    u = rng.random(size if size is not None else 1) - 0.5
    x = -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))
    return x if size is not None else float(x[0])


def clip(value, low, high):
    return min(high, max(low, value))


@dataclass(frozen=True)
class NoisyRelease:
    """An eps-DP release of the two success counts.

    Counts are stored exactly as released: they may be negative or exceed the
    group sizes.  Posterior inference is invariant to clipping, so nothing is
    lost by keeping the raw values.
    """

    n11_tilde: int
    n01_tilde: int
    epsilon: float
    design: DesignSizes
    released_at: str
    release_id: str

    def clipped(self) -> tuple[int, int]:
        return (
            clip(self.n11_tilde, 0, self.design.n1),
            clip(self.n01_tilde, 0, self.design.n0),
        )


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _charge(ledger: BudgetLedger | None, mechanism: str, epsilon: float, release_id: str):
    if ledger is not None:
        ledger.charge(mechanism, epsilon, release_id=release_id)


def release_counts(
    table: OutcomeTable,
    budget,
    rng: np.random.Generator,
    *,
    ledger: BudgetLedger | None = None,
    _forced_noise: tuple[int, int] | None = None,
) -> NoisyRelease:
    """Perturb (n11, n01) with i.i.d. two-sided geometric noise at rho=exp(-eps).

    The pair has L1-sensitivity one (an outcome flip moves exactly one count
    by one), so the joint release is eps-DP.
    """
    eps = as_epsilon(budget)
    release_id = uuid.uuid4().hex
    _charge(ledger, "release_counts", eps, release_id)
    if _forced_noise is None:
        kernel = GeometricKernel.from_epsilon(eps)
        eta11, eta01 = kernel.sample(rng), kernel.sample(rng)
    else:
        eta11, eta01 = _forced_noise
    return NoisyRelease(
        n11_tilde=table.n11 + int(eta11),
        n01_tilde=table.n01 + int(eta01),
        epsilon=eps,
        design=table.design,
        released_at=_now(),
        release_id=release_id,
    )


def laplace_p_release(
    table: OutcomeTable,
    budget,
    rng: np.random.Generator,
    *,
    ledger: BudgetLedger | None = None,
    _forced_noise: float | None = None,
) -> float:
    """Laplace-perturbed p-value, clipped to [1/C(n, n1), 1]."""
    eps = as_epsilon(budget)
    _charge(ledger, "laplace_p_release", eps, uuid.uuid4().hex)
    design = table.design
    p = frt_p_value(table.n11, table.n01, design)
    scale = p_value_sensitivity(design) / eps
    noise = sample_laplace(rng, scale) if _forced_noise is None else _forced_noise
    lower = math.exp(-log_binomial(design.n, design.n1))
    return clip(p + noise, lower, 1.0)


def _reference_tail(design: DesignSizes, total: int, threshold: float) -> float:
    """Pr(stat(X) >= threshold) for X ~ Hypergeometric(n, total, n1), where
    stat(a) = a/n1 - (total - a)/n0 (strictly increasing in a)."""
    n1, n0 = design.n1, design.n0
    log_pmf, t_lo = hypergeom_log_pmf_support(design.n, total, n1)
    t_hi = t_lo + len(log_pmf) - 1
    a_star = None
    for a in range(t_lo, t_hi + 1):
        if a / n1 - (total - a) / n0 >= threshold:
            a_star = a
            break
    if a_star is None:
        return 0.0
    if a_star <= t_lo:
        return 1.0
    return min(1.0, float(np.exp(_log_tail_from(log_pmf, a_star - t_lo))))


def separate_perturbation(
    table: OutcomeTable,
    budget_obs,
    budget_ref,
    rng: np.random.Generator,
    *,
    ledger: BudgetLedger | None = None,
    _forced_noise: tuple[float, int] | None = None,
) -> float:
    """Privatize the observed statistic and the randomization reference
    separately, then report the tail probability of the private reference at
    the private statistic.

    Total privacy cost is eps_obs + eps_ref by sequential composition.
    """
    eps_obs, eps_ref = as_epsilon(budget_obs), as_epsilon(budget_ref)
    _charge(ledger, "separate_perturbation", eps_obs + eps_ref, uuid.uuid4().hex)
    design = table.design
    if _forced_noise is None:
        lap = sample_laplace(rng, statistic_sensitivity(design) / eps_obs)
        geo = GeometricKernel(math.exp(-eps_ref)).sample(rng)
    else:
        lap, geo = _forced_noise
    t_obs = clip(diff_in_proportions(table) + lap, -1.0, 1.0)
    total = int(clip(table.n_plus1 + geo, 0, design.n))
    return _reference_tail(design, total, t_obs)


def mc_perturbation(
    table: OutcomeTable,
    budget_obs,
    budgets_per_replicate,
    rng: np.random.Generator,
    *,
    ledger: BudgetLedger | None = None,
    _forced_noise: tuple[float, np.ndarray] | None = None,
) -> float:
    """Privatize the observed statistic and R Monte Carlo replicate statistics
    simultaneously, then report the add-one exceedance fraction.

    The uniform replicate assignments are data-independent and free; the
    total privacy cost is eps_obs + sum of the per-replicate budgets.
    """
    eps_obs = as_epsilon(budget_obs)
    eps_r = np.asarray([as_epsilon(e) for e in budgets_per_replicate], dtype=float)
    if eps_r.size < 1:
        raise DomainError("at least one replicate budget is required")
    _charge(ledger, "mc_perturbation", eps_obs + float(eps_r.sum()), uuid.uuid4().hex)

    design = table.design
    n1, n0, total = design.n1, design.n0, table.n_plus1
    # a uniform assignment induces n11 ~ Hypergeometric(n, n_plus1, n1)
    a = rng.hypergeometric(total, design.n - total, n1, size=eps_r.size)
    t_rep = a / n1 - (total - a) / n0

    sens = statistic_sensitivity(design)
    if _forced_noise is None:
        noise_obs = sample_laplace(rng, sens / eps_obs)
        noise_rep = np.array(
            [sample_laplace(rng, sens / e) for e in eps_r]
        )
    else:
        noise_obs, noise_rep = _forced_noise[0], np.asarray(_forced_noise[1], float)

    t_obs = clip(diff_in_proportions(table) + noise_obs, -1.0, 1.0)
    t_rep = np.clip(t_rep + noise_rep, -1.0, 1.0)
    return (1 + int(np.count_nonzero(t_rep >= t_obs))) / (1 + eps_r.size)


def split_evenly(budget, parts: int) -> list[float]:
    """Symmetric default split of a total budget into equal parts."""
    if parts < 1:
        raise DomainError("parts must be >= 1")
    eps = as_epsilon(budget)
    return [eps / parts] * parts
