"""Frequentist calibration of the rejection-evidence threshold.

Under the sharp null with total success count K, the noisy release follows a
hypergeometric mixture of geometric kernels.  Because the evidence is
invariant to clipping the release, the model lives on the clipped lattice
with out-of-range kernel mass folded onto the boundary cells, which makes it
a proper distribution.  Thresholds are right-continuous quantiles of the
null evidence law: the worst case takes the sup over every K, the
data-adaptive variant only over a Neyman confidence set for K, spending part
of the error budget on coverage.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError
from .exact import DesignSizes, hypergeom_log_pmf_support, log_p_value_table
from .mechanisms import GeometricKernel, as_epsilon
from .posterior import (
    MAX_GRID_CELLS,
    P_TIE_REL,
    denoise,
    p_posterior,
    rejection_evidence,
)
from .priors import CountPrior

_ROW_BLOCK = 64


def folded_kernel_rows(
    kernel: GeometricKernel, centers: np.ndarray, size: int
) -> np.ndarray:
    """Geometric kernel masses on {0..size} centered at each value, with the
    mass of the two out-of-range tails folded onto 0 and size."""
    centers = np.asarray(centers)
    j = np.arange(size + 1)
    rows = kernel.mass(j[None, :] - centers[:, None])
    log_rho = math.log(kernel.rho)
    denom = math.log1p(kernel.rho)
    rows[:, 0] += np.exp((centers + 1) * log_rho - denom)
    rows[:, size] += np.exp((size - centers + 1) * log_rho - denom)
    return rows


@dataclass(frozen=True)
class NullModel:
    """Distribution of the clipped noisy release under the sharp null with
    total success count K."""

    total_successes: int
    design: DesignSizes
    epsilon: float
    masses: np.ndarray


def null_model(K: int, design: DesignSizes, budget) -> NullModel:
    """Hypergeometric mixture of boundary-folded geometric kernels."""
    if not 0 <= K <= design.n:
        raise DomainError(f"K={K} outside [0, {design.n}]")
    epsilon = as_epsilon(budget)
    kernel = GeometricKernel.from_epsilon(epsilon)
    log_pmf, t_lo = hypergeom_log_pmf_support(design.n, K, design.n1)
    t = np.arange(t_lo, t_lo + len(log_pmf))
    h = np.exp(log_pmf)
    treated = folded_kernel_rows(kernel, t, design.n1)
    control = folded_kernel_rows(kernel, K - t, design.n0)
    masses = treated.T @ (h[:, None] * control)
    return NullModel(
        total_successes=K, design=design, epsilon=epsilon, masses=masses
    )


@dataclass(frozen=True)
class PsiTable:
    """Rejection evidence Pr(p <= alpha | release) at every clipped release.

    Valid only for the exact (design, epsilon, prior, alpha) it was built
    for; calibration against any other configuration is meaningless.
    """

    design: DesignSizes
    epsilon: float
    alpha: float
    prior_fingerprint: str
    psi: np.ndarray
    reject_mask: np.ndarray

    def lookup(self, nt11, nt01) -> np.ndarray:
        a = np.clip(np.asarray(nt11), 0, self.design.n1)
        b = np.clip(np.asarray(nt01), 0, self.design.n0)
        return self.psi[a, b]


def build_psi_table(
    design: DesignSizes,
    budget,
    prior: CountPrior,
    alpha: float,
    *,
    parallel: bool = False,
    max_cells: int = MAX_GRID_CELLS,
) -> PsiTable:
    """Evaluate the evidence on the whole clipped lattice.

    Row blocks are computed with identical arithmetic serially or in a
    thread pool; results are bit-identical either way.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    epsilon = as_epsilon(budget)
    n1, n0 = design.n1, design.n0
    if (n1 + 1) * (n0 + 1) > max_cells:
        raise DomainError(
            "lattice too large for an exact evidence table; "
            "use the Monte Carlo calibration path"
        )
    reject = log_p_value_table(design) <= math.log(alpha) + P_TIE_REL
    prior_mass = prior.mass_matrix(design)

    idx1, idx0 = np.arange(n1 + 1), np.arange(n0 + 1)
    k1 = np.exp(-epsilon * np.abs(idx1[:, None] - idx1[None, :]))
    k0 = np.exp(-epsilon * np.abs(idx0[:, None] - idx0[None, :]))
    num_right = (reject * prior_mass) @ k0  # (n1+1, n0+1)
    den_right = prior_mass @ k0

    psi = np.empty((n1 + 1, n0 + 1))
    blocks = [
        slice(start, min(start + _ROW_BLOCK, n1 + 1))
        for start in range(0, n1 + 1, _ROW_BLOCK)
    ]

    def fill(block: slice):
        rows = k1[block]
        psi[block] = (rows @ num_right) / (rows @ den_right)

    if parallel:
        with ThreadPoolExecutor() as pool:
            list(pool.map(fill, blocks))
    else:
        for block in blocks:
            fill(block)
    return PsiTable(
        design=design,
        epsilon=epsilon,
        alpha=alpha,
        prior_fingerprint=prior.fingerprint(),
        psi=psi,
        reject_mask=reject,
    )


def psi_of_release(
    design: DesignSizes,
    budget,
    prior: CountPrior,
    alpha: float,
    nt11: int,
    nt01: int,
    *,
    rng: np.random.Generator | None = None,
    draws: int = 100_000,
) -> float:
    """Evidence for one release without a lattice-wide table; samples the
    p-value posterior when the lattice is too large to enumerate."""
    from .mechanisms import NoisyRelease

    release = NoisyRelease(
        n11_tilde=int(nt11),
        n01_tilde=int(nt01),
        epsilon=as_epsilon(budget),
        design=design,
        released_at="",
        release_id="psi-eval",
    )
    pp = p_posterior(denoise(prior, release), rng=rng, draws=draws)
    return rejection_evidence(pp, alpha)


def _null_evidence_cdf(model: NullModel, table: PsiTable):
    """Sorted distinct evidence values and the null CDF at each of them."""
    psi_flat = table.psi.ravel()
    order = np.argsort(psi_flat, kind="stable")
    sorted_psi = psi_flat[order]
    cum = np.cumsum(model.masses.ravel()[order])
    # collapse ties: CDF at a value is the cumulative mass at its last cell
    values, last_idx = np.unique(sorted_psi[::-1], return_index=True)
    last_idx = len(sorted_psi) - 1 - last_idx
    return values, cum[last_idx]


def _right_quantile(values: np.ndarray, cdf: np.ndarray, level: float) -> float:
    """inf{t : F(t) > level} on a discrete support (right-continuous)."""
    idx = int(np.searchsorted(cdf, level, side="right"))
    idx = min(idx, len(values) - 1)
    return float(values[idx])


def psi_null_quantile(
    K: int,
    design: DesignSizes,
    budget,
    prior: CountPrior,
    alpha: float,
    level: float,
    *,
    psi_table: PsiTable | None = None,
) -> float:
    """Right-continuous `level`-quantile of the evidence under the null with
    total success count K."""
    table = psi_table or build_psi_table(design, budget, prior, alpha)
    model = null_model(K, design, budget)
    values, cdf = _null_evidence_cdf(model, table)
    return _right_quantile(values, cdf, level)


@dataclass(frozen=True)
class CalibrationResult:
    method: str
    t_star: float
    alpha: float
    alpha_freq: float
    epsilon: float
    per_k: tuple[float, ...]
    design: DesignSizes
    prior_spec: dict
    eta: float | None = None
    alpha_prime: float | None = None
    confidence_set: tuple[int, ...] | None = None

    def to_dict(self) -> dict:
        out = {
            "method": self.method,
            "t_star": self.t_star,
            "alpha": self.alpha,
            "alpha_freq": self.alpha_freq,
            "epsilon": self.epsilon,
            "per_k": list(self.per_k),
            "design": {"n1": self.design.n1, "n0": self.design.n0},
            "prior": self.prior_spec,
        }
        if self.eta is not None:
            out["eta"] = self.eta
            out["alpha_prime"] = self.alpha_prime
        if self.confidence_set is not None:
            out["confidence_set"] = list(self.confidence_set)
        return out


def lfc_threshold(
    design: DesignSizes,
    budget,
    prior: CountPrior,
    alpha: float,
    alpha_freq: float,
    *,
    psi_table: PsiTable | None = None,
) -> CalibrationResult:
    """Worst-case threshold: sup over every possible total success count of
    the per-K null quantile.  Rejecting when the evidence exceeds it keeps
    type I error at or below alpha_freq for every K."""
    if not 0.0 < alpha_freq < 1.0:
        raise DomainError(f"alpha_freq must lie in (0, 1), got {alpha_freq}")
    table = psi_table or build_psi_table(design, budget, prior, alpha)
    level = 1.0 - alpha_freq
    per_k = tuple(
        psi_null_quantile(K, design, budget, prior, alpha, level, psi_table=table)
        for K in range(design.n + 1)
    )
    return CalibrationResult(
        method="worst-case",
        t_star=max(per_k),
        alpha=alpha,
        alpha_freq=alpha_freq,
        epsilon=table.epsilon,
        per_k=per_k,
        design=design,
        prior_spec=prior.spec(),
    )


def neyman_acceptance_mask(model: NullModel, eta: float) -> np.ndarray:
    """Smallest-mass acceptance region A_K: cells in decreasing null mass
    (ties broken lexicographically by (a, b)) until at least 1 - eta."""
    if not 0.0 < eta < 1.0:
        raise DomainError(f"eta must lie in (0, 1), got {eta}")
    n1, n0 = model.design.n1, model.design.n0
    flat = model.masses.ravel()
    a_idx, b_idx = np.divmod(np.arange(flat.size), n0 + 1)
    order = np.lexsort((b_idx, a_idx, -flat))
    cum = np.cumsum(flat[order])
    cutoff = int(np.searchsorted(cum, 1.0 - eta - 1e-15))
    mask = np.zeros(flat.size, dtype=bool)
    mask[order[: cutoff + 1]] = True
    return mask.reshape(n1 + 1, n0 + 1)


def neyman_confidence_set(
    release, design: DesignSizes, budget, eta: float
) -> list[int]:
    """All K whose acceptance region contains the clipped release; covers
    the true K with probability at least 1 - eta by construction."""
    nt11, nt01 = release.clipped() if hasattr(release, "clipped") else release
    a = min(max(int(nt11), 0), design.n1)
    b = min(max(int(nt01), 0), design.n0)
    members = []
    for K in range(design.n + 1):
        mask = neyman_acceptance_mask(null_model(K, design, budget), eta)
        if mask[a, b]:
            members.append(K)
    return members


def neyman_threshold(
    release,
    design: DesignSizes,
    budget,
    prior: CountPrior,
    alpha: float,
    alpha_freq: float,
    eta: float,
    *,
    psi_table: PsiTable | None = None,
) -> CalibrationResult:
    """Data-adaptive threshold: sup of per-K quantiles at level 1 - (alpha_freq
    - eta), restricted to the (1 - eta) confidence set for K."""
    if not 0.0 < eta < alpha_freq:
        raise DomainError(
            f"eta must lie in (0, alpha_freq={alpha_freq}), got {eta}"
        )
    table = psi_table or build_psi_table(design, budget, prior, alpha)
    alpha_prime = alpha_freq - eta
    level = 1.0 - alpha_prime
    per_k = tuple(
        psi_null_quantile(K, design, budget, prior, alpha, level, psi_table=table)
        for K in range(design.n + 1)
    )
    members = neyman_confidence_set(release, design, budget, eta)
    if members:
        t_star = max(per_k[K] for K in members)
    else:
        # empty set cannot occur for in-range releases; fall back to the sup
        t_star = max(per_k)
    return CalibrationResult(
        method="neyman",
        t_star=t_star,
        alpha=alpha,
        alpha_freq=alpha_freq,
        epsilon=table.epsilon,
        per_k=per_k,
        design=design,
        prior_spec=prior.spec(),
        eta=eta,
        alpha_prime=alpha_prime,
        confidence_set=tuple(members),
    )


@dataclass(frozen=True)
class MonteCarloQuantile:
    estimate: float
    level: float
    reps: int
    standard_error: float
    adjusted_level: float


def monte_carlo_null_quantile(
    K: int,
    design: DesignSizes,
    budget,
    prior: CountPrior,
    alpha: float,
    level: float,
    reps: int,
    rng: np.random.Generator,
    *,
    psi_table: PsiTable | None = None,
    z: float = 2.0,
) -> MonteCarloQuantile:
    """Sampled null quantile with a conservative upward adjustment: the
    order statistic at ceil((level + z*se) * reps)."""
    if reps < 1000:
        raise DomainError(f"reps must be >= 1000, got {reps}")
    epsilon = as_epsilon(budget)
    kernel = GeometricKernel.from_epsilon(epsilon)
    t = rng.hypergeometric(K, design.n - K, design.n1, size=reps)
    nt11 = t + kernel.sample(rng, size=reps)
    nt01 = (K - t) + kernel.sample(rng, size=reps)
    if psi_table is not None:
        psi = psi_table.lookup(nt11, nt01)
    elif (design.n1 + 1) * (design.n0 + 1) <= MAX_GRID_CELLS:
        psi_table = build_psi_table(design, budget, prior, alpha)
        psi = psi_table.lookup(nt11, nt01)
    else:
        psi = np.array(
            [
                psi_of_release(
                    design, epsilon, prior, alpha, a, b, rng=rng
                )
                for a, b in zip(nt11, nt01)
            ]
        )
    se = math.sqrt(level * (1.0 - level) / reps)
    adjusted = min(level + z * se, 1.0)
    rank = min(reps, int(math.ceil(adjusted * reps)))
    estimate = float(np.sort(psi)[rank - 1])
    return MonteCarloQuantile(
        estimate=estimate,
        level=level,
        reps=reps,
        standard_error=se,
        adjusted_level=adjusted,
    )


def calibration_cache_key(
    design: DesignSizes,
    budget,
    prior: CountPrior,
    alpha: float,
    alpha_freq: float,
    method: str,
    eta: float | None = None,
) -> str:
    payload = json.dumps(
        {
            "n1": design.n1,
            "n0": design.n0,
            "epsilon": as_epsilon(budget),
            "prior": prior.fingerprint(),
            "alpha": alpha,
            "alpha_freq": alpha_freq,
            "method": method,
            "eta": eta,
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:24]


def load_cached_calibration(cache_dir, key: str) -> dict | None:
    path = Path(cache_dir) / f"calibration-{key}.json"
    if not path.exists():
        return None
    return json.loads(path.read_text())


def store_cached_calibration(cache_dir, key: str, payload: dict):
    directory = Path(cache_dir)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / f"calibration-{key}.json").write_text(json.dumps(payload))
