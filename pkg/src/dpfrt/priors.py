"""Data-independent prior families over the true success counts (n11, n01).

Every family evaluates to normalized masses on the lattice
{0..n1} x {0..n0}.  The uniform and independent beta-binomial families
factorize across arms, which the posterior machinery exploits; the
common-rate and effect-link families (risk difference, log odds ratio) do
not.  Effect-link priors are integrated by deterministic quadrature rather
than MCMC so that results are exactly reproducible.
"""

from __future__ import annotations

import hashlib
import json
import math
from abc import ABC, abstractmethod

import numpy as np
from scipy.special import betaln, expit, logit

from .errors import DomainError, UnsupportedPriorOperation
from .exact import DesignSizes, log_factorials

# quadrature resolution for the effect-link families
_P0_GRID_SIZE = 512
_EFFECT_GRID_SIZE = 257
_EFFECT_SPAN_SDS = 6.0


def _log_binom_vector(n: int, k: np.ndarray) -> np.ndarray:
    lf = log_factorials(n)
    return lf[n] - lf[k] - lf[n - k]


def _beta_binomial_log_pmf(n: int, alpha: float, beta: float) -> np.ndarray:
    k = np.arange(n + 1)
    return (
        _log_binom_vector(n, k)
        + betaln(k + alpha, n - k + beta)
        - betaln(alpha, beta)
    )


def _require_positive(**params: float):
    for name, value in params.items():
        if not (value > 0 and math.isfinite(value)):
            raise DomainError(f"{name} must be positive and finite, got {value}")


class CountPrior(ABC):
    """Common interface of the count-prior families."""

    factorizes: bool = False

    def __init__(self):
        self._matrix_cache: dict[tuple[int, int], np.ndarray] = {}

    @abstractmethod
    def spec(self) -> dict:
        """JSON-serializable description {family, ...params}."""

    @abstractmethod
    def _build_matrix(self, design: DesignSizes) -> np.ndarray:
        """Normalized (n1+1, n0+1) mass matrix."""

    def mass_matrix(self, design: DesignSizes) -> np.ndarray:
        key = (design.n1, design.n0)
        if key not in self._matrix_cache:
            self._matrix_cache[key] = self._build_matrix(design)
        return self._matrix_cache[key]

    def mass(self, a: int, b: int, design: DesignSizes) -> float:
        if not (0 <= a <= design.n1 and 0 <= b <= design.n0):
            raise DomainError(f"({a}, {b}) outside the count lattice")
        return float(self.mass_matrix(design)[a, b])

    def mass_block(
        self, design: DesignSizes, rows: np.ndarray, cols: np.ndarray
    ) -> np.ndarray:
        """Mass on a sub-rectangle of the lattice, without renormalization.

        Families with closed forms override this so that large designs never
        materialize the full lattice.
        """
        return self.mass_matrix(design)[np.ix_(rows, cols)]

    def marginals(self, design: DesignSizes) -> tuple[np.ndarray, np.ndarray]:
        raise UnsupportedPriorOperation(
            f"{self.spec()['family']} prior does not factorize across arms"
        )

    def fingerprint(self) -> str:
        payload = json.dumps(self.spec(), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


class _FactorizedPrior(CountPrior):
    factorizes = True

    @abstractmethod
    def _marginal(self, size: int, arm: int) -> np.ndarray:
        """Normalized mass vector of length size+1 for arm 1 (treated) or 0."""

    def marginals(self, design: DesignSizes) -> tuple[np.ndarray, np.ndarray]:
        return self._marginal(design.n1, 1), self._marginal(design.n0, 0)

    def _build_matrix(self, design: DesignSizes) -> np.ndarray:
        m1, m0 = self.marginals(design)
        return np.outer(m1, m0)

    def mass_block(self, design, rows, cols):
        m1, m0 = self.marginals(design)
        return np.outer(m1[rows], m0[cols])


class UniformPrior(_FactorizedPrior):
    """Equal mass on every admissible count pair."""

    def spec(self) -> dict:
        return {"family": "uniform"}

    def _marginal(self, size: int, arm: int) -> np.ndarray:
        return np.full(size + 1, 1.0 / (size + 1))


class BetaBinomialPrior(_FactorizedPrior):
    """Independent beta-binomial counts, one success rate per arm.

    With all shape parameters 1 this is exactly the uniform prior.
    """

    def __init__(self, alpha1: float, beta1: float, alpha0: float, beta0: float):
        _require_positive(alpha1=alpha1, beta1=beta1, alpha0=alpha0, beta0=beta0)
        super().__init__()
        self.alpha1, self.beta1 = float(alpha1), float(beta1)
        self.alpha0, self.beta0 = float(alpha0), float(beta0)

    def spec(self) -> dict:
        return {
            "family": "beta_binomial",
            "alpha1": self.alpha1,
            "beta1": self.beta1,
            "alpha0": self.alpha0,
            "beta0": self.beta0,
        }

    def _marginal(self, size: int, arm: int) -> np.ndarray:
        alpha, beta = (
            (self.alpha1, self.beta1) if arm == 1 else (self.alpha0, self.beta0)
        )
        mass = np.exp(_beta_binomial_log_pmf(size, alpha, beta))
        return mass / mass.sum()


class CommonRatePrior(CountPrior):
    """Both arms share one success rate theta ~ Beta(alpha, beta); the joint
    mass depends on (a, b) only through the total a + b."""

    def __init__(self, alpha: float, beta: float):
        _require_positive(alpha=alpha, beta=beta)
        super().__init__()
        self.alpha, self.beta = float(alpha), float(beta)

    def spec(self) -> dict:
        return {"family": "common_rate", "alpha": self.alpha, "beta": self.beta}

    def _build_matrix(self, design: DesignSizes) -> np.ndarray:
        n1, n0, n = design.n1, design.n0, design.n
        a = np.arange(n1 + 1)[:, None]
        b = np.arange(n0 + 1)[None, :]
        log_mass = (
            _log_binom_vector(n1, np.arange(n1 + 1))[:, None]
            + _log_binom_vector(n0, np.arange(n0 + 1))[None, :]
            + betaln(a + b + self.alpha, n - (a + b) + self.beta)
            - betaln(self.alpha, self.beta)
        )
        mass = np.exp(log_mass)
        return mass / mass.sum()

    def mass_block(self, design, rows, cols):
        # analytically normalized over the full lattice; no renormalization
        n1, n0, n = design.n1, design.n0, design.n
        a = np.asarray(rows)[:, None]
        b = np.asarray(cols)[None, :]
        log_mass = (
            _log_binom_vector(n1, np.asarray(rows))[:, None]
            + _log_binom_vector(n0, np.asarray(cols))[None, :]
            + betaln(a + b + self.alpha, n - (a + b) + self.beta)
            - betaln(self.alpha, self.beta)
        )
        return np.exp(log_mass)


class _EffectLinkPrior(CountPrior):
    """Control rate p0 ~ Beta(alpha, beta) with a treated rate linked through
    a Normal effect parameter; integrated on a deterministic grid."""

    def __init__(self, alpha: float, beta: float, effect_mean: float, effect_sd: float):
        _require_positive(alpha=alpha, beta=beta, effect_sd=effect_sd)
        if not math.isfinite(effect_mean):
            raise DomainError(f"effect mean must be finite, got {effect_mean}")
        super().__init__()
        self.alpha, self.beta = float(alpha), float(beta)
        self.effect_mean, self.effect_sd = float(effect_mean), float(effect_sd)

    @abstractmethod
    def _treated_rate(self, p0: np.ndarray, effect: np.ndarray) -> np.ndarray:
        """Map (p0 grid, effect grid) -> p1 matrix (effect x p0)."""

    def _quadrature_mass(
        self, design: DesignSizes, k1: np.ndarray, k0: np.ndarray
    ) -> np.ndarray:
        n1, n0 = design.n1, design.n0
        # midpoint grid on (0, 1) for the control rate, Beta weights
        p0 = (np.arange(_P0_GRID_SIZE) + 0.5) / _P0_GRID_SIZE
        log_w0 = (self.alpha - 1) * np.log(p0) + (self.beta - 1) * np.log1p(-p0)
        w0 = np.exp(log_w0 - log_w0.max())
        w0 /= w0.sum()
        # equally spaced effect grid spanning +-6 sd, Normal weights
        effect = np.linspace(
            self.effect_mean - _EFFECT_SPAN_SDS * self.effect_sd,
            self.effect_mean + _EFFECT_SPAN_SDS * self.effect_sd,
            _EFFECT_GRID_SIZE,
        )
        we = np.exp(-0.5 * ((effect - self.effect_mean) / self.effect_sd) ** 2)
        we /= we.sum()

        p1 = self._treated_rate(p0[None, :], effect[:, None])  # (effect, p0)

        log_c1 = _log_binom_vector(n1, k1)
        log_c0 = _log_binom_vector(n0, k0)

        # treated-count kernel averaged over the effect grid, per p0 node
        treated = np.empty((len(k1), _P0_GRID_SIZE))
        with np.errstate(divide="ignore", invalid="ignore"):
            for j in range(_P0_GRID_SIZE):
                q = p1[:, j][:, None]  # (effect, 1)
                log_pmf = log_c1[None, :] + k1 * np.log(q) + (n1 - k1) * np.log1p(-q)
                pmf = np.exp(log_pmf)
                # boundary atoms: q == 0 puts all mass at 0, q == 1 at n1
                zero, one = q[:, 0] == 0.0, q[:, 0] == 1.0
                if zero.any():
                    pmf[zero] = 0.0
                    pmf[np.ix_(zero, k1 == 0)] = 1.0
                if one.any():
                    pmf[one] = 0.0
                    pmf[np.ix_(one, k1 == n1)] = 1.0
                treated[:, j] = we @ pmf
            control = np.exp(
                log_c0[:, None]
                + k0[:, None] * np.log(p0[None, :])
                + (n0 - k0[:, None]) * np.log1p(-p0[None, :])
            )  # (len(k0), p0)
        return (treated * w0[None, :]) @ control.T

    def _build_matrix(self, design: DesignSizes) -> np.ndarray:
        mass = self._quadrature_mass(
            design, np.arange(design.n1 + 1), np.arange(design.n0 + 1)
        )
        total = mass.sum()
        if not total > 0:
            raise DomainError("effect-link prior mass vanished on the lattice")
        return mass / total

    def mass_block(self, design, rows, cols):
        # mixture components are normalized binomials, so block values are
        # already true lattice masses
        return self._quadrature_mass(design, np.asarray(rows), np.asarray(cols))


class RiskDifferencePrior(_EffectLinkPrior):
    """Treated rate p0 + effect, clamped to [0, 1]; atoms at the boundary kept."""

    def spec(self) -> dict:
        return {
            "family": "risk_difference",
            "alpha": self.alpha,
            "beta": self.beta,
            "effect_mean": self.effect_mean,
            "effect_sd": self.effect_sd,
        }

    def _treated_rate(self, p0, effect):
        return np.clip(p0 + effect, 0.0, 1.0)


class LogOddsRatioPrior(_EffectLinkPrior):
    """Treated rate logit^{-1}(logit(p0) + effect)."""

    def spec(self) -> dict:
        return {
            "family": "log_odds_ratio",
            "alpha": self.alpha,
            "beta": self.beta,
            "effect_mean": self.effect_mean,
            "effect_sd": self.effect_sd,
        }

    def _treated_rate(self, p0, effect):
        return expit(logit(p0) + effect)


_FAMILIES = {
    "uniform": (UniformPrior, ()),
    "beta_binomial": (BetaBinomialPrior, ("alpha1", "beta1", "alpha0", "beta0")),
    "common_rate": (CommonRatePrior, ("alpha", "beta")),
    "risk_difference": (
        RiskDifferencePrior,
        ("alpha", "beta", "effect_mean", "effect_sd"),
    ),
    "log_odds_ratio": (
        LogOddsRatioPrior,
        ("alpha", "beta", "effect_mean", "effect_sd"),
    ),
}


def prior_from_spec(spec: dict) -> CountPrior:
    """Build a prior from its JSON description {family, ...params}."""
    try:
        family = spec["family"]
    except (TypeError, KeyError):
        raise DomainError("prior spec must be an object with a 'family' key")
    if family not in _FAMILIES:
        raise DomainError(f"unknown prior family {family!r}")
    cls, names = _FAMILIES[family]
    try:
        params = [spec[name] for name in names]
    except KeyError as missing:
        raise DomainError(f"prior family {family!r} requires parameter {missing}")
    return cls(*params)


def prior_mass(prior: CountPrior, a: int, b: int, design: DesignSizes) -> float:
    return prior.mass(a, b, design)


def prior_marginals(prior: CountPrior, design: DesignSizes):
    return prior.marginals(design)
