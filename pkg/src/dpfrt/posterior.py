"""Mechanism-aware Bayesian denoising of noisy count releases.

Given one or more geometric-noise releases of (n11, n01), the posterior over
true counts is prior x product of noise kernels, renormalized on the count
lattice.  Mapping each count pair through the exact randomization p-value
induces a discrete posterior over p-values, from which point summaries,
credible sets and the rejection evidence Pr(p <= alpha | releases) follow.

Large designs are handled without materializing the full lattice: priors
that factorize across arms keep the two marginal posteriors, and the induced
p-value posterior is sampled; non-factorizing priors are evaluated on a
window outside which the kernel mass is below 1e-12.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .errors import DomainError
from .exact import (
    DesignSizes,
    PValueEvaluator,
    log_p_value_table,
    log_p_value_window,
)
from .mechanisms import NoisyRelease
from .priors import CountPrior

# full-lattice enumeration is exact up to this many cells; beyond it the
# factorized path samples and the grid path windows
MAX_GRID_CELLS = 4_000_000
DEFAULT_SAMPLE_DRAWS = 100_000
_KEY_DIGITS = 12
_WINDOW_LOG10 = 12.0
# relative tolerance for "p <= alpha": support points carry rounding noise of
# about one part in 1e12 from the 12-digit level keys, so exact rational ties
# at alpha must not be lost to float representation
P_TIE_REL = 1e-10


def _round_log_significant(values: np.ndarray, digits: int = _KEY_DIGITS) -> np.ndarray:
    """Round ln(p) values to `digits` significant decimal digits.

    Cells whose ln(p) agree after rounding merge into one support point.
    """
    values = np.asarray(values, dtype=float)
    out = values.copy()
    nonzero = values != 0.0
    mag = np.floor(np.log10(np.abs(values[nonzero])))
    np.clip(mag, -250.0, None, out=mag)
    scale = np.power(10.0, digits - 1 - mag)
    out[nonzero] = np.round(values[nonzero] * scale) / scale
    return out


@dataclass(frozen=True)
class CountPosterior:
    """Posterior over true counts, either factorized by arm or a grid block.

    Grid blocks carry lattice offsets so a window of a large lattice is
    representable; full-lattice grids have offsets (0, 0).
    """

    design: DesignSizes
    kind: Literal["factorized", "grid"]
    gamma_treated: np.ndarray | None = None
    gamma_control: np.ndarray | None = None
    gamma: np.ndarray | None = None
    a_offset: int = 0
    b_offset: int = 0
    epsilons: tuple[float, ...] = ()
    prior_spec: dict | None = None

    def mass(self, a: int, b: int) -> float:
        if self.kind == "factorized":
            return float(self.gamma_treated[a] * self.gamma_control[b])
        ai, bi = a - self.a_offset, b - self.b_offset
        if 0 <= ai < self.gamma.shape[0] and 0 <= bi < self.gamma.shape[1]:
            return float(self.gamma[ai, bi])
        return 0.0

    def total_mass(self) -> float:
        if self.kind == "factorized":
            return float(self.gamma_treated.sum() * self.gamma_control.sum())
        return float(self.gamma.sum())

    def cell_count(self) -> int:
        if self.kind == "factorized":
            return len(self.gamma_treated) * len(self.gamma_control)
        return self.gamma.size


def _check_releases(prior: CountPrior, releases: Sequence[NoisyRelease]):
    if not releases:
        raise DomainError("at least one release is required")
    design = releases[0].design
    for r in releases:
        if r.design != design:
            raise DomainError("all releases must come from the same design")
    return design


def _coord_log_kernel(size: int, centers_epsilons) -> np.ndarray:
    """Sum over releases of |center - k| * ln(rho) with ln(rho) = -epsilon,
    for k = 0..size.

    Normalization constants of the kernels are dropped; they cancel when the
    posterior is renormalized, and dropping them makes clipping invariance an
    exact lattice-shift identity.
    """
    k = np.arange(size + 1)
    out = np.zeros(size + 1)
    for center, epsilon in centers_epsilons:
        out -= np.abs(center - k) * epsilon
    return out


def _normalized_exp(log_weights: np.ndarray) -> np.ndarray:
    w = np.exp(log_weights - log_weights.max())
    return w / w.sum()


def posterior_from_releases(
    prior: CountPrior,
    releases: Sequence[NoisyRelease],
    *,
    max_grid_cells: int = MAX_GRID_CELLS,
    representation: Literal["auto", "factorized", "grid"] = "auto",
) -> CountPosterior:
    """Posterior over (n11, n01) after any number of independent releases.

    Each release contributes one pair of geometric kernel factors; the order
    of releases is irrelevant.  Raw (unclipped) release values give exactly
    the same posterior as clipped ones.
    """
    design = _check_releases(prior, releases)
    n1, n0 = design.n1, design.n0
    epsilons = tuple(r.epsilon for r in releases)
    spec = prior.spec()

    if representation == "factorized" and not prior.factorizes:
        raise DomainError("grid representation required: prior does not factorize")
    if prior.factorizes and representation != "grid":
        m1, m0 = prior.marginals(design)
        with np.errstate(divide="ignore"):
            lt = np.log(m1) + _coord_log_kernel(
                n1, [(r.n11_tilde, r.epsilon) for r in releases]
            )
            lc = np.log(m0) + _coord_log_kernel(
                n0, [(r.n01_tilde, r.epsilon) for r in releases]
            )
        return CountPosterior(
            design=design,
            kind="factorized",
            gamma_treated=_normalized_exp(lt),
            gamma_control=_normalized_exp(lc),
            epsilons=epsilons,
            prior_spec=spec,
        )

    log_kernel_t = _coord_log_kernel(
        n1, [(r.n11_tilde, r.epsilon) for r in releases]
    )
    log_kernel_c = _coord_log_kernel(
        n0, [(r.n01_tilde, r.epsilon) for r in releases]
    )

    def window_posterior(rows, cols):
        prior_mass = prior.mass_block(design, rows, cols)
        with np.errstate(divide="ignore"):
            log_w = (
                np.log(prior_mass)
                + log_kernel_t[rows][:, None]
                + log_kernel_c[cols][None, :]
            )
        log_w[np.isnan(log_w)] = -np.inf
        w = np.exp(log_w - log_w.max())
        return w / w.sum()

    cells = (n1 + 1) * (n0 + 1)
    if cells <= max_grid_cells:
        gamma = window_posterior(np.arange(n1 + 1), np.arange(n0 + 1))
        return CountPosterior(
            design=design,
            kind="grid",
            gamma=gamma,
            epsilons=epsilons,
            prior_spec=spec,
        )

    # Window around the clipped release centers.  The kernel alone decays
    # below 1e-12 within the initial halfwidth, but a sharply varying prior
    # can pull mass outward, so the window grows until every truncated
    # border carries negligible posterior mass.
    halfwidth = int(math.ceil(_WINDOW_LOG10 * math.log(10) / min(epsilons)))
    c1 = [min(max(r.n11_tilde, 0), n1) for r in releases]
    c0 = [min(max(r.n01_tilde, 0), n0) for r in releases]
    while True:
        a_lo, a_hi = max(0, min(c1) - halfwidth), min(n1, max(c1) + halfwidth)
        b_lo, b_hi = max(0, min(c0) - halfwidth), min(n0, max(c0) + halfwidth)
        if (a_hi - a_lo + 1) * (b_hi - b_lo + 1) > max_grid_cells:
            raise DomainError(
                "posterior window exceeded the grid budget: the prior is too "
                "diffuse relative to the noise kernel for windowed evaluation "
                "at this design size"
            )
        rows = np.arange(a_lo, a_hi + 1)
        cols = np.arange(b_lo, b_hi + 1)
        gamma = window_posterior(rows, cols)
        truncated_mass = 0.0
        if a_lo > 0:
            truncated_mass = max(truncated_mass, float(gamma[0, :].sum()))
        if a_hi < n1:
            truncated_mass = max(truncated_mass, float(gamma[-1, :].sum()))
        if b_lo > 0:
            truncated_mass = max(truncated_mass, float(gamma[:, 0].sum()))
        if b_hi < n0:
            truncated_mass = max(truncated_mass, float(gamma[:, -1].sum()))
        if truncated_mass < 1e-13:
            return CountPosterior(
                design=design,
                kind="grid",
                gamma=gamma,
                a_offset=a_lo,
                b_offset=b_lo,
                epsilons=epsilons,
                prior_spec=spec,
            )
        halfwidth *= 2


def denoise(prior: CountPrior, release: NoisyRelease, **kwargs) -> CountPosterior:
    """Posterior over true counts after a single release."""
    return posterior_from_releases(prior, [release], **kwargs)


def sequential_update(
    prior: CountPrior,
    first: NoisyRelease,
    second: NoisyRelease,
    **kwargs,
) -> CountPosterior:
    """Posterior after a top-up release: the first posterior acts as the
    prior for the second, which is the same as multiplying both kernels."""
    return posterior_from_releases(prior, [first, second], **kwargs)


@dataclass(frozen=True)
class PValuePosterior:
    """Discrete posterior over the exact randomization p-value.

    support is strictly increasing; masses are matched and sum to one.
    log_support carries ln(p) at full precision for very small p-values.
    """

    support: np.ndarray
    masses: np.ndarray
    log_support: np.ndarray
    method: Literal["exact", "sampled"]
    design: DesignSizes
    meta: dict = field(default_factory=dict)

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.masses)

    def to_dict(self) -> dict:
        return {
            "support": self.support.tolist(),
            "masses": self.masses.tolist(),
            "method": self.method,
        }


def _aggregate_levels(
    log_p: np.ndarray, masses: np.ndarray, design: DesignSizes, method, meta
) -> PValuePosterior:
    keys = _round_log_significant(log_p)
    uniq, inverse = np.unique(keys, return_inverse=True)
    w = np.bincount(inverse, weights=masses, minlength=len(uniq))
    keep = w > 0
    uniq, w = uniq[keep], w[keep]
    total = w.sum()
    return PValuePosterior(
        support=np.exp(uniq),
        masses=w / total,
        log_support=uniq,
        method=method,
        design=design,
        meta=meta,
    )


def p_posterior(
    post: CountPosterior,
    *,
    rng: np.random.Generator | None = None,
    draws: int = DEFAULT_SAMPLE_DRAWS,
    max_grid_cells: int = MAX_GRID_CELLS,
    evaluator: PValueEvaluator | None = None,
) -> PValuePosterior:
    """Map a count posterior onto the induced p-value posterior.

    Exact enumeration whenever the lattice (or window) fits the grid budget;
    otherwise factorized Monte Carlo sampling, which requires an explicit
    seeded generator.
    """
    design = post.design
    meta = {"epsilons": list(post.epsilons), "prior": post.prior_spec}

    if post.kind == "grid":
        rows = np.arange(post.a_offset, post.a_offset + post.gamma.shape[0])
        cols = np.arange(post.b_offset, post.b_offset + post.gamma.shape[1])
        log_p = log_p_value_window(design, rows, cols)
        return _aggregate_levels(
            log_p.ravel(), post.gamma.ravel(), design, "exact", meta
        )

    cells = post.cell_count()
    if cells <= max_grid_cells:
        log_p = log_p_value_table(design)
        masses = np.outer(post.gamma_treated, post.gamma_control)
        return _aggregate_levels(
            log_p.ravel(), masses.ravel(), design, "exact", meta
        )

    if rng is None:
        raise DomainError(
            "lattice too large for exact enumeration: pass a seeded rng "
            "to sample the p-value posterior"
        )
    a = rng.choice(len(post.gamma_treated), size=draws, p=post.gamma_treated)
    b = rng.choice(len(post.gamma_control), size=draws, p=post.gamma_control)
    pairs, counts = np.unique(np.stack([a, b], axis=1), axis=0, return_counts=True)
    ev = evaluator or PValueEvaluator(design)
    log_p = ev.log_batch(pairs)
    meta["draws"] = draws
    return _aggregate_levels(
        log_p, counts / counts.sum(), design, "sampled", meta
    )


def posterior_mean(pp: PValuePosterior) -> float:
    """Minimizer of posterior quadratic loss."""
    return float((pp.support * pp.masses).sum())


def median_set(pp: PValuePosterior) -> np.ndarray:
    """All support points m with F(m) >= 1/2 and 1 - F(m-) >= 1/2."""
    cdf = pp.cdf()
    cdf_before = np.concatenate([[0.0], cdf[:-1]])
    ok = (cdf >= 0.5 - 1e-15) & (1.0 - cdf_before >= 0.5 - 1e-15)
    return pp.support[ok]


def posterior_median(pp: PValuePosterior) -> float:
    """Smallest valid posterior median (minimizer of absolute loss)."""
    return float(median_set(pp)[0])


def map_set(pp: PValuePosterior) -> np.ndarray:
    """All support points attaining the maximal aggregated mass."""
    top = pp.masses.max()
    return pp.support[pp.masses >= top - 1e-15]


def posterior_map(pp: PValuePosterior) -> float:
    """Smallest mode of the aggregated weights."""
    return float(map_set(pp)[0])


@dataclass(frozen=True)
class CredibleSet:
    kind: Literal["equal-tailed", "hpd"]
    level: float
    points: np.ndarray
    enclosing_interval: tuple[float, float]
    attained_mass: float
    tie_rule: str

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "level": self.level,
            "points": self.points.tolist(),
            "low": self.enclosing_interval[0],
            "high": self.enclosing_interval[1],
            "attained_mass": self.attained_mass,
            "tie_rule": self.tie_rule,
        }


def credible_set(
    pp: PValuePosterior, level: float, kind: str = "equal-tailed"
) -> CredibleSet:
    """Equal-tailed or highest-posterior-density credible set at `level`.

    Equal-tailed: step-function quantiles at alpha/2 and 1 - alpha/2, which
    minimizes the enclosing range among valid boundary choices.  HPD: mass
    threshold, keeping every point tied at the threshold (conservative).
    Both attain at least the nominal level.
    """
    if not 0.0 < level < 1.0:
        raise DomainError(f"level must lie in (0, 1), got {level}")
    alpha = 1.0 - level
    if kind in ("equal-tailed", "et"):
        cdf = pp.cdf()
        lo_idx = int(np.searchsorted(cdf, alpha / 2 - 1e-15))
        hi_idx = int(np.searchsorted(cdf, 1.0 - alpha / 2 - 1e-15))
        hi_idx = min(hi_idx, len(pp.support) - 1)
        points = pp.support[lo_idx : hi_idx + 1]
        attained = float(
            cdf[hi_idx] - (cdf[lo_idx - 1] if lo_idx > 0 else 0.0)
        )
        return CredibleSet(
            kind="equal-tailed",
            level=level,
            points=points,
            enclosing_interval=(float(points[0]), float(points[-1])),
            attained_mass=attained,
            tie_rule="boundary ties resolved by minimizing the range",
        )
    if kind == "hpd":
        order = np.argsort(-pp.masses, kind="stable")
        cum = np.cumsum(pp.masses[order])
        cutoff = int(np.searchsorted(cum, level - 1e-15))
        threshold = pp.masses[order[cutoff]]
        selected = pp.masses >= threshold - 1e-15
        points = pp.support[selected]
        return CredibleSet(
            kind="hpd",
            level=level,
            points=points,
            enclosing_interval=(float(points[0]), float(points[-1])),
            attained_mass=float(pp.masses[selected].sum()),
            tie_rule="all points tied at the threshold included",
        )
    raise DomainError(f"unknown credible set kind {kind!r}")


def rejection_evidence(pp: PValuePosterior, alpha: float) -> float:
    """Posterior probability that the exact p-value is at most alpha.

    Ties at alpha count as rejections, up to the level-key resolution.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    return float(pp.masses[pp.log_support <= math.log(alpha) + P_TIE_REL].sum())


@dataclass(frozen=True)
class SyntheticDraws:
    """Posterior draws of count pairs with derived effect estimates."""

    a: np.ndarray
    b: np.ndarray
    tau: np.ndarray
    risk_ratio: np.ndarray
    odds_ratio: np.ndarray

    def __len__(self) -> int:
        return len(self.a)


def sample_posterior(
    post: CountPosterior, draws: int, rng: np.random.Generator
) -> SyntheticDraws:
    """Sample (a, b) pairs and derive per-draw effect estimands.

    Risk ratio gets a continuity adjustment when b = 0; the odds ratio uses
    the Haldane-Anscombe +0.5 on every cell whenever any cell is zero.
    """
    if draws < 1:
        raise DomainError(f"draws must be >= 1, got {draws}")
    n1, n0 = post.design.n1, post.design.n0
    if post.kind == "factorized":
        a = rng.choice(len(post.gamma_treated), size=draws, p=post.gamma_treated)
        b = rng.choice(len(post.gamma_control), size=draws, p=post.gamma_control)
    else:
        flat = rng.choice(post.gamma.size, size=draws, p=post.gamma.ravel())
        ai, bi = np.unravel_index(flat, post.gamma.shape)
        a, b = ai + post.a_offset, bi + post.b_offset

    tau = a / n1 - b / n0

    rr = np.empty(draws)
    plain = b > 0
    rr[plain] = (a[plain] / n1) / (b[plain] / n0)
    rr[~plain] = ((a[~plain] + 0.5) / (n1 + 1)) / ((b[~plain] + 0.5) / (n0 + 1))

    odds = np.empty(draws)
    needs_ha = (a == 0) | (a == n1) | (b == 0) | (b == n0)
    plain = ~needs_ha
    odds[plain] = (a[plain] * (n0 - b[plain])) / ((n1 - a[plain]) * b[plain])
    odds[needs_ha] = ((a[needs_ha] + 0.5) * (n0 - b[needs_ha] + 0.5)) / (
        (n1 - a[needs_ha] + 0.5) * (b[needs_ha] + 0.5)
    )
    return SyntheticDraws(a=a, b=b, tau=tau, risk_ratio=rr, odds_ratio=odds)


def display_series(
    pp: PValuePosterior, max_points: int
) -> tuple[np.ndarray, np.ndarray]:
    """Support/mass series thinned to at most max_points for transport.

    Adjacent support points merge into equal-width bins on [min, max], each
    represented by its mass-weighted mean; summaries and evidence are always
    computed from the full posterior, never from this series.
    """
    if len(pp.support) <= max_points:
        return pp.support, pp.masses
    lo, hi = float(pp.support[0]), float(pp.support[-1])
    edges = np.linspace(lo, hi, max_points + 1)
    idx = np.clip(np.searchsorted(edges, pp.support, side="right") - 1, 0, max_points - 1)
    masses = np.bincount(idx, weights=pp.masses, minlength=max_points)
    weighted = np.bincount(idx, weights=pp.masses * pp.support, minlength=max_points)
    keep = masses > 0
    return weighted[keep] / masses[keep], masses[keep]


def posterior_report(
    pp: PValuePosterior,
    level: float = 0.95,
    alpha: float | None = None,
    max_points: int | None = None,
) -> dict:
    """JSON-ready export of a p-value posterior with standard summaries."""
    if max_points is not None:
        support, masses = display_series(pp, max_points)
    else:
        support, masses = pp.support, pp.masses
    report = {
        "support": support.tolist(),
        "masses": masses.tolist(),
        "method": pp.method,
        "summaries": {
            "mean": posterior_mean(pp),
            "median": posterior_median(pp),
            "map": posterior_map(pp),
        },
        "credible": {
            "equal_tailed": credible_set(pp, level, "equal-tailed").to_dict(),
            "hpd": credible_set(pp, level, "hpd").to_dict(),
        },
    }
    if alpha is not None:
        report["psi"] = rejection_evidence(pp, alpha)
        report["alpha"] = alpha
    return report
