"""Risk-optimal decisions from the posterior rejection evidence.

The evidence Psi = Pr(p <= alpha | releases) is compared against loss-derived
thresholds: the binary rule rejects when the evidence beats lambda0 /
(lambda0 + lambda1), and the trinary rule adds an abstention band whose width
is set by the abstention loss.  Abstention-escape bounds and the budget
advice for top-up releases follow from the total-variation contraction of an
eps-DP channel, s(eps) = tanh(eps/2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import DomainError
from .exact import DesignSizes, log_p_value_table
from .mechanisms import as_epsilon
from .posterior import P_TIE_REL


@dataclass(frozen=True)
class LossSpec:
    """Discordance losses: lambda0 for rejecting when the exact test would
    not, lambda1 for the reverse, lambda_u for abstaining."""

    lambda0: float
    lambda1: float
    lambda_u: float | None = None

    def __post_init__(self):
        if self.lambda0 <= 0 or self.lambda1 <= 0:
            raise DomainError("lambda0 and lambda1 must be positive")
        if self.lambda_u is not None and self.lambda_u <= 0:
            raise DomainError("lambda_u must be positive when given")

    @property
    def harmonic(self) -> float:
        """Harmonic mean H = 2*l0*l1/(l0+l1); abstention degenerates at H/2."""
        return 2.0 * self.lambda0 * self.lambda1 / (self.lambda0 + self.lambda1)

    @property
    def binary_threshold(self) -> float:
        return self.lambda0 / (self.lambda0 + self.lambda1)

    def to_dict(self) -> dict:
        out = {"lambda0": self.lambda0, "lambda1": self.lambda1}
        if self.lambda_u is not None:
            out["lambda_u"] = self.lambda_u
        return out


@dataclass(frozen=True)
class AbstentionRegion:
    t_low: float
    t_high: float
    degenerate: bool

    @property
    def width(self) -> float:
        return self.t_high - self.t_low

    def contains(self, psi: float) -> bool:
        return (not self.degenerate) and self.t_low < psi < self.t_high

    def to_dict(self) -> dict:
        return {"t_low": self.t_low, "t_high": self.t_high, "degenerate": self.degenerate}


Outcome = Literal["reject", "not_reject", "abstain"]


@dataclass(frozen=True)
class Decision:
    outcome: Outcome
    psi: float
    region: AbstentionRegion
    losses: LossSpec
    alpha: float | None = None

    def to_dict(self) -> dict:
        out = {
            "outcome": self.outcome,
            "psi": self.psi,
            "region": self.region.to_dict(),
            "losses": self.losses.to_dict(),
        }
        if self.alpha is not None:
            out["alpha"] = self.alpha
        return out


def _check_psi(psi: float) -> float:
    # tolerate float-sum overshoot from posterior aggregation
    if -1e-9 <= psi <= 1.0 + 1e-9:
        return min(1.0, max(0.0, psi))
    raise DomainError(f"evidence must lie in [0, 1], got {psi}")


def binary_rule(
    psi: float, lambda0: float, lambda1: float, alpha: float | None = None
) -> Decision:
    """Reject iff the evidence strictly exceeds lambda0/(lambda0+lambda1)."""
    psi = _check_psi(psi)
    losses = LossSpec(lambda0, lambda1)
    threshold = losses.binary_threshold
    region = AbstentionRegion(t_low=threshold, t_high=threshold, degenerate=True)
    outcome = "reject" if psi > threshold else "not_reject"
    return Decision(outcome=outcome, psi=psi, region=region, losses=losses, alpha=alpha)


def abstention_region(losses: LossSpec) -> AbstentionRegion:
    """Evidence band where abstaining is risk-optimal.

    t_low = min(l0/(l0+l1), lu/l1), t_high = max(l0/(l0+l1), 1 - lu/l0);
    width is max(0, 1 - 2*lu/H) and collapses to the binary threshold once
    lu >= H/2.
    """
    if losses.lambda_u is None:
        raise DomainError("abstention region requires lambda_u")
    t_mid = losses.binary_threshold
    degenerate = losses.lambda_u >= losses.harmonic / 2.0
    if degenerate:
        return AbstentionRegion(t_low=t_mid, t_high=t_mid, degenerate=True)
    t_low = min(t_mid, losses.lambda_u / losses.lambda1)
    t_high = max(t_mid, 1.0 - losses.lambda_u / losses.lambda0)
    return AbstentionRegion(t_low=t_low, t_high=t_high, degenerate=False)


def trinary_rule(psi: float, losses: LossSpec, alpha: float | None = None) -> Decision:
    """Reject / not-reject / abstain with strict threshold comparisons.

    Evidence exactly at a boundary falls into the 'otherwise' branch and
    abstains; with lambda_u >= H/2 the rule degenerates to the binary rule.
    """
    psi = _check_psi(psi)
    region = abstention_region(losses)
    if region.degenerate:
        binary = binary_rule(psi, losses.lambda0, losses.lambda1, alpha)
        return Decision(
            outcome=binary.outcome, psi=psi, region=region, losses=losses, alpha=alpha
        )
    if psi > region.t_high:
        outcome: Outcome = "reject"
    elif psi < region.t_low:
        outcome = "not_reject"
    else:
        outcome = "abstain"
    return Decision(outcome=outcome, psi=psi, region=region, losses=losses, alpha=alpha)


def distinguishing_advantage(budget) -> float:
    """Total-variation bound tanh(eps/2) on what one release reveals."""
    return math.tanh(as_epsilon(budget) / 2.0)


def max_class_distance(
    design: DesignSizes, alpha: float, log_p: np.ndarray | None = None
) -> int:
    """Largest L1 lattice distance between the acceptance and rejection
    classes of the exact test at level alpha; 0 when either class is empty.

    Uses |da| + |db| = max over s in {+1,-1} of +-((a + s*b) - (a' + s*b')),
    so only per-class extremes of a+b and a-b are needed.  Runs one
    hypergeometric diagonal at a time, which keeps huge designs tractable.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    n1, n0 = design.n1, design.n0
    log_alpha = math.log(alpha) + P_TIE_REL  # ties at alpha reject
    # extremes of u = a + b and v = a - b per class
    ext = {
        cls: {"u_min": None, "u_max": None, "v_min": None, "v_max": None}
        for cls in (0, 1)
    }

    def _feed(cls: int, K: int, a_lo: int, a_hi: int):
        e = ext[cls]
        e["u_min"] = K if e["u_min"] is None else min(e["u_min"], K)
        e["u_max"] = K if e["u_max"] is None else max(e["u_max"], K)
        v_lo, v_hi = 2 * a_lo - K, 2 * a_hi - K
        e["v_min"] = v_lo if e["v_min"] is None else min(e["v_min"], v_lo)
        e["v_max"] = v_hi if e["v_max"] is None else max(e["v_max"], v_hi)

    if log_p is not None:
        # small designs: classify directly from the supplied table
        reject = log_p <= log_alpha
        a_idx, b_idx = np.nonzero(reject)
        if a_idx.size:
            u, v = a_idx + b_idx, a_idx - b_idx
            ext[1] = {
                "u_min": int(u.min()), "u_max": int(u.max()),
                "v_min": int(v.min()), "v_max": int(v.max()),
            }
        a_idx, b_idx = np.nonzero(~reject)
        if a_idx.size:
            u, v = a_idx + b_idx, a_idx - b_idx
            ext[0] = {
                "u_min": int(u.min()), "u_max": int(u.max()),
                "v_min": int(v.min()), "v_max": int(v.max()),
            }
    else:
        from .exact import hypergeom_log_pmf_support

        for K in range(design.n + 1):
            log_pmf, t_lo = hypergeom_log_pmf_support(design.n, K, n1)
            rev = np.logaddexp.accumulate(log_pmf[::-1])[::-1]
            rev[0] = 0.0
            np.minimum(rev, 0.0, out=rev)
            t_hi = t_lo + len(log_pmf) - 1
            # diagonal cells restricted to the lattice: b = K - a in [0, n0]
            a_lo, a_hi = max(t_lo, K - n0), min(t_hi, K)
            if a_lo > a_hi:
                continue
            # tails are nonincreasing in a: rejection is a suffix segment
            seg = rev[a_lo - t_lo : a_hi - t_lo + 1]
            first_reject = int(np.searchsorted(-seg, -log_alpha, side="left"))
            if first_reject > 0:
                _feed(0, K, a_lo, a_lo + first_reject - 1)
            if first_reject <= a_hi - a_lo:
                _feed(1, K, a_lo + first_reject, a_hi)

    if ext[0]["u_min"] is None or ext[1]["u_min"] is None:
        return 0
    best = 0
    for key_min, key_max in (("u_min", "u_max"), ("v_min", "v_max")):
        best = max(best, ext[0][key_max] - ext[1][key_min])
        best = max(best, ext[1][key_max] - ext[0][key_min])
    return int(best)


def max_class_distance_from_table(design: DesignSizes, alpha: float) -> int:
    """Convenience wrapper classifying cells via the full log-p table."""
    return max_class_distance(design, alpha, log_p=log_p_value_table(design))


@dataclass(frozen=True)
class BudgetAdvice:
    """Necessary (not sufficient) lower bound on the top-up budget."""

    epsilon_plus_lower_bound: float
    l_max: int
    eta: float
    psi: float
    r: float
    unbounded: bool = False

    def to_dict(self) -> dict:
        return {
            "epsilon_plus_min": None if self.unbounded else self.epsilon_plus_lower_bound,
            "l_max": self.l_max,
            "eta": self.eta,
            "psi": self.psi,
            "r": self.r,
            "unbounded": self.unbounded,
        }


def boundary_distance(psi: float, region: AbstentionRegion) -> float:
    """r(Psi) = min(Psi - t_low, t_high - Psi) for evidence inside the band."""
    if not region.contains(psi):
        raise DomainError("evidence is not strictly inside the abstention region")
    return min(psi - region.t_low, region.t_high - psi)


def required_topup(
    psi: float, region: AbstentionRegion, l_max: int, eta: float
) -> BudgetAdvice:
    """Budget necessary to leave the abstention band with confidence 1 - eta:
    eps_plus >= 2 * arctanh((1 - eta) r^2 / (2 L_max Psi (1 - Psi))).

    This is a necessary condition only; spending exactly the bound does not
    guarantee escape.
    """
    if l_max < 1:
        raise DomainError(f"l_max must be >= 1, got {l_max}")
    if not 0.0 < eta < 1.0:
        raise DomainError(f"eta must lie in (0, 1), got {eta}")
    r = boundary_distance(psi, region)
    argument = (1.0 - eta) * r * r / (2.0 * l_max * psi * (1.0 - psi))
    if argument >= 1.0:
        return BudgetAdvice(
            epsilon_plus_lower_bound=math.inf,
            l_max=l_max,
            eta=eta,
            psi=psi,
            r=r,
            unbounded=True,
        )
    return BudgetAdvice(
        epsilon_plus_lower_bound=2.0 * math.atanh(argument),
        l_max=l_max,
        eta=eta,
        psi=psi,
        r=r,
    )


def escape_upper_bound(
    psi: float, region: AbstentionRegion, l_max: int, epsilon_plus
) -> float:
    """Pointwise cap on the probability that a top-up release moves the
    evidence out of the abstention band:
    min(1, 2 min(L_max s(eps_plus), 1) Psi(1-Psi) / r(Psi)^2)."""
    if l_max < 1:
        raise DomainError(f"l_max must be >= 1, got {l_max}")
    r = boundary_distance(psi, region)
    contraction = min(l_max * distinguishing_advantage(epsilon_plus), 1.0)
    return min(1.0, 2.0 * contraction * psi * (1.0 - psi) / (r * r))
