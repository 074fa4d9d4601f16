"""Exact randomization-test primitives for 2x2 tables.

Everything here is non-private and deterministic: log-space binomial
coefficients, hypergeometric tail p-values for the difference-in-proportions
statistic, and the sensitivities that calibrate the release mechanisms.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .errors import DesignError, DomainError

LOG_ZERO = float("-inf")


@dataclass(frozen=True)
class DesignSizes:
    """Fixed treatment/control group sizes of a completely randomized design."""

    n1: int
    n0: int

    def __post_init__(self):
        if self.n1 < 1 or self.n0 < 1:
            raise DesignError(f"group sizes must be >= 1, got ({self.n1}, {self.n0})")

    @property
    def n(self) -> int:
        return self.n1 + self.n0


@dataclass(frozen=True)
class OutcomeTable:
    """Observed 2x2 counts: successes by arm, with sizes fixed by design."""

    design: DesignSizes
    n11: int
    n01: int

    def __post_init__(self):
        if not 0 <= self.n11 <= self.design.n1:
            raise DesignError(f"n11={self.n11} outside [0, {self.design.n1}]")
        if not 0 <= self.n01 <= self.design.n0:
            raise DesignError(f"n01={self.n01} outside [0, {self.design.n0}]")

    @property
    def n10(self) -> int:
        return self.design.n1 - self.n11

    @property
    def n00(self) -> int:
        return self.design.n0 - self.n01

    @property
    def n_plus1(self) -> int:
        return self.n11 + self.n01


class _LogFactorialTable:
    """Grow-on-demand table of ln(k!), shared by all combinatorial routines.

    Grown once under a lock; reads afterwards are lock-free (the table is
    replaced atomically, never mutated in place).
    """

    def __init__(self):
        self._values = np.zeros(2)
        self._lock = threading.Lock()

    def upto(self, n: int) -> np.ndarray:
        if n < len(self._values):
            return self._values
        with self._lock:
            if n >= len(self._values):
                size = max(n + 1, 2 * len(self._values))
                values = np.empty(size)
                values[0] = 0.0
                np.cumsum(np.log(np.arange(1, size)), out=values[1:])
                self._values = values
        return self._values


_LOG_FACTORIAL = _LogFactorialTable()


def log_factorials(n: int) -> np.ndarray:
    """Return a read-only view of ln(k!) for k = 0..n (possibly longer)."""
    return _LOG_FACTORIAL.upto(n)


def log_binomial(n: int, k: int) -> float:
    """ln C(n, k); -inf when k is outside [0, n]; exact 0 at the boundary."""
    if n < 0:
        raise DomainError(f"n must be >= 0, got {n}")
    if k < 0 or k > n:
        return LOG_ZERO
    if k == 0 or k == n:
        return 0.0
    lf = log_factorials(n)
    return float(lf[n] - lf[k] - lf[n - k])


def hypergeom_log_pmf_support(n: int, K: int, n1: int) -> tuple[np.ndarray, int]:
    """Log-pmf of Hypergeometric(n, K, n1) over its support.

    Returns (log_pmf, t_lo) where the support is t_lo..t_lo+len(log_pmf)-1
    with t_lo = max(0, n1 - (n - K)) and t_hi = min(n1, K).
    """
    if not (0 <= K <= n and 0 <= n1 <= n):
        raise DesignError(f"invalid hypergeometric parameters (n={n}, K={K}, n1={n1})")
    t_lo = max(0, n1 - (n - K))
    t_hi = min(n1, K)
    t = np.arange(t_lo, t_hi + 1)
    lf = log_factorials(n)
    log_pmf = (
        lf[K] - lf[t] - lf[K - t]
        + lf[n - K] - lf[n1 - t] - lf[n - K - (n1 - t)]
        - (lf[n] - lf[n1] - lf[n - n1])
    )
    return log_pmf, t_lo


def hypergeom_pmf(n: int, K: int, n1: int, t: int) -> float:
    """Pr(X = t) for X ~ Hypergeometric(n, K, n1); 0 outside the support."""
    log_pmf, t_lo = hypergeom_log_pmf_support(n, K, n1)
    if t < t_lo or t >= t_lo + len(log_pmf):
        return 0.0
    return float(np.exp(log_pmf[t - t_lo]))


def _log_tail_from(log_pmf: np.ndarray, start: int) -> float:
    """ln sum(exp(log_pmf[start:])), accumulated from the largest term."""
    terms = log_pmf[start:]
    m = terms.max()
    return float(m + np.log(np.exp(terms - m).sum()))


def frt_log_p_value(a: int, b: int, design: DesignSizes) -> float:
    """ln of the one-sided randomization p-value Pr(X >= a),
    X ~ Hypergeometric(n, a+b, n1); exactly 0.0 when the tail is the whole
    support.  Log form stays meaningful when the p-value itself underflows.
    """
    n1, n0 = design.n1, design.n0
    if not 0 <= a <= n1:
        raise DomainError(f"a={a} outside [0, {n1}]")
    if not 0 <= b <= n0:
        raise DomainError(f"b={b} outside [0, {n0}]")
    log_pmf, t_lo = hypergeom_log_pmf_support(design.n, a + b, n1)
    if a <= t_lo:
        return 0.0
    return min(0.0, _log_tail_from(log_pmf, a - t_lo))


def frt_p_value(a: int, b: int, design: DesignSizes) -> float:
    """One-sided randomization p-value Pr(X >= a), X ~ Hypergeometric(n, a+b, n1).

    Exact enumeration of the hypergeometric tail in log space; always in (0, 1].
    """
    return float(np.exp(frt_log_p_value(a, b, design)))


def diff_in_proportions(table: OutcomeTable) -> float:
    """Difference-in-proportions statistic n11/n1 - n01/n0."""
    return table.n11 / table.design.n1 - table.n01 / table.design.n0


def p_value_sensitivity(design: DesignSizes) -> float:
    """L1-sensitivity of the randomization p-value: max(n1, n0) / n."""
    return max(design.n1, design.n0) / design.n


def statistic_sensitivity(design: DesignSizes) -> float:
    """L1-sensitivity of the difference-in-proportions statistic: max(1/n1, 1/n0)."""
    return max(1.0 / design.n1, 1.0 / design.n0)


def mc_frt_p_value(t_obs: float, replicates) -> float:
    """Add-one Monte Carlo p-value (1 + #{replicate >= t_obs}) / (1 + R)."""
    replicates = np.asarray(replicates, dtype=float)
    if replicates.size == 0:
        raise DomainError("replicates must be nonempty")
    exceed = int(np.count_nonzero(replicates >= t_obs))
    return (1 + exceed) / (1 + replicates.size)


def log_p_value_table(design: DesignSizes) -> np.ndarray:
    """Matrix of frt_log_p_value(a, b) over the full lattice {0..n1} x {0..n0}.

    Built one diagonal K = a+b at a time: the tail values for all cells on a
    diagonal are suffix sums of a single hypergeometric pmf, accumulated in
    log space from the smallest tail outward.
    """
    n1, n0 = design.n1, design.n0
    table = np.empty((n1 + 1, n0 + 1))
    for K in range(design.n + 1):
        log_pmf, t_lo = hypergeom_log_pmf_support(design.n, K, n1)
        # suffix logsumexp: tail[i] = ln sum(exp(log_pmf[i:]))
        rev = np.logaddexp.accumulate(log_pmf[::-1])[::-1]
        a = np.arange(t_lo, t_lo + len(log_pmf))
        rev[0] = 0.0  # full-support tail is exactly 1
        np.minimum(rev, 0.0, out=rev)
        table[a, K - a] = rev
    return table


def p_value_table(design: DesignSizes) -> np.ndarray:
    """Matrix of frt_p_value(a, b) over the full lattice {0..n1} x {0..n0}."""
    return np.exp(log_p_value_table(design))


def log_p_value_window(
    design: DesignSizes, rows: np.ndarray, cols: np.ndarray
) -> np.ndarray:
    """log_p_value_table restricted to a contiguous rows x cols block,
    computed diagonal by diagonal so huge lattices never materialize."""
    rows, cols = np.asarray(rows), np.asarray(cols)
    out = np.empty((len(rows), len(cols)))
    a_lo, a_hi = int(rows[0]), int(rows[-1])
    b_lo, b_hi = int(cols[0]), int(cols[-1])
    for K in range(a_lo + b_lo, a_hi + b_hi + 1):
        log_pmf, t_lo = hypergeom_log_pmf_support(design.n, K, design.n1)
        rev = np.logaddexp.accumulate(log_pmf[::-1])[::-1]
        rev[0] = 0.0
        np.minimum(rev, 0.0, out=rev)
        a_start = max(a_lo, K - b_hi)
        a_end = min(a_hi, K - b_lo)
        if a_start > a_end:
            continue
        a = np.arange(a_start, a_end + 1)
        out[a - a_lo, K - a - b_lo] = rev[a - t_lo]
    return out


class PValueEvaluator:
    """Memoizing single-cell p-value evaluator for large designs.

    Results depend on (a, K) only; the cache is keyed accordingly so that
    repeated draws hitting the same cells are free.
    """

    def __init__(self, design: DesignSizes):
        self.design = design
        self._cache: dict[tuple[int, int], float] = {}

    def log_p(self, a: int, b: int) -> float:
        key = (a, a + b)
        lp = self._cache.get(key)
        if lp is None:
            lp = frt_log_p_value(a, b, self.design)
            self._cache[key] = lp
        return lp

    def __call__(self, a: int, b: int) -> float:
        return float(np.exp(self.log_p(a, b)))

    def log_batch(self, pairs) -> np.ndarray:
        """Evaluate ln p over an (m, 2) array of (a, b) cells."""
        out = np.empty(len(pairs))
        for i, (a, b) in enumerate(pairs):
            out[i] = self.log_p(int(a), int(b))
        return out
