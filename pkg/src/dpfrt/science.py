"""Finite-population potential-outcome tables and randomized assignment."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .exact import DesignSizes, OutcomeTable


@dataclass(frozen=True)
class ScienceTable:
    """Joint counts of potential-outcome pairs (Y(1), Y(0)) over the units.

    N11: both outcomes 1; N10: helped (1 under treatment only);
    N01: harmed; N00: both 0.  Never observable in full.
    """

    N11: int
    N10: int
    N01: int
    N00: int

    def __post_init__(self):
        if min(self.N11, self.N10, self.N01, self.N00) < 0:
            raise DomainError("science counts must be nonnegative")
        if self.n < 2:
            raise DomainError("at least two units are required")

    @property
    def n(self) -> int:
        return self.N11 + self.N10 + self.N01 + self.N00

    @property
    def true_effect(self) -> float:
        """Average causal effect (N10 - N01) / n."""
        return (self.N10 - self.N01) / self.n

    def sharp_null_holds(self) -> bool:
        return self.N10 == 0 and self.N01 == 0


def cre_assign(
    science: ScienceTable, n1: int, rng: np.random.Generator
) -> OutcomeTable:
    """Realize an outcome table by drawing a uniform size-n1 treated subset.

    The treated counts per science cell are jointly multivariate
    hypergeometric; treated units reveal Y(1), controls reveal Y(0).
    """
    n = science.n
    if not 0 < n1 < n:
        raise DomainError(f"n1 must lie strictly between 0 and {n}, got {n1}")
    cells = [science.N11, science.N10, science.N01, science.N00]
    m11, m10, m01, m00 = rng.multivariate_hypergeometric(cells, n1)
    treated_successes = m11 + m10
    control_successes = (science.N11 - m11) + (science.N01 - m01)
    return OutcomeTable(
        design=DesignSizes(n1, n - n1),
        n11=int(treated_successes),
        n01=int(control_successes),
    )
