"""Differentially private Fisher randomization tests for binary outcomes."""

from .exact import (
    DesignSizes,
    OutcomeTable,
    diff_in_proportions,
    frt_log_p_value,
    frt_p_value,
    hypergeom_pmf,
    log_binomial,
    mc_frt_p_value,
    p_value_sensitivity,
    p_value_table,
    statistic_sensitivity,
)
from .errors import (
    BudgetExhaustedError,
    DesignError,
    DomainError,
    UnsupportedPriorOperation,
)
from .ledger import BudgetLedger
from .mechanisms import (
    GeometricKernel,
    NoisyRelease,
    PrivacyBudget,
    laplace_p_release,
    mc_perturbation,
    release_counts,
    separate_perturbation,
)
from .posterior import (
    CountPosterior,
    CredibleSet,
    PValuePosterior,
    credible_set,
    denoise,
    p_posterior,
    posterior_from_releases,
    posterior_map,
    posterior_mean,
    posterior_median,
    posterior_report,
    rejection_evidence,
    sample_posterior,
    sequential_update,
)
from .priors import (
    BetaBinomialPrior,
    CommonRatePrior,
    CountPrior,
    LogOddsRatioPrior,
    RiskDifferencePrior,
    UniformPrior,
    prior_from_spec,
)
from .decisions import (
    AbstentionRegion,
    BudgetAdvice,
    Decision,
    LossSpec,
    abstention_region,
    binary_rule,
    distinguishing_advantage,
    escape_upper_bound,
    max_class_distance,
    required_topup,
    trinary_rule,
)
from .calibration import (
    CalibrationResult,
    build_psi_table,
    lfc_threshold,
    monte_carlo_null_quantile,
    neyman_confidence_set,
    neyman_threshold,
    null_model,
    psi_null_quantile,
)
from .science import ScienceTable, cre_assign

__all__ = [
    "DesignSizes",
    "OutcomeTable",
    "diff_in_proportions",
    "frt_log_p_value",
    "frt_p_value",
    "hypergeom_pmf",
    "log_binomial",
    "mc_frt_p_value",
    "p_value_sensitivity",
    "p_value_table",
    "statistic_sensitivity",
    "BudgetExhaustedError",
    "DesignError",
    "DomainError",
    "UnsupportedPriorOperation",
    "BudgetLedger",
    "GeometricKernel",
    "NoisyRelease",
    "PrivacyBudget",
    "laplace_p_release",
    "mc_perturbation",
    "release_counts",
    "separate_perturbation",
    "CountPosterior",
    "CredibleSet",
    "PValuePosterior",
    "credible_set",
    "denoise",
    "p_posterior",
    "posterior_from_releases",
    "posterior_map",
    "posterior_mean",
    "posterior_median",
    "posterior_report",
    "rejection_evidence",
    "sample_posterior",
    "sequential_update",
    "BetaBinomialPrior",
    "CommonRatePrior",
    "CountPrior",
    "LogOddsRatioPrior",
    "RiskDifferencePrior",
    "UniformPrior",
    "prior_from_spec",
    "AbstentionRegion",
    "BudgetAdvice",
    "Decision",
    "LossSpec",
    "abstention_region",
    "binary_rule",
    "distinguishing_advantage",
    "escape_upper_bound",
    "max_class_distance",
    "required_topup",
    "trinary_rule",
    "CalibrationResult",
    "build_psi_table",
    "lfc_threshold",
    "monte_carlo_null_quantile",
    "neyman_confidence_set",
    "neyman_threshold",
    "null_model",
    "psi_null_quantile",
    "ScienceTable",
    "cre_assign",
]

__version__ = "0.1.0"
