"""Reproduction studies and machine-readable result emission.

Three study families: conditional-on-data estimation quality of the
denoised p-value (MSE of point estimators, credible-set coverage/width),
finite-population decision behaviour over repeated randomization and
privatization, and the analysis of the two public ADAPTABLE trial
endpoints.  Every run is fully determined by (config, seed).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .decisions import LossSpec, trinary_rule
from .errors import DomainError
from .exact import (
    DesignSizes,
    OutcomeTable,
    frt_p_value,
    log_p_value_table,
)
from .mechanisms import GeometricKernel, NoisyRelease, release_counts
from .posterior import (
    P_TIE_REL,
    PValuePosterior,
    credible_set,
    denoise,
    p_posterior,
    posterior_map,
    posterior_mean,
    posterior_median,
    posterior_report,
    rejection_evidence,
    _round_log_significant,
)
from .priors import CountPrior, UniformPrior, prior_from_spec
from .science import ScienceTable, cre_assign


def _observed(n1: int, n11: int, n01: int) -> OutcomeTable:
    return OutcomeTable(DesignSizes(n1, n1), n11, n01)


# observed-outcome evaluation grid: balanced designs, control arm held at a
# 50% success rate, treated arm shifted by a growing effect
DP_STUDY_CASES: dict[str, dict[int, OutcomeTable]] = {
    "no_effect": {
        50: _observed(25, 12, 12),
        100: _observed(50, 25, 25),
        500: _observed(250, 125, 125),
    },
    "small_effect": {
        50: _observed(25, 14, 12),
        100: _observed(50, 28, 25),
        500: _observed(250, 138, 125),
    },
    "medium_effect": {
        50: _observed(25, 16, 12),
        100: _observed(50, 32, 25),
        500: _observed(250, 162, 125),
    },
    "large_effect": {
        50: _observed(25, 20, 12),
        100: _observed(50, 40, 25),
        500: _observed(250, 200, 125),
    },
}

# potential-outcome populations: no harmed units, a growing helped fraction
CAUSAL_STUDY_CASES: dict[str, dict[int, ScienceTable]] = {
    "null": {
        50: ScienceTable(25, 0, 0, 25),
        100: ScienceTable(50, 0, 0, 50),
        500: ScienceTable(250, 0, 0, 250),
    },
    "small_effect": {
        50: ScienceTable(25, 3, 0, 22),
        100: ScienceTable(50, 5, 0, 45),
        500: ScienceTable(250, 25, 0, 225),
    },
    "medium_effect": {
        50: ScienceTable(25, 8, 0, 17),
        100: ScienceTable(50, 15, 0, 35),
        500: ScienceTable(250, 75, 0, 175),
    },
    "large_effect": {
        50: ScienceTable(25, 15, 0, 10),
        100: ScienceTable(50, 30, 0, 20),
        500: ScienceTable(250, 150, 0, 100),
    },
}

# published intention-to-treat counts from the ADAPTABLE aspirin-dosing
# trial: 325 mg arm n1=7536, 81 mg arm n0=7540
ADAPTABLE_ENDPOINTS: dict[str, OutcomeTable] = {
    "primary_composite": OutcomeTable(DesignSizes(7536, 7540), 569, 590),
    "major_bleeding": OutcomeTable(DesignSizes(7536, 7540), 44, 53),
}


@dataclass(frozen=True)
class ResultRow:
    case: str
    n: int
    epsilon: float | None
    rule: str
    metric: str
    value: float
    stderr: float | None = None

    def to_dict(self) -> dict:
        return {
            "case": self.case,
            "n": self.n,
            "epsilon": self.epsilon,
            "rule": self.rule,
            "metric": self.metric,
            "value": self.value,
            "stderr": self.stderr,
        }


CSV_HEADER = ["case", "n", "epsilon", "rule", "metric", "value", "stderr"]


def results_to_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow(
                [
                    row.case,
                    row.n,
                    "" if row.epsilon is None else repr(row.epsilon),
                    row.rule,
                    row.metric,
                    repr(row.value),
                    "" if row.stderr is None else repr(row.stderr),
                ]
            )


def results_to_json(rows, path):
    Path(path).write_text(json.dumps([r.to_dict() for r in rows], indent=1))


def results_from_json(path) -> list[ResultRow]:
    return [ResultRow(**rec) for rec in json.loads(Path(path).read_text())]


class LatticeLevels:
    """Precomputed p-value level structure of one design's lattice, reused
    across replications to aggregate posteriors without re-sorting."""

    def __init__(self, design: DesignSizes):
        self.design = design
        log_p = log_p_value_table(design).ravel()
        keys = _round_log_significant(log_p)
        self.log_support, self.inverse = np.unique(keys, return_inverse=True)
        self.support = np.exp(self.log_support)

    def aggregate(self, masses_flat: np.ndarray, meta=None) -> PValuePosterior:
        w = np.bincount(
            self.inverse, weights=masses_flat, minlength=len(self.support)
        )
        return PValuePosterior(
            support=self.support,
            masses=w / w.sum(),
            log_support=self.log_support,
            method="exact",
            design=self.design,
            meta=meta or {},
        )


@dataclass
class DpStudyConfig:
    cases: tuple[str, ...] = tuple(DP_STUDY_CASES)
    sample_sizes: tuple[int, ...] = (50, 100, 500)
    epsilons: tuple[float, ...] = (0.1, 0.2, 0.5, 1.0)
    replications: int = 1000
    seed: int = 0
    prior_spec: dict = field(default_factory=lambda: {"family": "uniform"})
    level: float = 0.95


def run_dp_study(config: DpStudyConfig) -> list[ResultRow]:
    """Conditional-on-data estimation study.

    For each case, size and budget: mean squared error of the naive
    (clip-then-test) estimator and the posterior mean/median/MAP, plus
    coverage and width of the equal-tailed credible set around the
    non-private p-value.
    """
    if config.replications < 1:
        raise DomainError("replications must be >= 1")
    prior = prior_from_spec(config.prior_spec)
    rows: list[ResultRow] = []
    levels_cache: dict[tuple[int, int], LatticeLevels] = {}
    seeds = iter(np.random.SeedSequence(config.seed).spawn(
        len(config.cases) * len(config.sample_sizes) * len(config.epsilons)
    ))
    for case in config.cases:
        for n in config.sample_sizes:
            table = DP_STUDY_CASES[case][n]
            design = table.design
            p_true = frt_p_value(table.n11, table.n01, design)
            rows.append(ResultRow(case, n, None, "exact", "p_value", p_true))
            key = (design.n1, design.n0)
            if key not in levels_cache:
                levels_cache[key] = LatticeLevels(design)
            levels = levels_cache[key]
            m1 = np.full(design.n1 + 1, 1.0 / (design.n1 + 1))
            for eps in config.epsilons:
                rng = np.random.default_rng(next(seeds))
                err = {k: [] for k in ("naive", "mean", "median", "map")}
                covered, widths = [], []
                for _ in range(config.replications):
                    release = release_counts(table, eps, rng)
                    post = denoise(prior, release)
                    if post.kind == "factorized":
                        flat = np.outer(
                            post.gamma_treated, post.gamma_control
                        ).ravel()
                    else:
                        flat = post.gamma.ravel()
                    pp = levels.aggregate(flat)
                    a_clip, b_clip = release.clipped()
                    naive = frt_p_value(a_clip, b_clip, design)
                    err["naive"].append((naive - p_true) ** 2)
                    err["mean"].append((posterior_mean(pp) - p_true) ** 2)
                    err["median"].append((posterior_median(pp) - p_true) ** 2)
                    err["map"].append((posterior_map(pp) - p_true) ** 2)
                    cs = credible_set(pp, config.level, "equal-tailed")
                    lo, hi = cs.enclosing_interval
                    covered.append(lo - 1e-12 <= p_true <= hi + 1e-12)
                    widths.append(hi - lo)
                R = config.replications
                for rule, label in (
                    ("naive", "naive"),
                    ("mean", "posterior_mean"),
                    ("median", "posterior_median"),
                    ("map", "posterior_map"),
                ):
                    sq = np.asarray(err[rule])
                    rows.append(
                        ResultRow(
                            case, n, eps, label, "mse",
                            float(sq.mean()),
                            float(sq.std(ddof=1) / math.sqrt(R)) if R > 1 else None,
                        )
                    )
                cov = float(np.mean(covered))
                rows.append(
                    ResultRow(
                        case, n, eps, "credible_et", "coverage",
                        cov, math.sqrt(cov * (1 - cov) / R) if R > 1 else None,
                    )
                )
                w = np.asarray(widths)
                rows.append(
                    ResultRow(
                        case, n, eps, "credible_et", "width",
                        float(w.mean()),
                        float(w.std(ddof=1) / math.sqrt(R)) if R > 1 else None,
                    )
                )
    return rows


@dataclass
class CausalStudyConfig:
    cases: tuple[str, ...] = tuple(CAUSAL_STUDY_CASES)
    sample_sizes: tuple[int, ...] = (50, 100, 500)
    epsilons: tuple[float, ...] = (0.1, 0.2, 0.5, 1.0)
    replications: int = 100
    seed: int = 0
    alpha: float = 0.05
    loss_grid: tuple[tuple[float, float, float], ...] = ((1.0, 1.0, 0.025),)


def run_causal_study(config: CausalStudyConfig) -> list[ResultRow]:
    """Finite-population decision study.

    Each replication draws a fresh assignment and a fresh privatization;
    noise is coupled across the budget grid through shared uniforms so that
    decision trends in the budget are not washed out by sampling noise.
    """
    rows: list[ResultRow] = []
    reject_masks: dict[tuple[int, int], np.ndarray] = {}
    uniform_marginals: dict[int, np.ndarray] = {}
    seeds = iter(np.random.SeedSequence(config.seed).spawn(
        len(config.cases) * len(config.sample_sizes)
    ))
    kernels = {eps: GeometricKernel.from_epsilon(eps) for eps in config.epsilons}
    for case in config.cases:
        for n in config.sample_sizes:
            science = CAUSAL_STUDY_CASES[case][n]
            n1 = n // 2
            design = DesignSizes(n1, n - n1)
            key = (design.n1, design.n0)
            if key not in reject_masks:
                reject_masks[key] = (
                    log_p_value_table(design)
                    <= math.log(config.alpha) + P_TIE_REL
                ).astype(float)
            mask = reject_masks[key]
            rng = np.random.default_rng(next(seeds))
            R = config.replications
            outcomes = {
                (losses, eps): [] for losses in config.loss_grid
                for eps in config.epsilons
            }
            for _ in range(R):
                table = cre_assign(science, n1, rng)
                u = rng.random(2)
                for eps in config.epsilons:
                    noise = kernels[eps].inverse_cdf(u)
                    release = NoisyRelease(
                        n11_tilde=table.n11 + int(noise[0]),
                        n01_tilde=table.n01 + int(noise[1]),
                        epsilon=eps,
                        design=design,
                        released_at="",
                        release_id="study",
                    )
                    post = denoise(UniformPrior(), release)
                    psi = float(
                        post.gamma_treated @ mask @ post.gamma_control
                    )
                    for losses in config.loss_grid:
                        decision = trinary_rule(
                            psi, LossSpec(*losses), alpha=config.alpha
                        )
                        outcomes[(losses, eps)].append(decision.outcome)
            for losses in config.loss_grid:
                rule = f"bayes{losses}"
                for eps in config.epsilons:
                    recorded = outcomes[(losses, eps)]
                    for metric, label in (
                        ("reject_rate", "reject"),
                        ("abstain_rate", "abstain"),
                        ("not_reject_rate", "not_reject"),
                    ):
                        rate = sum(o == label for o in recorded) / R
                        rows.append(
                            ResultRow(
                                case, n, eps, rule, metric, rate,
                                math.sqrt(rate * (1 - rate) / R),
                            )
                        )
    return rows


def run_adaptable(
    epsilons=(0.1, 0.5, 1.0),
    losses: tuple[float, float, float] = (1.0, 1.0, 0.025),
    alpha: float = 0.05,
    seed: int = 0,
    draws: int = 100_000,
) -> dict:
    """Analyze both public trial endpoints across the budget grid.

    The lattice is far beyond exact enumeration, so the p-value posterior is
    sampled; the seed fixes releases and sampling, and is echoed in the
    report.
    """
    loss_spec = LossSpec(*losses)
    report = {"seed": seed, "alpha": alpha, "losses": loss_spec.to_dict(),
              "endpoints": {}}
    seeds = iter(
        np.random.SeedSequence(seed).spawn(len(ADAPTABLE_ENDPOINTS) * len(epsilons))
    )
    for name, table in ADAPTABLE_ENDPOINTS.items():
        design = table.design
        endpoint = {
            "design": {"n1": design.n1, "n0": design.n0},
            "nonprivate_p": frt_p_value(table.n11, table.n01, design),
            "budgets": [],
        }
        for eps in epsilons:
            rng = np.random.default_rng(next(seeds))
            release = release_counts(table, eps, rng)
            post = denoise(UniformPrior(), release)
            pp = p_posterior(post, rng=rng, draws=draws)
            psi = rejection_evidence(pp, alpha)
            decision = trinary_rule(psi, loss_spec, alpha=alpha)
            endpoint["budgets"].append(
                {
                    "epsilon": eps,
                    "release": {
                        "n11_tilde": release.n11_tilde,
                        "n01_tilde": release.n01_tilde,
                    },
                    "posterior": posterior_report(pp, alpha=alpha),
                    "psi": psi,
                    "decision": decision.outcome,
                }
            )
        report["endpoints"][name] = endpoint
    return report


def denoising_demo_series(epsilons=(0.1, 0.5, 1.0), seed: int = 0) -> dict:
    """Posterior pmf series for the balanced 260-vs-250 demonstration table
    (500 units per arm), with the non-private p-value as the reference line."""
    table = OutcomeTable(DesignSizes(500, 500), 260, 250)
    levels = LatticeLevels(table.design)
    series = {
        "reference_p": frt_p_value(table.n11, table.n01, table.design),
        "curves": [],
    }
    seeds = iter(np.random.SeedSequence(seed).spawn(len(epsilons)))
    for eps in epsilons:
        rng = np.random.default_rng(next(seeds))
        release = release_counts(table, eps, rng)
        post = denoise(UniformPrior(), release)
        flat = np.outer(post.gamma_treated, post.gamma_control).ravel()
        pp = levels.aggregate(flat)
        keep = pp.masses > 1e-12
        series["curves"].append(
            {
                "epsilon": eps,
                "support": pp.support[keep].tolist(),
                "masses": pp.masses[keep].tolist(),
            }
        )
    return series


def emit_plot_data(
    results: list[ResultRow] | dict,
    out_dir,
    name: str,
    formats: tuple[str, ...] = ("csv", "json"),
) -> list[Path]:
    """Write result rows (or a series dict) as CSV and/or JSON files."""
    if not results:
        raise DomainError("no results to emit")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if isinstance(results, dict):
        path = out / f"{name}.json"
        path.write_text(json.dumps(results, indent=1))
        written.append(path)
        return written
    for fmt in formats:
        path = out / f"{name}.{fmt}"
        if fmt == "csv":
            results_to_csv(results, path)
        elif fmt == "json":
            results_to_json(results, path)
        else:
            raise DomainError(f"unknown format {fmt!r}")
        written.append(path)
    return written
