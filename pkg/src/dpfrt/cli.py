"""Command-line interface for tests, releases, denoising and the studies."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from .calibration import (
    build_psi_table,
    lfc_threshold,
    neyman_threshold,
)
from .decisions import (
    LossSpec,
    max_class_distance,
    required_topup,
    trinary_rule,
)
from .exact import DesignSizes, OutcomeTable, diff_in_proportions, frt_p_value
from .mechanisms import (
    NoisyRelease,
    laplace_p_release,
    mc_perturbation,
    release_counts,
    separate_perturbation,
    split_evenly,
)
from .posterior import denoise, p_posterior, posterior_report, rejection_evidence
from .priors import prior_from_spec
from .studies import (
    CausalStudyConfig,
    DpStudyConfig,
    denoising_demo_series,
    emit_plot_data,
    run_adaptable,
    run_causal_study,
    run_dp_study,
)


def _emit(payload, out: str | None, fmt: str):
    text = json.dumps(payload, indent=2) if fmt == "json" else payload
    if out:
        Path(out).write_text(text if isinstance(text, str) else str(text))
    else:
        click.echo(text)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    return json.loads(Path(path).read_text())


def _parse_prior(spec: str | None):
    return prior_from_spec(json.loads(spec) if spec else {"family": "uniform"})


table_options = [
    click.option("--n1", type=int, required=True, help="treated group size"),
    click.option("--n0", type=int, required=True, help="control group size"),
    click.option("--n11", type=int, required=True, help="treated successes"),
    click.option("--n01", type=int, required=True, help="control successes"),
]


def with_options(options):
    def wrap(fn):
        for option in reversed(options):
            fn = option(fn)
        return fn
    return wrap


@click.group()
def main():
    """Differentially private Fisher randomization tests."""


@main.command()
@with_options(table_options)
@click.option("--out", type=str, default=None)
def frt(n1, n0, n11, n01, out):
    """Exact non-private test for one observed table."""
    table = OutcomeTable(DesignSizes(n1, n0), n11, n01)
    _emit(
        {
            "p_value": frt_p_value(n11, n01, table.design),
            "statistic": diff_in_proportions(table),
        },
        out,
        "json",
    )


@main.command()
@with_options(table_options)
@click.option("--epsilon", type=float, required=True)
@click.option(
    "--mechanism",
    type=click.Choice(["counts", "p_value", "separate", "monte_carlo"]),
    default="counts",
)
@click.option("--replicates", type=int, default=999, help="monte_carlo only")
@click.option("--seed", type=int, default=None)
@click.option("--out", type=str, default=None)
def privatize(n1, n0, n11, n01, epsilon, mechanism, replicates, seed, out):
    """Release an eps-DP output for one observed table."""
    table = OutcomeTable(DesignSizes(n1, n0), n11, n01)
    rng = np.random.default_rng(seed)
    if mechanism == "counts":
        release = release_counts(table, epsilon, rng)
        payload = {
            "mechanism": mechanism,
            "n11_tilde": release.n11_tilde,
            "n01_tilde": release.n01_tilde,
            "epsilon": epsilon,
            "released_at": release.released_at,
            "release_id": release.release_id,
        }
    elif mechanism == "p_value":
        payload = {
            "mechanism": mechanism,
            "p_tilde": laplace_p_release(table, epsilon, rng),
            "epsilon": epsilon,
        }
    elif mechanism == "separate":
        half = epsilon / 2
        payload = {
            "mechanism": mechanism,
            "p_tilde": separate_perturbation(table, half, half, rng),
            "epsilon": epsilon,
        }
    else:
        budgets = split_evenly(epsilon / 2, replicates)
        payload = {
            "mechanism": mechanism,
            "p_tilde": mc_perturbation(table, epsilon / 2, budgets, rng),
            "epsilon": epsilon,
            "replicates": replicates,
        }
    _emit(payload, out, "json")


@main.command("denoise")
@click.option("--n1", type=int, required=True)
@click.option("--n0", type=int, required=True)
@click.option("--n11-tilde", type=int, required=True)
@click.option("--n01-tilde", type=int, required=True)
@click.option("--epsilon", type=float, required=True)
@click.option("--prior", type=str, default=None, help='JSON, e.g. {"family":"uniform"}')
@click.option("--alpha", type=float, default=0.05)
@click.option("--level", type=float, default=0.95)
@click.option("--seed", type=int, default=0, help="used only when sampling is needed")
@click.option("--out", type=str, default=None)
def denoise_cmd(n1, n0, n11_tilde, n01_tilde, epsilon, prior, alpha, level, seed, out):
    """Posterior of the exact p-value given one noisy count release."""
    design = DesignSizes(n1, n0)
    release = NoisyRelease(
        n11_tilde=n11_tilde,
        n01_tilde=n01_tilde,
        epsilon=epsilon,
        design=design,
        released_at="",
        release_id="cli",
    )
    post = denoise(_parse_prior(prior), release)
    pp = p_posterior(post, rng=np.random.default_rng(seed))
    _emit(posterior_report(pp, level=level, alpha=alpha), out, "json")


@main.command()
@click.option("--psi", type=float, required=True)
@click.option("--lambda0", type=float, default=1.0)
@click.option("--lambda1", type=float, default=1.0)
@click.option("--lambda-u", type=float, default=None)
@click.option("--alpha", type=float, default=0.05)
@click.option("--advice/--no-advice", default=False)
@click.option("--n1", type=int, default=None, help="needed for --advice")
@click.option("--n0", type=int, default=None)
@click.option("--eta", type=float, default=0.05)
@click.option("--out", type=str, default=None)
def decide(psi, lambda0, lambda1, lambda_u, alpha, advice, n1, n0, eta, out):
    """Risk-optimal decision from the rejection evidence."""
    losses = LossSpec(lambda0, lambda1, lambda_u)
    if lambda_u is None:
        from .decisions import binary_rule

        decision = binary_rule(psi, lambda0, lambda1, alpha)
    else:
        decision = trinary_rule(psi, losses, alpha)
    payload = decision.to_dict()
    if advice and decision.outcome == "abstain":
        if n1 is None or n0 is None:
            raise click.UsageError("--advice requires --n1 and --n0")
        l_max = max_class_distance(DesignSizes(n1, n0), alpha)
        payload["advice"] = required_topup(
            psi, decision.region, l_max, eta
        ).to_dict()
    _emit(payload, out, "json")


@main.command()
@click.option("--n1", type=int, required=True)
@click.option("--n0", type=int, required=True)
@click.option("--epsilon", type=float, required=True)
@click.option("--prior", type=str, default=None)
@click.option("--alpha", type=float, default=0.05)
@click.option("--alpha-freq", type=float, default=0.05)
@click.option(
    "--method", type=click.Choice(["worst-case", "neyman"]), default="worst-case"
)
@click.option("--eta", type=float, default=0.01, help="neyman only")
@click.option("--n11-tilde", type=int, default=None, help="neyman only")
@click.option("--n01-tilde", type=int, default=None, help="neyman only")
@click.option("--out", type=str, default=None)
def calibrate(
    n1, n0, epsilon, prior, alpha, alpha_freq, method, eta, n11_tilde, n01_tilde, out
):
    """Frequentist threshold for the evidence-based test."""
    design = DesignSizes(n1, n0)
    prior_obj = _parse_prior(prior)
    table = build_psi_table(design, epsilon, prior_obj, alpha)
    if method == "worst-case":
        result = lfc_threshold(
            design, epsilon, prior_obj, alpha, alpha_freq, psi_table=table
        )
    else:
        if n11_tilde is None or n01_tilde is None:
            raise click.UsageError(
                "neyman calibration requires --n11-tilde and --n01-tilde"
            )
        result = neyman_threshold(
            (n11_tilde, n01_tilde), design, epsilon, prior_obj,
            alpha, alpha_freq, eta, psi_table=table,
        )
    _emit(result.to_dict(), out, "json")


@main.command("simulate-dp")
@click.option("--config", "config_path", type=str, default=None)
@click.option("--seed", type=int, default=0)
@click.option("--reps", type=int, default=None)
@click.option("--out", type=str, default="dp_study")
@click.option("--format", "fmt", type=click.Choice(["csv", "json", "both"]), default="both")
@click.option("--out-dir", type=str, default=".")
def simulate_dp(config_path, seed, reps, out, fmt, out_dir):
    """Estimation-quality study over the built-in cases."""
    overrides = _load_config(config_path)
    overrides.setdefault("seed", seed)
    if reps is not None:
        overrides["replications"] = reps
    if "cases" in overrides:
        overrides["cases"] = tuple(overrides["cases"])
    if "sample_sizes" in overrides:
        overrides["sample_sizes"] = tuple(overrides["sample_sizes"])
    if "epsilons" in overrides:
        overrides["epsilons"] = tuple(overrides["epsilons"])
    rows = run_dp_study(DpStudyConfig(**overrides))
    formats = ("csv", "json") if fmt == "both" else (fmt,)
    for path in emit_plot_data(rows, out_dir, out, formats):
        click.echo(str(path), err=True)


@main.command("simulate-causal")
@click.option("--config", "config_path", type=str, default=None)
@click.option("--seed", type=int, default=0)
@click.option("--reps", type=int, default=None)
@click.option("--out", type=str, default="causal_study")
@click.option("--format", "fmt", type=click.Choice(["csv", "json", "both"]), default="both")
@click.option("--out-dir", type=str, default=".")
def simulate_causal(config_path, seed, reps, out, fmt, out_dir):
    """Decision-rule study over the built-in potential-outcome cases."""
    overrides = _load_config(config_path)
    overrides.setdefault("seed", seed)
    if reps is not None:
        overrides["replications"] = reps
    for key in ("cases", "sample_sizes", "epsilons"):
        if key in overrides:
            overrides[key] = tuple(overrides[key])
    if "loss_grid" in overrides:
        overrides["loss_grid"] = tuple(tuple(l) for l in overrides["loss_grid"])
    rows = run_causal_study(CausalStudyConfig(**overrides))
    formats = ("csv", "json") if fmt == "both" else (fmt,)
    for path in emit_plot_data(rows, out_dir, out, formats):
        click.echo(str(path), err=True)


@main.command()
@click.option("--epsilons", type=str, default="0.1,0.5,1.0")
@click.option("--seed", type=int, default=0)
@click.option("--alpha", type=float, default=0.05)
@click.option("--draws", type=int, default=100_000)
@click.option("--demo-series/--no-demo-series", default=True)
@click.option("--out-dir", type=str, default=".")
def adaptable(epsilons, seed, alpha, draws, demo_series, out_dir):
    """Analyze the public trial endpoints and emit plot data."""
    grid = tuple(float(e) for e in epsilons.split(","))
    report = run_adaptable(epsilons=grid, alpha=alpha, seed=seed, draws=draws)
    for path in emit_plot_data(report, out_dir, "adaptable"):
        click.echo(str(path), err=True)
    if demo_series:
        series = denoising_demo_series(epsilons=grid, seed=seed)
        for path in emit_plot_data(series, out_dir, "denoising_demo"):
            click.echo(str(path), err=True)


@main.command()
@click.option("--host", type=str, default=None)
@click.option("--port", type=int, default=None)
@click.option("--data-dir", type=str, default=None)
@click.option("--token", type=str, default=None)
@click.option("--config", "config_path", type=str, default=None)
def serve(host, port, data_dir, token, config_path):
    """Run the HTTP release service."""
    import uvicorn

    from .service import ServiceConfig, create_app

    config = ServiceConfig.load(
        config_path, host=host, port=port, data_dir=data_dir, token=token
    )
    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port)


if __name__ == "__main__":
    main()
