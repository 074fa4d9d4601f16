import json
import math

import numpy as np
import pytest

from dpfrt import DesignSizes, DomainError, frt_p_value
from dpfrt.science import ScienceTable, cre_assign
from dpfrt.studies import (
    ADAPTABLE_ENDPOINTS,
    CAUSAL_STUDY_CASES,
    DP_STUDY_CASES,
    CausalStudyConfig,
    DpStudyConfig,
    LatticeLevels,
    ResultRow,
    denoising_demo_series,
    emit_plot_data,
    results_from_json,
    results_to_csv,
    run_adaptable,
    run_causal_study,
    run_dp_study,
)


class TestScienceTable:
    def test_effect(self):
        s = ScienceTable(25, 15, 0, 10)
        assert s.n == 50
        assert s.true_effect == pytest.approx(0.3)
        assert not s.sharp_null_holds()
        assert ScienceTable(25, 0, 0, 25).sharp_null_holds()

    def test_validation(self):
        with pytest.raises(DomainError):
            ScienceTable(-1, 0, 0, 5)
        with pytest.raises(DomainError):
            ScienceTable(1, 0, 0, 0)


class TestCreAssign:
    def test_expected_treated_successes(self):
        science = ScienceTable(25, 0, 0, 25)
        rng = np.random.default_rng(0)
        draws = [cre_assign(science, 25, rng).n11 for _ in range(4000)]
        # E[n11] = n1 * N1+ / n = 25 * 25 / 50
        assert float(np.mean(draws)) == pytest.approx(12.5, abs=0.15)

    def test_everyone_helped(self):
        science = ScienceTable(0, 20, 0, 0)
        rng = np.random.default_rng(1)
        table = cre_assign(science, 8, rng)
        assert table.n11 == 8  # treated all reveal Y(1) = 1
        assert table.n01 == 0  # controls all reveal Y(0) = 0

    def test_sharp_null_fixes_total(self):
        science = ScienceTable(12, 0, 0, 18)
        rng = np.random.default_rng(2)
        for _ in range(50):
            t = cre_assign(science, 10, rng)
            assert t.n11 + t.n01 == 12

    def test_seed_reproducibility(self):
        science = ScienceTable(10, 5, 3, 12)
        t1 = cre_assign(science, 15, np.random.default_rng(7))
        t2 = cre_assign(science, 15, np.random.default_rng(7))
        assert (t1.n11, t1.n01) == (t2.n11, t2.n01)

    def test_invalid_n1(self):
        with pytest.raises(DomainError):
            cre_assign(ScienceTable(5, 0, 0, 5), 10, np.random.default_rng(0))


class TestBuiltinCases:
    def test_nonprivate_p_values_match_published_table(self):
        want = {
            ("no_effect", 50): 0.611,
            ("no_effect", 100): 0.579,
            ("no_effect", 500): 0.536,
            ("small_effect", 50): 0.389,
            ("small_effect", 100): 0.344,
            ("small_effect", 500): 0.141,
            ("medium_effect", 50): 0.197,
            ("medium_effect", 100): 0.113,
            ("large_effect", 50): 1.89e-2,
            ("large_effect", 100): 1.53e-3,
        }
        for (case, n), expected in want.items():
            table = DP_STUDY_CASES[case][n]
            p = frt_p_value(table.n11, table.n01, table.design)
            digits = -int(math.floor(math.log10(expected))) + 2
            assert round(p, digits) == pytest.approx(expected, rel=1e-9)

    def test_extreme_cases_scientific(self):
        t = DP_STUDY_CASES["medium_effect"][500]
        assert frt_p_value(t.n11, t.n01, t.design) == pytest.approx(5.54e-4, abs=5e-7)
        t = DP_STUDY_CASES["large_effect"][500]
        assert frt_p_value(t.n11, t.n01, t.design) == pytest.approx(
            1.11e-12, rel=5e-3
        )

    def test_causal_effects(self):
        assert CAUSAL_STUDY_CASES["null"][500].true_effect == 0.0
        assert CAUSAL_STUDY_CASES["large_effect"][100].true_effect == pytest.approx(0.3)

    def test_adaptable_constants(self):
        primary = ADAPTABLE_ENDPOINTS["primary_composite"]
        assert (primary.n11, primary.n10, primary.n01, primary.n00) == (
            569, 6967, 590, 6950,
        )
        bleeding = ADAPTABLE_ENDPOINTS["major_bleeding"]
        assert (bleeding.n11, bleeding.n01) == (44, 53)
        assert frt_p_value(569, 590, primary.design) == pytest.approx(0.7464, abs=5e-5)
        assert frt_p_value(44, 53, bleeding.design) == pytest.approx(0.8452, abs=5e-5)


class TestLatticeLevels:
    def test_matches_direct_aggregation(self):
        from dpfrt.mechanisms import NoisyRelease
        from dpfrt.posterior import denoise, p_posterior, posterior_mean
        from dpfrt.priors import UniformPrior

        design = DesignSizes(25, 25)
        levels = LatticeLevels(design)
        release = NoisyRelease(14, 9, 0.5, design, "", "x")
        post = denoise(UniformPrior(), release)
        direct = p_posterior(post)
        via_levels = levels.aggregate(
            np.outer(post.gamma_treated, post.gamma_control).ravel()
        )
        assert posterior_mean(via_levels) == pytest.approx(
            posterior_mean(direct), abs=1e-12
        )
        keep = via_levels.masses > 0
        assert np.allclose(via_levels.support[keep], direct.support)
        assert np.allclose(via_levels.masses[keep], direct.masses, atol=1e-12)


class TestRunDpStudy:
    def small_config(self):
        return DpStudyConfig(
            cases=("no_effect", "large_effect"),
            sample_sizes=(50,),
            epsilons=(0.5, 1.0),
            replications=40,
            seed=11,
        )

    def test_rows_and_determinism(self):
        rows1 = run_dp_study(self.small_config())
        rows2 = run_dp_study(self.small_config())
        assert rows1 == rows2
        metrics = {(r.case, r.metric, r.rule) for r in rows1}
        assert ("no_effect", "p_value", "exact") in metrics
        assert ("large_effect", "mse", "posterior_mean") in metrics
        assert ("no_effect", "coverage", "credible_et") in metrics

    def test_high_budget_mse_vanishes(self):
        config = DpStudyConfig(
            cases=("no_effect",),
            sample_sizes=(50,),
            epsilons=(50.0,),
            replications=10,
            seed=3,
        )
        rows = run_dp_study(config)
        for row in rows:
            if row.metric == "mse":
                assert row.value < 1e-12
            if row.metric == "coverage":
                assert row.value == 1.0
            if row.metric == "width":
                assert row.value < 1e-12


class TestRunCausalStudy:
    def test_shapes_and_rates(self):
        config = CausalStudyConfig(
            cases=("null", "large_effect"),
            sample_sizes=(50,),
            epsilons=(0.5, 1.0),
            replications=60,
            seed=5,
        )
        rows = run_causal_study(config)
        by = {
            (r.case, r.epsilon, r.metric): r.value
            for r in rows
        }
        for case in ("null", "large_effect"):
            for eps in (0.5, 1.0):
                total = (
                    by[(case, eps, "reject_rate")]
                    + by[(case, eps, "abstain_rate")]
                    + by[(case, eps, "not_reject_rate")]
                )
                assert total == pytest.approx(1.0)
        # sharp null: essentially no rejections
        assert by[("null", 1.0, "reject_rate")] <= 0.05 + 3 * 0.03

    def test_abstention_nonincreasing_in_budget(self):
        config = CausalStudyConfig(
            cases=("small_effect",),
            sample_sizes=(50,),
            epsilons=(0.1, 0.5, 1.0, 2.0),
            replications=80,
            seed=9,
        )
        rows = run_causal_study(config)
        abst = [
            r.value for r in rows if r.metric == "abstain_rate"
        ]
        slack = 2 / config.replications
        assert all(b <= a + slack for a, b in zip(abst, abst[1:]))


class TestRunAdaptable:
    def test_report_structure(self):
        report = run_adaptable(epsilons=(0.5,), seed=1, draws=20_000)
        assert set(report["endpoints"]) == {"primary_composite", "major_bleeding"}
        primary = report["endpoints"]["primary_composite"]
        assert primary["nonprivate_p"] == pytest.approx(0.7464, abs=5e-5)
        budget = primary["budgets"][0]
        assert budget["decision"] in {"reject", "not_reject", "abstain"}
        assert budget["posterior"]["psi"] == budget["psi"]

    def test_typical_decision_not_reject_at_half(self):
        report = run_adaptable(epsilons=(0.5,), seed=2, draws=20_000)
        assert (
            report["endpoints"]["primary_composite"]["budgets"][0]["decision"]
            == "not_reject"
        )


class TestEmission:
    def test_csv_json_round_trip(self, tmp_path):
        rows = [
            ResultRow("caseA", 50, 0.5, "posterior_mean", "mse", 0.0123, 0.001),
            ResultRow("caseA", 50, None, "exact", "p_value", 0.611),
        ]
        files = emit_plot_data(rows, tmp_path, "study")
        assert {f.suffix for f in files} == {".csv", ".json"}
        back = results_from_json(tmp_path / "study.json")
        assert back == rows
        header = (tmp_path / "study.csv").read_text().splitlines()[0]
        assert header == "case,n,epsilon,rule,metric,value,stderr"

    def test_empty_rejected(self, tmp_path):
        with pytest.raises(DomainError):
            emit_plot_data([], tmp_path, "empty")

    def test_demo_series(self, tmp_path):
        series = denoising_demo_series(epsilons=(0.5, 1.0), seed=0)
        assert series["reference_p"] == pytest.approx(0.2846, abs=5e-5)
        assert len(series["curves"]) == 2
        for curve in series["curves"]:
            assert sum(curve["masses"]) == pytest.approx(1.0, abs=1e-9)
        files = emit_plot_data(series, tmp_path, "demo")
        again = json.loads(files[0].read_text())
        assert again == series
