"""Synthetic designs, their stated truths, and the replication study harness."""

import csv
import json

import numpy as np
import pytest

from ips.exceptions import DataValidationError
from ips.simulation import (
    ATE_TRUTH,
    LATE_TRUTH,
    LQTE_TRUTH,
    StudyConfig,
    TRUE_BETA,
    dgp_kang_schafer,
    dgp_lte,
    run_study,
    simulate_dataset,
    write_metrics_csv,
    write_metrics_json,
)

SMALL_EXOG = dict(
    design="kang_schafer", n=120, reps=4, seed=42,
    estimators=("mle", "cbps_just"), taus=(0.5,), starts=1,
)


class TestDgp:
    def test_deterministic_in_seed(self):
        a, _ = dgp_kang_schafer(200, (9, 3))
        b, _ = dgp_kang_schafer(200, (9, 3))
        assert a.x.tobytes() == b.x.tobytes()
        assert a.d.tobytes() == b.d.tobytes()
        assert a.y.tobytes() == b.y.tobytes()
        c, _ = dgp_kang_schafer(200, (9, 4))
        assert a.x.tobytes() != c.x.tobytes()

    def test_treated_share_near_half(self):
        ds, _ = dgp_kang_schafer(10_000, (21, 0))
        assert abs(ds.d.mean() - 0.5) < 0.03

    def test_mean_effect_is_ten(self):
        ds, truth = dgp_kang_schafer(40_000, (22, 0))
        diff = (truth["y1"] - truth["y0"]).mean()
        # sd(Y1 - Y0) ~ 72, so 4 standard errors of the mean at this n
        assert abs(diff - ATE_TRUTH) < 4.0 * 72.5 / np.sqrt(ds.n)

    def test_misspecified_scenario_transforms_covariates(self):
        correct, _ = dgp_kang_schafer(300, (23, 0), scenario="correct")
        wrong, truth = dgp_kang_schafer(300, (23, 0), scenario="misspecified")
        assert not np.allclose(correct.x, wrong.x)
        np.testing.assert_array_equal(correct.d, wrong.d)
        np.testing.assert_array_equal(truth["x_latent"], correct.x)

    def test_lte_one_sided_noncompliance(self):
        ds, truth = dgp_lte(5_000, (24, 0))
        # never-takers exist but D = 0 whenever Z = 0
        assert np.all(ds.d[ds.z == 0] == 0.0)
        assert np.any(ds.d[ds.z == 1] == 0.0)
        assert np.all(truth["d1"] >= ds.d)

    def test_truth_record_matches_monte_carlo(self):
        # complier outcome contrasts at n = 1e6 reproduce the frozen constants
        _, truth = dgp_lte(1_000_000, (25, 0))
        compliers = truth["d1"] == 1.0
        y1c, y0c = truth["y1"][compliers], truth["y0"][compliers]
        assert abs((y1c - y0c).mean() - LATE_TRUTH) < 1.0
        # quantile effect = difference of the complier arm quantiles
        for tau in (0.25, 0.5, 0.75):
            mc = np.quantile(y1c, tau) - np.quantile(y0c, tau)
            assert abs(mc - LQTE_TRUTH[tau]) < 1.0
        assert abs(compliers.mean() - 0.7322) < 0.002

    def test_simulate_dataset_dispatch(self):
        assert simulate_dataset("kang_schafer", 100, 1).z is None
        assert simulate_dataset("lte_roy", 100, 1).z is not None
        with pytest.raises(ValueError, match="unknown design"):
            simulate_dataset("plasmode", 100, 1)


class TestStudyConfig:
    def test_rejects_unknown_design(self):
        with pytest.raises(DataValidationError, match="unknown design"):
            StudyConfig(design="other")

    def test_rejects_wrong_estimator_for_design(self):
        with pytest.raises(DataValidationError, match="not valid"):
            StudyConfig(design="lte_roy", estimators=("mle", "ips_exp"))

    def test_rejects_missing_baseline(self):
        with pytest.raises(DataValidationError, match="baseline"):
            StudyConfig(estimators=("ips_exp",), relmse_baseline="mle")

    def test_rejects_bootstrap_estimator_outside_list(self):
        with pytest.raises(DataValidationError, match="bootstrap estimator"):
            StudyConfig(
                design="lte_roy",
                estimators=("mle", "lips_proj"),
                bootstrap_estimators=("lips_exp",),
            )

    def test_rejects_bad_tau_and_sizes(self):
        with pytest.raises(DataValidationError, match="tau"):
            StudyConfig(taus=(0.5, 1.2))
        with pytest.raises(DataValidationError, match="at least 50"):
            StudyConfig(n=10)
        with pytest.raises(DataValidationError, match="reps"):
            StudyConfig(reps=0)

    def test_labels_and_truths(self):
        cfg = StudyConfig(design="lte_roy", estimators=("mle",), taus=(0.25, 0.5))
        assert cfg.effect_labels() == ["late", "lqte@0.25", "lqte@0.5"]
        truths = cfg.truths()
        assert truths["late"] == LATE_TRUTH
        assert truths["lqte@0.5"] == LQTE_TRUTH[0.5]


class TestRunStudy:
    def test_reproducible_and_worker_invariant(self):
        cfg = StudyConfig(**SMALL_EXOG)
        a = run_study(cfg)
        b = run_study(cfg)
        for key in a.points:
            np.testing.assert_array_equal(a.points[key], b.points[key])
            np.testing.assert_array_equal(a.ses[key], b.ses[key])
        c = run_study(StudyConfig(**{**SMALL_EXOG, "workers": 2}))
        for key in a.points:
            np.testing.assert_array_equal(a.points[key], c.points[key])

    def test_metric_identities(self):
        result = run_study(StudyConfig(**SMALL_EXOG))
        for row in result.rows:
            pt = result.points[(row.estimator, row.effect)]
            ok = np.isfinite(pt)
            err = pt[ok] - row.truth
            # rmse^2 = bias^2 + variance-about-the-mean, by construction
            assert abs(row.rmse**2 - (row.bias**2 + err.var())) < 1e-10 * max(
                row.rmse**2, 1.0
            )
            assert row.reps == 4
            assert 0.0 <= row.cov <= 1.0
        base = [r for r in result.rows if r.estimator == "mle"]
        assert all(abs(r.relmse - 1.0) < 1e-12 and abs(r.are - 1.0) < 1e-12
                   for r in base)

    def test_lte_study_smoke(self):
        cfg = StudyConfig(
            design="lte_roy", n=150, reps=2, seed=5,
            estimators=("mle", "lips_exp"), taus=(0.5,), starts=1,
            bootstrap_reps=20, bootstrap_estimators=("lips_exp",),
        )
        result = run_study(cfg)
        se = result.ses[("lips_exp", "late")]
        assert np.all(np.isfinite(se)) and np.all(se > 0)
        # estimators outside the bootstrap set carry no standard errors
        assert np.all(np.isnan(result.ses[("mle", "late")]))


class TestWriters:
    def test_csv_round_trip(self, tmp_path):
        result = run_study(StudyConfig(**SMALL_EXOG))
        path = tmp_path / "metrics.csv"
        write_metrics_csv(result, path)
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == len(result.rows)
        assert rows[0]["estimator"] == result.rows[0].estimator
        assert abs(float(rows[0]["bias"]) - result.rows[0].bias) < 1e-12

    def test_json_includes_replications(self, tmp_path):
        result = run_study(StudyConfig(**SMALL_EXOG))
        path = tmp_path / "metrics.json"
        write_metrics_json(result, path)
        payload = json.loads(path.read_text())
        assert payload["config"]["n"] == 120
        assert len(payload["metrics"]) == len(result.rows)
        key = "mle|ate"
        assert len(payload["replications"][key]["points"]) == 4
