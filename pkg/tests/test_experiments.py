import numpy as np
import pytest

from ebarx.estimators import Prior, example51_curves
from ebarx.experiments import (ScenarioSpec, aggregate_header, aggregate_reports, format_table,
                               mse_curves, report_header, run_scenario, write_aggregate_csv,
                               write_curves_csv, write_reports_csv)
from ebarx.model import ArxSpec, ParamWalkSpec

from conftest import AR2

THETA0 = np.array([1.5, -0.7])


def spec(pi=0.01, lam=0.0, replicates=20, seed=5, **kw):
    model = AR2 if lam == 0 else ParamWalkSpec(lam=lam)
    return ScenarioSpec(f"pi{pi}_lam{lam}", model, Prior.isotropic(2, pi),
                        replicates=replicates, base_seed=seed, **kw)


@pytest.fixture(scope="module")
def small_result():
    return run_scenario(spec(0.01, replicates=12))


class TestScenarioSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            spec(replicates=0)
        with pytest.raises(ValueError):
            spec(sample_sizes=(100, 50))
        with pytest.raises(ValueError):
            spec(sample_sizes=())
        with pytest.raises(ValueError):
            spec(sigma2_source="other")
        with pytest.raises(ValueError):
            ScenarioSpec("x", ArxSpec(1, 1, (0.5, 1.0)), Prior.isotropic(2, 0.1))
        with pytest.raises(ValueError):
            ScenarioSpec("x", AR2, Prior.isotropic(3, 0.1))

    def test_reference_parameter(self):
        np.testing.assert_array_equal(spec().theta0, THETA0)
        np.testing.assert_array_equal(spec(lam=0.01).theta0, THETA0)
        assert spec(lam=0.02).lam == 0.02


class TestRunScenario:
    def test_report_fields(self, small_result):
        reps = small_result.reports
        assert len(reps) == 12 * 3 and not small_result.failures
        for r in reps:
            assert r.marg_mse >= 0 and r.eb_mse >= 0
            assert r.prior_init.shape == r.prior_recovered.shape == (2, 2)
            assert r.marg_estimate.shape == r.eb_estimate.shape == (2,)
        assert [r.N for r in reps[:3]] == [50, 100, 200]

    def test_single_replicate_magnitudes(self):
        res = run_scenario(spec(0.01, replicates=1, seed=0))
        first = res.by_n(50)[0]
        # order of magnitude of the published single run (0.03674 vs 0.90160)
        assert 0.003 < first.marg_mse < 0.4
        assert 0.09 < first.eb_mse < 9.0
        assert first.marg_mse < first.eb_mse

    def test_large_prior_favours_eb(self):
        res = run_scenario(spec(0.08, replicates=100, seed=2))
        eb = res.column("eb_mse", 200)
        marg = res.column("marg_mse", 200)
        assert np.mean(eb < marg) > 0.5

    def test_deterministic(self):
        a = run_scenario(spec(0.08, lam=0.01, replicates=5))
        b = run_scenario(spec(0.08, lam=0.01, replicates=5))
        for ra, rb in zip(a.reports, b.reports):
            np.testing.assert_array_equal(ra.eb_estimate, rb.eb_estimate)
            np.testing.assert_array_equal(ra.prior_recovered, rb.prior_recovered)
            assert ra.marg_mse == rb.marg_mse and ra.eb_mse == rb.eb_mse

    def test_parallel_matches_serial(self):
        a = run_scenario(spec(0.01, replicates=6))
        b = run_scenario(spec(0.01, replicates=6), workers=2)
        assert [r.replicate for r in b.reports] == [r.replicate for r in a.reports]
        for ra, rb in zip(a.reports, b.reports):
            np.testing.assert_array_equal(ra.eb_estimate, rb.eb_estimate)
            assert ra.marg_mse == rb.marg_mse

    def test_marginal_estimate_shared_across_priors(self):
        a = run_scenario(spec(0.01, replicates=3))
        b = run_scenario(spec(0.08, replicates=3))
        for ra, rb in zip(a.reports, b.reports):
            np.testing.assert_array_equal(ra.marg_estimate, rb.marg_estimate)

    def test_forward_sigma2_source(self):
        res = run_scenario(spec(0.01, replicates=3, sigma2_source="forward"))
        assert all(r.sigma2_hat > 0 for r in res.reports)

    def test_prefixes_of_one_trajectory(self):
        # the N=50 marginal estimate only sees the first 50 samples
        short = run_scenario(spec(0.01, replicates=2, sample_sizes=(50,)))
        full = run_scenario(spec(0.01, replicates=2))
        np.testing.assert_array_equal(short.reports[0].marg_estimate,
                                      full.by_n(50)[0].marg_estimate)

    @pytest.mark.xfail(strict=True, reason="noiseless data break the backward noise-variance "
                       "estimate, so the reported MSEs do not vanish")
    def test_noiseless_limit(self):
        s = ScenarioSpec("noiseless", AR2, Prior.isotropic(2, 0.01), replicates=1, burn_in=0,
                         sigma2=0.0, presample=(1e8, -5e7))
        res = run_scenario(s)
        for r in res.reports:
            np.testing.assert_allclose(r.marg_estimate, THETA0, atol=1e-12)
            np.testing.assert_allclose(r.eb_estimate, THETA0, atol=1e-12)
            assert r.marg_mse < 1e-10 and r.eb_mse < 1e-10

    def test_noiseless_estimates(self):
        s = ScenarioSpec("noiseless", AR2, Prior.isotropic(2, 0.01), replicates=1, burn_in=0,
                         sigma2=0.0, presample=(1e8, -5e7))
        for r in run_scenario(s).reports:
            np.testing.assert_allclose(r.marg_estimate, THETA0, atol=1e-12)
            np.testing.assert_allclose(r.eb_estimate, THETA0, atol=1e-12)


class TestAggregate:
    def test_permutation_invariance(self, small_result):
        reps = small_result.by_n(100)
        a = aggregate_reports(reps, THETA0)
        b = aggregate_reports(reps[::-1], THETA0)
        for k in a:
            np.testing.assert_array_equal(a[k], b[k])

    def test_statistics(self, small_result):
        reps = small_result.by_n(50)
        agg = aggregate_reports(reps, THETA0)
        mse = np.array([r.eb_mse for r in reps])
        assert agg["eb_mse_median"] == np.median(mse)
        q1, q3 = np.percentile(mse, [25, 75])
        assert agg["eb_mse_iqr"] == pytest.approx(q3 - q1)
        mean_err = np.mean([r.eb_estimate for r in reps], axis=0) - THETA0
        var = np.mean([r.eb_var_term for r in reps])
        assert agg["eb_mse_avg"] == pytest.approx(mean_err @ mean_err + var)
        assert agg["replicates"] == 12


class TestCurves:
    def test_zero_bias_favours_eb(self):
        gram = np.array([[50.0, 10.0], [10.0, 30.0]])
        t = mse_curves(THETA0, gram, THETA0, 1.0, np.logspace(-5, 3, 50))
        assert np.all(t.rows[:, 4] <= t.rows[:, 5])
        assert t.crossings == []

    def test_large_bias_has_marginal_region(self):
        gram = np.array([[50.0, 10.0], [10.0, 30.0]])
        assert THETA0 @ THETA0 > np.trace(np.linalg.inv(gram))
        t = mse_curves(THETA0, gram, np.zeros(2), 1.0, np.logspace(-5, 3, 50))
        assert np.any(t.rows[:, 5] < t.rows[:, 4])
        assert len(t.crossings) >= 1
        a, b = t.crossings[0]
        assert a < b

    def test_scalar_matches_example51(self):
        pis = np.logspace(-4, 2, 40)
        t = mse_curves([0.9], [[100.0]], [0.0], 1.0, pis)
        ref = example51_curves(0.9, 100.0, pis)
        np.testing.assert_allclose(t.rows[:, 4], ref[:, 1], rtol=1e-13)
        np.testing.assert_allclose(t.rows[:, 5], ref[:, 2], rtol=1e-13)
        np.testing.assert_allclose(t.rows[:, 1] + t.rows[:, 2], t.rows[:, 4], rtol=1e-14)

    def test_requires_positive_definite_gram(self):
        with pytest.raises(np.linalg.LinAlgError):
            mse_curves([0.9, 0.1], np.ones((2, 2)), [0, 0], 1.0, [0.1])


class TestSerialization:
    def test_report_header(self):
        assert ",".join(report_header(2)) == (
            "scenario,replicate,N,p0_init_11,p0_init_12,p0_init_22,p0_hat_11,p0_hat_12,"
            "p0_hat_22,marg_a1,marg_a2,marg_mse,eb_a1,eb_a2,eb_mse")
        assert report_header(1) == ["scenario", "replicate", "N", "p0_init_11", "p0_hat_11",
                                    "marg_a1", "marg_mse", "eb_a1", "eb_mse"]

    def test_reports_csv(self, small_result, tmp_path):
        path = tmp_path / "r.csv"
        write_reports_csv(small_result.reports, path)
        lines = path.read_text().splitlines()
        assert len(lines) == 1 + len(small_result.reports)
        row = lines[1].split(",")
        r = small_result.reports[0]
        assert float(row[11]) == r.marg_mse and float(row[14]) == r.eb_mse
        assert float(row[9]) == r.marg_estimate[0]

    def test_aggregate_csv(self, small_result, tmp_path):
        path = tmp_path / "a.csv"
        aggs = small_result.aggregate()
        write_aggregate_csv(aggs, path)
        lines = path.read_text().splitlines()
        header = lines[0].split(",")
        assert header == aggregate_header(2)
        assert "marg_mse_median" in header and "eb_mse_iqr" in header
        assert len(lines) == 4
        assert all(len(l.split(",")) == len(header) for l in lines[1:])

    def test_curves_csv(self, tmp_path):
        path = tmp_path / "c.csv"
        write_curves_csv(mse_curves([0.9], [[100.0]], [0.0], 1.0, [0.01]), path)
        lines = path.read_text().splitlines()
        assert lines[0] == "pi,bias2,var_eb,var_m,mse_eb,mse_m"
        assert float(lines[1].split(",")[4]) == pytest.approx(0.2075)

    def test_table_format(self, small_result):
        text = format_table(small_result.aggregate())
        lines = text.splitlines()
        assert lines[0].startswith("Initial P0")
        assert len(lines) == 2 + 3
        assert "0.01000" in lines[2]
