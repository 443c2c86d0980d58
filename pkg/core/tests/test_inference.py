import numpy as np
from django.test import SimpleTestCase

from core.exceptions import (
    AllReplicatesFailed,
    DegenerateDenominator,
    InvalidParameter,
    TooFewClusters,
    WeakFirstStage,
)
from core.inference import (
    VarianceEstimate,
    VarianceMethod,
    cluster_bootstrap,
    cluster_robust_vcov,
    delta_var_ratio,
    derive_seed,
    diff_disc_var,
    hc1_vcov,
    normal_ci,
    ratio_variance,
)
from core.limits import LocalFitPair

from .helpers import design, fit, pair, sharp_dataset


def noisy(data, seed=0, scale=0.1):
    rng = np.random.default_rng(seed)
    return data.with_columns(y=data.y + rng.normal(scale=scale, size=len(data)))


class DeltaMethodTests(SimpleTestCase):
    def test_substitution(self):
        self.assertAlmostEqual(ratio_variance(0.04, 0.01, 0.5, 0.5), 0.17)

    def test_sharp_denominator(self):
        estimate = delta_var_ratio(pair(0.3, 0.04), pair(1.0), 0.3)
        self.assertAlmostEqual(estimate.variance, 0.04)

    def test_sign_flip_invariance(self):
        num, den = pair(0.2, 0.03), pair(0.4, 0.01)
        flipped = LocalFitPair(fit(-0.2, 0.015), fit(0.0, 0.015))
        self.assertAlmostEqual(delta_var_ratio(num, den, 0.5).variance, delta_var_ratio(flipped, den, -0.5).variance)

    def test_degenerate_denominator(self):
        with self.assertRaises(DegenerateDenominator):
            delta_var_ratio(pair(0.2), pair(0.0), 0.0)

    def test_cohort_variances_add(self):
        total = diff_disc_var(VarianceEstimate(0.17), VarianceEstimate(0.03))
        self.assertAlmostEqual(total.variance, 0.20)
        self.assertEqual(diff_disc_var(VarianceEstimate(0.17), VarianceEstimate(0.0)).variance, 0.17)

    def test_negative_variance_rejected(self):
        with self.assertRaises(InvalidParameter):
            VarianceEstimate(-1e-3)

    def test_normal_interval(self):
        lo, hi = normal_ci(1.0, 0.5)
        self.assertAlmostEqual(hi - 1.0, 1.959963984540054 * 0.5)
        self.assertAlmostEqual(1.0 - lo, hi - 1.0)


class SandwichTests(SimpleTestCase):
    def setUp(self):
        rng = np.random.default_rng(17)
        self.n = 60
        self.regressors = np.column_stack([np.ones(self.n), rng.normal(size=self.n)])
        self.residuals = rng.normal(size=self.n)

    def test_singleton_clusters_match_hc1(self):
        clustered = cluster_robust_vcov(self.regressors, self.residuals, np.arange(self.n))
        np.testing.assert_allclose(clustered, hc1_vcov(self.regressors, self.residuals), rtol=1e-12)

    def test_duplicated_rows_inflate_variance(self):
        regressors = np.repeat(self.regressors, 2, axis=0)
        residuals = np.repeat(self.residuals, 2)
        clusters = np.repeat(np.arange(self.n), 2)
        clustered = cluster_robust_vcov(regressors, residuals, clusters)
        iid = hc1_vcov(regressors, residuals)
        self.assertTrue(np.all(np.diag(clustered) > np.diag(iid)))

    def test_output_is_symmetric_psd(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            clusters = rng.integers(0, 8, size=self.n)
            weights = rng.uniform(0.2, 2.0, size=self.n)
            vcov = cluster_robust_vcov(self.regressors, rng.normal(size=self.n), clusters, weights)
            np.testing.assert_array_equal(vcov, vcov.T)
            self.assertGreaterEqual(np.linalg.eigvalsh(vcov).min(), -1e-10)

    def test_one_cluster(self):
        with self.assertRaises(TooFewClusters):
            cluster_robust_vcov(self.regressors, self.residuals, np.zeros(self.n))


class ClusterBootstrapTests(SimpleTestCase):
    def setUp(self):
        self.data = noisy(sharp_dataset())

    @staticmethod
    def mean_y(sample):
        return float(sample.y.mean())

    def test_constant_estimator(self):
        result = cluster_bootstrap(self.data, design(), lambda sample: 1.5, reps=100, seed=3)
        self.assertEqual(result.se, 0.0)
        self.assertEqual(result.ci_percentile_95, (1.5, 1.5))
        self.assertEqual(result.variance.method, VarianceMethod.CLUSTER_BOOTSTRAP)
        self.assertEqual(result.variance.df_or_reps, 100)
        self.assertEqual(result.as_dict()["variance_method"], "cluster_bootstrap")

    def test_same_seed_same_result(self):
        a = cluster_bootstrap(self.data, design(), self.mean_y, reps=120, seed=11)
        b = cluster_bootstrap(self.data, design(), self.mean_y, reps=120, seed=11)
        np.testing.assert_array_equal(a.replicates, b.replicates)
        self.assertEqual(a.as_dict(), b.as_dict())

    def test_thread_count_does_not_change_result(self):
        serial = cluster_bootstrap(self.data, design(), self.mean_y, reps=100, seed=2, n_jobs=1)
        threaded = cluster_bootstrap(self.data, design(), self.mean_y, reps=100, seed=2, n_jobs=3)
        np.testing.assert_array_equal(serial.replicates, threaded.replicates)

    def test_interval_is_order_statistics(self):
        result = cluster_bootstrap(self.data, design(), self.mean_y, reps=200, seed=9)
        ordered = np.sort(result.replicates)
        self.assertEqual(result.ci_percentile_95[0], ordered[int(np.ceil(0.025 * 200)) - 1])
        self.assertEqual(result.ci_percentile_95[1], ordered[int(np.ceil(0.975 * 200)) - 1])
        self.assertEqual(len(result.replicates) + result.n_failed, 200)

    def test_resamples_within_cohort(self):
        pre_rows = int((~self.data.post).sum())

        def pre_count(sample):
            return float((~sample.post).sum())

        result = cluster_bootstrap(self.data, design(), pre_count, reps=100, seed=4)
        # cluster sizes vary, so counts move but never borrow rows across cohorts
        self.assertTrue(np.all(result.replicates > 0))
        self.assertAlmostEqual(result.replicates.mean(), pre_rows, delta=3.0)

    def test_minimum_reps(self):
        with self.assertRaises(InvalidParameter):
            cluster_bootstrap(self.data, design(), self.mean_y, reps=99, seed=1)

    def test_failed_replicates_counted(self):
        baseline = self.mean_y(self.data)

        def fragile(sample):
            if sample.y.mean() > baseline:
                raise WeakFirstStage(0.01, threshold=0.05)
            return baseline

        result = cluster_bootstrap(self.data, design(), fragile, reps=100, seed=8)
        self.assertGreater(result.n_failed, 10)
        self.assertEqual(len(result.replicates) + result.n_failed, 100)
        self.assertTrue(result.warnings)

    def test_all_replicates_failed(self):
        data = self.data

        def only_original(sample):
            if sample is data:
                return 0.0
            raise WeakFirstStage(0.0)

        with self.assertRaises(AllReplicatesFailed):
            cluster_bootstrap(data, design(), only_original, reps=100, seed=1)

    def test_needs_two_clusters_per_cell(self):
        data = self.data.with_columns(cluster=np.zeros(len(self.data), dtype=int))
        with self.assertRaises(TooFewClusters):
            cluster_bootstrap(data, design(), self.mean_y, reps=100, seed=1)

    def test_derived_seeds(self):
        self.assertEqual(derive_seed(5, 3), derive_seed(5, 3))
        self.assertNotEqual(derive_seed(5, 3), derive_seed(5, 4))
        self.assertNotEqual(derive_seed(5, 3), derive_seed(6, 3))
