"""Monte Carlo checks of the estimators against known population values.

These take minutes; run them with ``manage.py test --tag slow``.
"""

import numpy as np
from django.test import SimpleTestCase, tag

from core.diagnostics import Verdict, placebo_diff_in_disc
from core.diagnostics import test_equal_discontinuities as equal_discontinuities
from core.estimators import EstimatorMethod, run_estimator
from core.inference import cluster_bootstrap, derive_seed
from core.limits import estimate_boundary_limits
from core.models import Kernel, VarianceKind
from core.simulation import (
    JointRule,
    SelectionModel,
    generate_placebo_sample,
    generate_sample,
    monte_carlo_study,
    true_estimands,
)

from .helpers import design, dgp

DOMINANCE = dict(joint_rule=JointRule.DOMINANCE, p_m_post=(0.2, 0.5), p_o_post=(0.3, 0.9))


def tolerance(report, floor=0.01):
    """The requested accuracy, or three Monte Carlo standard errors when those are wider."""
    mc_se = report.empirical_sd / np.sqrt(report.reps - report.n_failed)
    return max(floor, 3.0 * mc_se)


@tag("slow")
class EqualJumpsAcceptanceTests(SimpleTestCase):
    spec = dgp(n=8000)

    def test_ratio_is_unbiased(self):
        report = monte_carlo_study(self.spec, design(), reps=500, seed=101, n_jobs=2)
        self.assertLess(abs(report.mean_bias), tolerance(report))
        self.assertAlmostEqual(report.target, true_estimands(self.spec).ate_o)

    def test_delta_method_calibration(self):
        report = monte_carlo_study(self.spec, design(), reps=500, seed=102, n_jobs=2)
        self.assertTrue(0.75 <= report.empirical_sd**2 / report.mean_se**2 <= 1.25)
        self.assertTrue(0.90 <= report.coverage <= 0.98)

    def test_two_stage_least_squares(self):
        report = monte_carlo_study(self.spec, design(), EstimatorMethod.TWO_STAGE_LS, reps=300, seed=103, n_jobs=2)
        self.assertLess(abs(report.mean_bias), tolerance(report))
        self.assertTrue(0.88 <= report.coverage <= 0.99)


@tag("slow")
class UnequalJumpsAcceptanceTests(SimpleTestCase):
    spec = dgp(n=8000, **DOMINANCE)

    def test_raw_estimate_biased_as_predicted(self):
        truth = true_estimands(self.spec)
        report = monte_carlo_study(self.spec, design(), reps=500, seed=201, n_jobs=2)
        self.assertLess(abs(report.mean_estimate - truth.tau_frd_limit), tolerance(report))
        self.assertGreater(abs(report.bias_vs_ate_o), 0.1)

    def test_dominance_correction_recovers_ate(self):
        report = monte_carlo_study(self.spec, design(), EstimatorMethod.THEOREM3B, reps=500, seed=202, n_jobs=2)
        self.assertEqual(report.target_name, "ate_o")
        self.assertLess(abs(report.mean_bias), tolerance(report))

    def test_additive_correction_recovers_ate(self):
        report = monte_carlo_study(self.spec, design(), EstimatorMethod.THEOREM3A, reps=500, seed=203, n_jobs=2)
        self.assertLess(abs(report.mean_bias), tolerance(report))


@tag("slow")
class IndependentTakeUpAcceptanceTests(SimpleTestCase):
    # Additive means with dO = dM = 0.5 and dT = 0.4; only the additive correction applies.
    spec = dgp(n=8000, joint_rule=JointRule.INDEPENDENT, p_m_post=(0.1, 0.6), p_o_post=(0.2, 0.7))

    def test_additive_correction_recovers_ate(self):
        report = monte_carlo_study(self.spec, design(), EstimatorMethod.THEOREM3A, reps=500, seed=211, n_jobs=2)
        self.assertEqual(report.target_name, "ate_o")
        self.assertLess(abs(report.mean_bias), tolerance(report))

    def test_dominance_correction_misses(self):
        report = monte_carlo_study(self.spec, design(), EstimatorMethod.THEOREM3B, reps=300, seed=212, n_jobs=2)
        self.assertGreater(abs(report.mean_bias), 0.05)


@tag("slow")
class SelectionAcceptanceTests(SimpleTestCase):
    def test_complier_effect_identified(self):
        selection = SelectionModel(shares=(0.2, 0.5, 0.3), o_shift=(0.0, 0.15, -0.1))
        spec = dgp(n=8000, selection=selection)
        truth = true_estimands(spec)
        report = monte_carlo_study(spec, design(), reps=300, seed=301, n_jobs=2)
        self.assertAlmostEqual(report.target, truth.late_o)
        self.assertLess(abs(report.mean_bias), tolerance(report))


@tag("slow")
class ClusteredErrorAcceptanceTests(SimpleTestCase):
    def test_cluster_variance_covers_better_than_robust(self):
        spec = dgp(n=4000, cluster_corr=0.5)
        clustered = monte_carlo_study(spec, design(), EstimatorMethod.TWO_STAGE_LS, reps=300, seed=401, n_jobs=2)
        robust = monte_carlo_study(
            spec, design(vce=VarianceKind.ROBUST), EstimatorMethod.TWO_STAGE_LS, reps=300, seed=401, n_jobs=2
        )
        self.assertGreater(clustered.coverage, robust.coverage)
        self.assertGreaterEqual(clustered.coverage, 0.85)


@tag("slow")
class BootstrapCoverageAcceptanceTests(SimpleTestCase):
    def test_percentile_interval_coverage(self):
        spec = dgp(n=4000)
        truth = true_estimands(spec).ate_o

        def ratio(sample):
            return run_estimator(sample, design()).tau

        covered = []
        for r in range(500):
            data = generate_sample(spec, derive_seed(601, r))
            boot = cluster_bootstrap(data, design(), ratio, reps=200, seed=derive_seed(602, r), n_jobs=2)
            covered.append(boot.ci_percentile_95[0] <= truth <= boot.ci_percentile_95[1])
        self.assertTrue(0.90 <= np.mean(covered) <= 0.98)


@tag("slow")
class CrossCheckAcceptanceTests(SimpleTestCase):
    def test_two_stage_least_squares_agrees_with_uniform_ratio(self):
        spec = dgp(n=4000)
        uniform = design(kernel=Kernel.UNIFORM)
        differences = []
        for r in range(200):
            data = generate_sample(spec, derive_seed(501, r))
            ratio = run_estimator(data, uniform).tau
            two_stage = run_estimator(data, design(), EstimatorMethod.TWO_STAGE_LS).tau
            differences.append(two_stage - ratio)
        self.assertLess(abs(np.mean(differences)), 0.01)

    def test_equal_discontinuity_test_size(self):
        spec = dgp(n=4000, joint_rule=JointRule.INDEPENDENT, p_o_post=(0.2, 0.7))
        rejections = 0
        for r in range(400):
            data = generate_sample(spec, derive_seed(502, r))
            report = equal_discontinuities(estimate_boundary_limits(data, design()), alpha=0.05)
            rejections += report.verdict == Verdict.VIOLATED
        self.assertTrue(0.02 <= rejections / 400 <= 0.09)

    def test_placebo_null_and_power(self):
        spec = dgp(n=8000)
        null, shifted = [], []
        for r in range(200):
            data, pseudo_post = generate_placebo_sample(spec, derive_seed(503, r))
            null.append(placebo_diff_in_disc(data, design(), pseudo_post).details["estimate"]["tau"])
            data, pseudo_post = generate_placebo_sample(spec, derive_seed(504, r), m_effect_shift=0.3)
            shifted.append(placebo_diff_in_disc(data, design(), pseudo_post).verdict == Verdict.VIOLATED)
        mc_se = np.std(null, ddof=1) / np.sqrt(len(null))
        self.assertLess(abs(np.mean(null)), max(0.01, 3.0 * mc_se))
        self.assertGreater(np.mean(shifted), 0.8)
