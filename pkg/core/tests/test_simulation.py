import numpy as np
from django.test import SimpleTestCase
from numpy.polynomial import polynomial as P

from core.diagnostics import check_dominance
from core.estimators import EstimatorMethod, fuzzy_diff_in_disc, theorem3a_correct, theorem3b_correct
from core.exceptions import AllReplicatesFailed, InvalidParameter, InvalidSpec
from core.io import read_config
from core.models import Cohort
from core.simulation import (
    JointRule,
    SelectionModel,
    StepProbability,
    dgp_from_config,
    dgp_to_config,
    generate_placebo_sample,
    generate_sample,
    implied_decomposition,
    monte_carlo_study,
    population_limits,
    true_estimands,
)

from .helpers import FIXTURES, design, dgp

UNEQUAL = dict(joint_rule=JointRule.DOMINANCE, p_m_post=(0.2, 0.5), p_o_post=(0.3, 0.9))
# ate_o equals gap_o, so the two treatments act additively; dO = dM = 0.5 while dT = 0.4.
INDEPENDENT_ADDITIVE = dict(joint_rule=JointRule.INDEPENDENT, p_m_post=(0.1, 0.6), p_o_post=(0.2, 0.7))


class TrueEstimandTests(SimpleTestCase):
    def test_equal_jumps(self):
        truth = true_estimands(dgp())
        self.assertAlmostEqual(truth.ate_o, 0.25)
        self.assertAlmostEqual(truth.tau_frd_limit, 0.25)
        self.assertEqual(truth.jumps["T_post"], truth.jumps["M_pre"])

    def test_policy_jump_twice_joint_jump(self):
        spec = dgp(p_m_post=(0.2, 0.5), p_o_post=(0.3, 0.9), joint_rule=JointRule.DOMINANCE,
                   gap_o=0.2, ate_o=0.2)
        truth = true_estimands(spec)
        self.assertAlmostEqual(truth.jumps["O_post"] / truth.jumps["T_post"], 2.0)
        self.assertAlmostEqual(truth.tau_frd_limit, truth.ate_o + 0.2)

    def test_fixture_values(self):
        equal = true_estimands(dgp_from_config(read_config(FIXTURES / "equal_jumps.conf")))
        self.assertAlmostEqual(equal.ate_o, 0.25)
        self.assertAlmostEqual(equal.tau_frd_limit, 0.25)
        unequal = true_estimands(dgp_from_config(read_config(FIXTURES / "unequal_jumps.conf")))
        self.assertAlmostEqual(unequal.ate_o, 0.2)
        self.assertAlmostEqual(unequal.tau_frd_limit, 0.4)
        self.assertAlmostEqual(unequal.jumps["O_post"], 0.6)
        self.assertAlmostEqual(unequal.jumps["M_post"], 0.3)
        self.assertAlmostEqual(unequal.jumps["T_post"], 0.3)

    def test_targets_by_method(self):
        truth = true_estimands(dgp(**UNEQUAL))
        self.assertEqual(truth.target(EstimatorMethod.THEOREM3B), ("ate_o", truth.ate_o))
        self.assertEqual(truth.target(EstimatorMethod.TWO_STAGE_LS), ("tau_frd_limit", truth.tau_frd_limit))

    def test_no_first_stage(self):
        with self.assertRaises(InvalidSpec):
            true_estimands(dgp(p_m_pre=(0.4, 0.4)))


class CrossModuleIdentityTests(SimpleTestCase):
    def specs(self):
        yield dgp()
        yield dgp(**UNEQUAL)
        yield dgp(**UNEQUAL, gap_m_pre=0.05, gap_o=0.4)
        yield dgp(joint_rule=JointRule.INDEPENDENT, p_m_post=(0.1, 0.6), p_o_post=(0.2, 0.7), gap_o=-0.1)

    def test_population_estimate_matches_truth(self):
        for spec in self.specs():
            truth = true_estimands(spec)
            estimate = fuzzy_diff_in_disc(population_limits(spec))
            self.assertAlmostEqual(estimate.tau, truth.tau_frd_limit, places=12)

    def test_decomposition_matches_truth(self):
        for spec in self.specs():
            truth = true_estimands(spec)
            implied = implied_decomposition(spec)
            self.assertAlmostEqual(implied.tau_implied + truth.cohort_drift, truth.tau_frd_limit, places=12)

    def test_corrections_recover_ate_under_additive_means(self):
        spec = dgp(**UNEQUAL)
        truth = true_estimands(spec)
        limits = population_limits(spec)
        self.assertAlmostEqual(theorem3a_correct(truth.tau_frd_limit, limits, truth.ate_m), truth.ate_o, places=12)
        self.assertAlmostEqual(theorem3b_correct(truth.tau_frd_limit, limits), truth.ate_o, places=12)

    def test_additive_correction_with_independent_take_up(self):
        spec = dgp(**INDEPENDENT_ADDITIVE)
        truth = true_estimands(spec)
        limits = population_limits(spec)
        self.assertNotAlmostEqual(truth.jumps["O_post"], truth.jumps["T_post"])
        self.assertNotAlmostEqual(truth.jumps["M_post"], truth.jumps["T_post"])
        self.assertAlmostEqual(theorem3a_correct(truth.tau_frd_limit, limits, truth.ate_m), truth.ate_o, places=12)
        self.assertNotAlmostEqual(theorem3b_correct(truth.tau_frd_limit, limits), truth.ate_o, places=3)

    def test_selection_identifies_complier_effect(self):
        selection = SelectionModel(shares=(0.2, 0.5, 0.3), o_shift=(0.0, 0.15, -0.1), m_shift=(0.05, 0.0, 0.0))
        spec = dgp(selection=selection, p_m_pre=(0.2, 0.7))
        truth = true_estimands(spec)
        self.assertAlmostEqual(truth.late_o, 0.25 + 0.15)
        self.assertNotAlmostEqual(truth.late_o, truth.ate_o)
        self.assertAlmostEqual(truth.tau_frd_limit, truth.late_o + truth.cohort_drift, places=12)
        self.assertAlmostEqual(implied_decomposition(spec).tau_implied, truth.late_o, places=12)


class GenerateSampleTests(SimpleTestCase):
    def test_deterministic(self):
        a = generate_sample(dgp(n=300), seed=4)
        b = generate_sample(dgp(n=300), seed=4)
        self.assertEqual(a.observations, b.observations)
        self.assertNotEqual(a.observations, generate_sample(dgp(n=300), seed=5).observations)

    def test_noise_free_rows_equal_means(self):
        spec = dgp(n=300, noise_sd=0.0, **UNEQUAL)
        data = generate_sample(spec, seed=1)
        for i in range(len(data)):
            cohort = Cohort.POST if data.post[i] else Cohort.PRE
            key = f"{data.o[i]}{data.m[i]}"
            expected = P.polyval(data.x[i] - 65.0, spec.potential_means[cohort][key])
            self.assertEqual(data.y[i], expected)

    def test_sharp_assignment(self):
        data = generate_sample(dgp(n=400, p_m_pre=(0.0, 1.0), p_m_post=(0.0, 1.0)), seed=2)
        above = data.x >= 65.0
        np.testing.assert_array_equal(data.m, above)
        np.testing.assert_array_equal(data.o, above & data.post)
        np.testing.assert_array_equal(data.t, above & data.post)

    def test_dominance_sample_scan(self):
        self.assertEqual(check_dominance(generate_sample(dgp(**UNEQUAL), seed=3)).statistic, 0.0)

    def test_treatment_rates_near_cutoff(self):
        data = generate_sample(dgp(n=20000, **UNEQUAL), seed=6)
        post_near = data.post & (np.abs(data.x - 65.0) <= 0.5)
        for rows, p in ((post_near & (data.x >= 65.0), 0.5), (post_near & (data.x < 65.0), 0.2)):
            se = np.sqrt(p * (1 - p) / rows.sum())
            self.assertLess(abs(data.m[rows].mean() - p), 3 * se)

    def test_clusters_are_bins(self):
        data = generate_sample(dgp(n=200), seed=9)
        expected = np.floor((data.x - 65.0) / 0.25).astype(int).astype(str)
        np.testing.assert_array_equal(data.cluster, expected)

    def test_placebo_sample_has_no_policy(self):
        data, pseudo_post = generate_placebo_sample(dgp(n=200), seed=1)
        self.assertFalse(data.post.any())
        self.assertFalse(data.o.any())
        self.assertEqual(int(pseudo_post.sum()), 200)


class SpecValidationTests(SimpleTestCase):
    def test_window_must_contain_cutoff(self):
        with self.assertRaises(InvalidSpec):
            dgp().with_changes(window=(65.0, 69.0))

    def test_probability_range(self):
        with self.assertRaises(InvalidSpec):
            dgp().with_changes(p_m={"pre": StepProbability((0.2,), (0.7, 0.1)), "post": StepProbability((0.2,), (0.7,))})

    def test_dominance_needs_larger_policy(self):
        with self.assertRaises(InvalidSpec):
            dgp(joint_rule=JointRule.DOMINANCE, p_m_post=(0.2, 0.5), p_o_post=(0.1, 0.9))

    def test_rule_needs_policy_probability(self):
        with self.assertRaises(InvalidSpec):
            dgp(joint_rule=JointRule.INDEPENDENT)

    def test_selection_shares(self):
        with self.assertRaises(InvalidSpec):
            SelectionModel(shares=(0.5, 0.5, 0.5))
        with self.assertRaises(InvalidSpec):
            SelectionModel(shares=(0.5, 0.0, 0.5))

    def test_unknown_rule(self):
        with self.assertRaises(InvalidSpec):
            dgp(joint_rule="sometimes")


class ConfigTests(SimpleTestCase):
    def test_round_trip(self):
        spec = dgp(heteroskedastic=True, cluster_corr=0.5, **UNEQUAL)
        self.assertEqual(dgp_from_config(dgp_to_config(spec)), spec)

    def test_selection_round_trip(self):
        spec = dgp(selection=SelectionModel(shares=(0.2, 0.5, 0.3), o_shift=(0.0, 0.1, 0.0)))
        rebuilt = dgp_from_config(dgp_to_config(spec))
        self.assertEqual(rebuilt.selection, spec.selection)
        self.assertEqual(true_estimands(rebuilt).as_dict(), true_estimands(spec).as_dict())

    def test_missing_key(self):
        config = dgp_to_config(dgp())
        del config["dgp.mu11.post"]
        with self.assertRaises(InvalidSpec):
            dgp_from_config(config)

    def test_bad_number(self):
        config = dgp_to_config(dgp())
        config["dgp.noise_sd"] = "loud"
        with self.assertRaises(InvalidSpec):
            dgp_from_config(config)


class MonteCarloTests(SimpleTestCase):
    def test_deterministic_across_threads(self):
        spec = dgp(n=400)
        serial = monte_carlo_study(spec, design(), reps=100, seed=5)
        threaded = monte_carlo_study(spec, design(), reps=100, seed=5, n_jobs=2)
        self.assertEqual(serial.as_dict(), threaded.as_dict())
        np.testing.assert_array_equal(serial.estimates, threaded.estimates)

    def test_report_fields(self):
        report = monte_carlo_study(dgp(n=400, **UNEQUAL), design(), EstimatorMethod.THEOREM3B, reps=100, seed=1)
        self.assertEqual(report.target_name, "ate_o")
        self.assertEqual(report.n_failed + len(report.estimates), 100)
        self.assertTrue(0.0 <= report.coverage <= 1.0)
        self.assertGreater(report.empirical_sd, 0.0)
        self.assertAlmostEqual(report.mean_bias, report.mean_estimate - report.target)

    def test_minimum_reps(self):
        with self.assertRaises(InvalidParameter):
            monte_carlo_study(dgp(n=100), design(), reps=10)

    def test_every_replicate_failing_is_an_estimation_error(self):
        with self.assertRaises(AllReplicatesFailed) as ctx:
            monte_carlo_study(dgp(n=100), design(), reps=100, min_first_stage=2.0)
        self.assertEqual(ctx.exception.exit_status, 3)
