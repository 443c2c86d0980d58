"""Checks of the identifying assumptions that the data can speak to."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from django.db import models
from scipy import stats

from .estimators import DEFAULT_MIN_FIRST_STAGE, first_stage_difference, fuzzy_diff_in_disc
from .exceptions import InvalidParameter, PlaceboPrecondition
from .limits import estimate_boundary_limits
from .models import VarianceKind

logger = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-24


class AssumptionName(models.TextChoices):
    EQUAL_DISCONTINUITIES = "equal_discontinuities", "Equal first-stage discontinuities"
    DOMINANCE = "dominance", "Policy of interest dominates the confounder"
    PLACEBO = "placebo", "Placebo difference-in-discontinuities"
    COVARIATE_SMOOTHNESS = "covariate_smoothness", "Covariate smooth at the cutoff"
    CONTINUITY = "continuity", "Potential outcome means continuous at the cutoff"
    LOCAL_INDEPENDENCE = "local_independence", "Treatment independent of potential outcomes near the cutoff"
    MONOTONICITY = "monotonicity", "Crossing the cutoff never switches treatment off"


class Verdict(models.TextChoices):
    CONSISTENT = "consistent", "Consistent with the data"
    VIOLATED = "violated", "Rejected by the data"
    INCONCLUSIVE = "inconclusive", "Not enough information"
    ASSUMED = "assumed", "Untestable; assumed"


class PlaceboSplit(models.TextChoices):
    ADJACENT_PRE_PERIODS = "adjacent_pre_periods", "Two cohorts before the policy"
    UNTREATED_REGION = "untreated_region", "Region never exposed to the policy"


@dataclass(frozen=True)
class AssumptionReport:
    name: AssumptionName
    statistic: float
    p_value: float | None
    details: dict = field(default_factory=dict)
    verdict: Verdict = Verdict.INCONCLUSIVE

    def __post_init__(self):
        if self.p_value is not None and not 0.0 <= self.p_value <= 1.0:
            raise InvalidParameter(f"p-value {self.p_value} outside [0, 1]")

    def as_dict(self):
        return {
            "name": AssumptionName(self.name).value,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "details": self.details,
            "verdict": Verdict(self.verdict).value,
        }


def verdict_for(p_value, alpha, violations=0):
    if violations > 0:
        return Verdict.VIOLATED
    if p_value is None or not np.isfinite(p_value):
        return Verdict.INCONCLUSIVE
    return Verdict.VIOLATED if p_value < alpha else Verdict.CONSISTENT


def test_equal_discontinuities(limits, alpha=0.05, include_t=False, vce=VarianceKind.CLUSTER):
    """Joint Wald test that the first-stage jumps coincide.

    Compares the post-cohort jumps in O and M with the pre-cohort jump in M
    (and the post-cohort jump in T when ``include_t``). The fits behind each
    jump use disjoint rows, so the statistic weights each deviation from the
    precision-weighted mean by its own variance and is chi-square with K-1
    degrees of freedom.
    """
    labels = [("O_post", "o_post"), ("M_post", "m_post"), ("M_pre", "m_pre")]
    if include_t:
        labels.append(("T_post", "t_post"))
    deltas = np.array([limits.pair(label).jump for _, label in labels])
    variances = np.maximum([limits.pair(label).jump_variance(vce) for _, label in labels], VARIANCE_FLOOR)

    precision = 1.0 / variances
    pooled = float(np.sum(precision * deltas) / np.sum(precision))
    statistic = float(np.sum(precision * (deltas - pooled) ** 2))
    p_value = float(stats.chi2.sf(statistic, len(deltas) - 1))

    names = [name for name, _ in labels]
    pairwise = {
        f"{names[i]}-{names[j]}": {
            "difference": float(deltas[i] - deltas[j]),
            "se": float(np.sqrt(variances[i] + variances[j])),
        }
        for i, j in combinations(range(len(names)), 2)
    }
    diff, diff_se = first_stage_difference(limits, vce)
    details = {
        "discontinuities": dict(zip(names, map(float, deltas))),
        "standard_errors": dict(zip(names, map(float, np.sqrt(variances)))),
        "pairwise": pairwise,
        "pooled": pooled,
        "df": len(deltas) - 1,
        "first_stage_difference": {"difference": diff, "se": diff_se},
    }
    return AssumptionReport(
        AssumptionName.EQUAL_DISCONTINUITIES, statistic, min(max(p_value, 0.0), 1.0), details,
        verdict_for(p_value, alpha),
    )


def check_dominance(dataset, tolerance=0.0):
    """Count post-cohort rows treated by the confounder but not by the policy of interest."""
    post = dataset.post
    n_post = int(post.sum())
    violations = int(np.sum(post & (dataset.o < dataset.m)))
    if n_post == 0:
        return AssumptionReport(AssumptionName.DOMINANCE, 0.0, None, {"n_post": 0}, Verdict.INCONCLUSIVE)
    fraction = violations / n_post
    verdict = Verdict.VIOLATED if violations > 0 and fraction > tolerance else Verdict.CONSISTENT
    return AssumptionReport(
        AssumptionName.DOMINANCE,
        float(violations),
        None,
        {"n_post": n_post, "violations": violations, "fraction": fraction, "tolerance": tolerance},
        verdict,
    )


def _ratio_report(name, estimate, alpha, details):
    if estimate.se > 0:
        z = estimate.tau / estimate.se
        p_value = float(2.0 * stats.norm.sf(abs(z)))
    else:
        z = 0.0 if estimate.tau == 0 else float("inf")
        p_value = 1.0 if estimate.tau == 0 else 0.0
    details = {**details, "estimate": estimate.as_dict()}
    return AssumptionReport(name, float(z), p_value, details, verdict_for(p_value, alpha))


def placebo_diff_in_disc(
    dataset,
    design,
    pseudo_post,
    split=PlaceboSplit.ADJACENT_PRE_PERIODS,
    alpha=0.05,
    min_first_stage=DEFAULT_MIN_FIRST_STAGE,
):
    """Difference-in-discontinuities between two groups the policy of interest never reached.

    ``dataset`` must carry no post-policy rows; ``pseudo_post`` marks the
    group that plays the post cohort. Only the confounder applies in both
    groups, so O is set to M on pseudo-post rows and the estimate should be
    close to zero.
    """
    if dataset.post.any():
        raise PlaceboPrecondition(f"{int(dataset.post.sum())} rows are exposed to the policy of interest")
    if dataset.o.any():
        raise PlaceboPrecondition("placebo input must have o = 0 on every row")
    pseudo_post = np.asarray(pseudo_post, dtype=bool)
    if len(pseudo_post) != len(dataset):
        raise InvalidParameter(f"pseudo-post label has {len(pseudo_post)} rows, dataset has {len(dataset)}")
    if pseudo_post.all() or not pseudo_post.any():
        raise PlaceboPrecondition("pseudo-post label must split the data into two non-empty groups")

    relabeled = dataset.with_columns(post=pseudo_post, o=np.where(pseudo_post, dataset.m, 0))
    limits = estimate_boundary_limits(relabeled, design)
    estimate = fuzzy_diff_in_disc(limits, min_first_stage, design.vce)
    return _ratio_report(AssumptionName.PLACEBO, estimate, alpha, {"split": PlaceboSplit(split).value})


def covariate_smoothness(dataset, design, covariate, alpha=0.05, min_first_stage=DEFAULT_MIN_FIRST_STAGE):
    """Run the difference-in-discontinuities with a covariate in place of the outcome."""
    values = dataset.covariate(covariate)
    rows = design.window_mask(dataset.x)
    if not np.isfinite(values[rows]).all():
        raise InvalidParameter(f"covariate '{covariate}' has missing values inside the window")
    limits = estimate_boundary_limits(dataset.with_columns(y=values), design)
    estimate = fuzzy_diff_in_disc(limits, min_first_stage, design.vce)
    name = covariate if isinstance(covariate, str) else dataset.column_names[covariate]
    return _ratio_report(AssumptionName.COVARIATE_SMOOTHNESS, estimate, alpha, {"covariate": name})


def assumed_conditions():
    """Conditions no diagnostic here can check; listed so summaries never omit them."""
    notes = {
        AssumptionName.CONTINUITY: "E[Y(o,m) | x] continuous at the cutoff in both cohorts",
        AssumptionName.LOCAL_INDEPENDENCE: "treatment status independent of potential outcomes near the cutoff",
        AssumptionName.MONOTONICITY: "no unit leaves treatment because it crosses the cutoff",
    }
    return [
        AssumptionReport(name, float("nan"), None, {"note": note}, Verdict.ASSUMED)
        for name, note in notes.items()
    ]


def diagnostics_summary(dataset, design, limits, alpha=0.05, covariates=(), min_first_stage=DEFAULT_MIN_FIRST_STAGE):
    """Every report that applies to an estimation sample."""
    reports = [
        test_equal_discontinuities(limits, alpha, vce=design.vce),
        check_dominance(dataset),
    ]
    for name in covariates:
        reports.append(covariate_smoothness(dataset, design, name, alpha, min_first_stage))
    reports.extend(assumed_conditions())
    for report in reports:
        if report.verdict == Verdict.VIOLATED:
            logger.warning("%s check rejected", AssumptionName(report.name).value)
    return reports
