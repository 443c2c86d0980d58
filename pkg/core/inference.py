"""Standard errors, confidence intervals and cluster resampling."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from django.db import models
from joblib import Parallel, delayed
from scipy import stats

from .exceptions import (
    AllReplicatesFailed,
    DegenerateDenominator,
    FDDError,
    InvalidParameter,
    SingularBread,
    TooFewClusters,
)
from .models import Cohort, VarianceKind

logger = logging.getLogger(__name__)


class VarianceMethod(models.TextChoices):
    DELTA_INDEPENDENT = "delta_independent", "Delta method, independent sides"
    HC1 = "hc1", "Heteroskedasticity-robust sandwich"
    CLUSTER_ROBUST = "cluster_robust", "Cluster-robust sandwich"
    CLUSTER_BOOTSTRAP = "cluster_bootstrap", "Within-cohort cluster bootstrap"


@dataclass(frozen=True)
class VarianceEstimate:
    variance: float
    method: VarianceMethod = VarianceMethod.DELTA_INDEPENDENT
    df_or_reps: int = 0

    def __post_init__(self):
        if not self.variance >= 0:
            raise InvalidParameter(f"variance must be nonnegative, got {self.variance}")

    @property
    def se(self):
        return float(np.sqrt(self.variance))


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    point: float
    se: float
    ci_percentile_95: tuple[float, float]
    replicates: np.ndarray
    seed: int
    n_failed: int
    reps: int
    warnings: tuple[str, ...] = field(default_factory=tuple)

    @property
    def variance(self):
        return VarianceEstimate(self.se**2, VarianceMethod.CLUSTER_BOOTSTRAP, int(len(self.replicates)))

    def as_dict(self):
        return {
            "point": self.point,
            "se": self.se,
            "variance_method": self.variance.method.value,
            "ci_percentile_95": list(self.ci_percentile_95),
            "seed": self.seed,
            "reps": self.reps,
            "n_failed": self.n_failed,
            "n_succeeded": int(len(self.replicates)),
        }


def derive_seed(seed, index):
    """Seed for replicate ``index``; a pure function of ``(seed, index)``."""
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


def normal_ci(estimate, se, level=0.95):
    z = stats.norm.ppf(0.5 + level / 2.0)
    return (estimate - z * se, estimate + z * se)


def _scores(regressors, residuals, weights):
    regressors = np.asarray(regressors, dtype=float)
    residuals = np.asarray(residuals, dtype=float)
    if weights is None:
        weights = np.ones(len(residuals))
    weights = np.asarray(weights, dtype=float)
    return regressors, weights, regressors * (weights * residuals)[:, None]


def _bread(regressors, weights):
    try:
        return np.linalg.inv(regressors.T @ (regressors * weights[:, None]))
    except np.linalg.LinAlgError as exc:
        raise SingularBread("X'WX is singular") from exc


def _symmetrize(matrix):
    return (matrix + matrix.T) / 2.0


def hc1_vcov(regressors, residuals, weights=None):
    """Heteroskedasticity-robust sandwich with the n/(n-k) scaling."""
    regressors, weights, scores = _scores(regressors, residuals, weights)
    n, k = regressors.shape
    bread = _bread(regressors, weights)
    meat = scores.T @ scores
    scale = n / (n - k) if n > k else 1.0
    return _symmetrize(scale * bread @ meat @ bread)


def cluster_robust_vcov(regressors, residuals, clusters, weights=None):
    """CR1 sandwich: scores summed within clusters, scaled by G/(G-1)*(N-1)/(N-K).

    ``regressors`` is the matrix whose weighted cross-product forms the bread;
    for two-stage least squares pass the fitted first-stage regressors.
    """
    regressors, weights, scores = _scores(regressors, residuals, weights)
    n, k = regressors.shape
    codes, uniques = pd.factorize(np.asarray(clusters))
    g = len(uniques)
    if g < 2:
        raise TooFewClusters(f"cluster-robust variance needs at least 2 clusters, got {g}")
    bread = _bread(regressors, weights)
    sums = np.zeros((g, k))
    np.add.at(sums, codes, scores)
    meat = sums.T @ sums
    scale = g / (g - 1.0)
    if n > k:
        scale *= (n - 1.0) / (n - k)
    return _symmetrize(scale * bread @ meat @ bread)


def ratio_variance(var_numerator, var_denominator, denominator, ratio):
    """Delta-method variance of a ratio of two independent discontinuities."""
    if denominator == 0 or not np.isfinite(denominator):
        raise DegenerateDenominator(f"ratio denominator is {denominator}")
    return (var_numerator + ratio**2 * var_denominator) / denominator**2


def delta_var_ratio(num, den, ratio, vce=VarianceKind.CLUSTER):
    """Variance of ``num.jump / den.jump`` from the one-sided intercept variances.

    Above and below fits use disjoint rows, so the jump variance is the sum of
    the two intercept variances and no covariance term appears.
    """
    variance = ratio_variance(num.jump_variance(vce), den.jump_variance(vce), den.jump, ratio)
    n = int(num.above.n_effective + num.below.n_effective)
    return VarianceEstimate(float(variance), VarianceMethod.DELTA_INDEPENDENT, n)


def diff_disc_var(post_ratio_var, pre_ratio_var):
    """Cohorts are independent samples: the variances add."""
    return VarianceEstimate(
        post_ratio_var.variance + pre_ratio_var.variance,
        post_ratio_var.method,
        post_ratio_var.df_or_reps + pre_ratio_var.df_or_reps,
    )


def _cohort_cluster_groups(dataset):
    groups = {}
    for cohort in (Cohort.PRE, Cohort.POST):
        rows = np.flatnonzero(dataset.cohort_mask(cohort))
        codes, uniques = pd.factorize(dataset.cluster[rows])
        order = np.argsort(codes, kind="stable")
        bounds = np.searchsorted(codes[order], np.arange(len(uniques) + 1))
        groups[cohort] = [rows[order[bounds[i]:bounds[i + 1]]] for i in range(len(uniques))]
    return groups


def _check_clusters(dataset, design):
    in_window = design.window_mask(dataset.x)
    above = design.above_mask(dataset.x)
    for cohort in (Cohort.PRE, Cohort.POST):
        for label, side in (("above", above), ("below", ~above)):
            rows = in_window & dataset.cohort_mask(cohort) & side
            g = len(np.unique(dataset.cluster[rows]))
            if g < 2:
                raise TooFewClusters(f"{cohort.value}/{label} has {g} cluster(s); need at least 2")


def cluster_bootstrap(dataset, design, estimator, reps, seed, n_jobs=1, min_reps=100, failure_warn=0.10):
    """Resample clusters with replacement separately within each cohort.

    ``estimator`` maps a ``Dataset`` to a float. Replicates raising an
    ``FDDError`` are dropped and counted in ``n_failed``.
    """
    if reps < min_reps:
        raise InvalidParameter(f"bootstrap needs at least {min_reps} replicates, got {reps}")
    _check_clusters(dataset, design)
    groups = _cohort_cluster_groups(dataset)
    point = float(estimator(dataset))

    def replicate(index):
        rng = np.random.default_rng(derive_seed(seed, index))
        pieces = []
        for cohort in (Cohort.PRE, Cohort.POST):
            cohort_groups = groups[cohort]
            draws = rng.integers(0, len(cohort_groups), size=len(cohort_groups))
            pieces.extend(cohort_groups[d] for d in draws)
        sample = dataset.take(np.concatenate(pieces))
        try:
            return float(estimator(sample))
        except FDDError as exc:
            logger.debug("bootstrap replicate %d failed: %s", index, exc)
            return None

    outcomes = Parallel(n_jobs=n_jobs, backend="threading")(delayed(replicate)(r) for r in range(reps))
    values = np.array([v for v in outcomes if v is not None], dtype=float)
    n_failed = reps - len(values)
    if len(values) == 0:
        raise AllReplicatesFailed(f"all {reps} bootstrap replicates failed")

    warnings = []
    if n_failed > failure_warn * reps:
        message = f"{n_failed} of {reps} bootstrap replicates failed"
        logger.warning(message)
        warnings.append(message)

    lo, hi = np.quantile(values, [0.025, 0.975], method="inverted_cdf")
    se = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
    values.setflags(write=False)
    return BootstrapResult(
        point=point,
        se=se,
        ci_percentile_95=(float(lo), float(hi)),
        replicates=values,
        seed=int(seed),
        n_failed=int(n_failed),
        reps=int(reps),
        warnings=tuple(warnings),
    )
