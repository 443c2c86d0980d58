"""Fuzzy RD, fuzzy difference-in-discontinuities, its corrections, and the 2SLS route."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from django.db import models

from .exceptions import FDDError, InvalidParameter, RankDeficient, TooFewClusters, WeakFirstStage
from .inference import (
    VarianceEstimate,
    VarianceMethod,
    cluster_robust_vcov,
    delta_var_ratio,
    diff_disc_var,
    hc1_vcov,
    normal_ci,
    ratio_variance,
)
from .limits import estimate_boundary_limits
from .models import Cohort, VarianceKind

logger = logging.getLogger(__name__)

DEFAULT_MIN_FIRST_STAGE = 0.05


class EstimatorMethod(models.TextChoices):
    NONPARAMETRIC_RATIO = "nonparametric_ratio", "Difference of local Wald ratios"
    THEOREM3A = "theorem3a", "Additive-effects correction"
    THEOREM3B = "theorem3b", "Dominance correction"
    TWO_STAGE_LS = "two_stage_ls", "Reduced-form two-stage least squares"


class TwoSLSSpec(models.TextChoices):
    SIMPLIFIED = "simplified", "Policy of interest extends the confounding policy"
    FULL = "full", "Separate first stages for both policies"


@dataclass(frozen=True)
class FirstStage:
    discontinuities: dict = field(default_factory=dict)
    standard_errors: dict = field(default_factory=dict)
    f_statistics: dict = field(default_factory=dict)
    weak: bool = False
    # Sanderson-Windmeijer F per endogenous regressor; 2SLS only.
    conditional_f_statistics: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "discontinuities": dict(self.discontinuities),
            "standard_errors": dict(self.standard_errors),
            "f_statistics": dict(self.f_statistics),
            "conditional_f_statistics": dict(self.conditional_f_statistics),
            "weak": self.weak,
        }


@dataclass(frozen=True)
class DiffDiscEstimate:
    tau: float
    se: float
    ci95: tuple[float, float]
    method: EstimatorMethod
    first_stage: FirstStage
    n_used: dict
    components: dict = field(default_factory=dict)
    warnings: tuple[str, ...] = field(default_factory=tuple)

    def as_dict(self):
        return {
            "tau": self.tau,
            "se": self.se,
            "ci95": list(self.ci95),
            "method": EstimatorMethod(self.method).value,
            "first_stage": self.first_stage.as_dict(),
            "n_used": dict(self.n_used),
            "components": dict(self.components),
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class BiasDecomposition:
    ate_o: float
    term_o: float
    term_m: float
    tau_implied: float

    def as_dict(self):
        return {"ate_o": self.ate_o, "term_o": self.term_o, "term_m": self.term_m, "tau_implied": self.tau_implied}


def _require_first_stage(delta, min_first_stage, cohort=None):
    if delta == 0 or not np.isfinite(delta) or abs(delta) < min_first_stage:
        raise WeakFirstStage(delta, cohort=cohort, threshold=min_first_stage)


def _first_stage_record(limits, vce):
    discontinuities, errors = {}, {}
    for key, label in (("T_post", "t_post"), ("M_pre", "m_pre"), ("O_post", "o_post"), ("M_post", "m_post")):
        pair = getattr(limits, label)
        if pair is None:
            continue
        discontinuities[key] = pair.jump
        errors[key] = pair.jump_se(vce)
    return FirstStage(discontinuities, errors)


def _estimate(tau, variance, method, first_stage, n_used, components=None, warnings=()):
    se = float(np.sqrt(max(variance, 0.0)))
    return DiffDiscEstimate(
        tau=float(tau),
        se=se,
        ci95=normal_ci(float(tau), se),
        method=EstimatorMethod(method),
        first_stage=first_stage,
        n_used=n_used,
        components=components or {},
        warnings=tuple(warnings),
    )


def fuzzy_rd(limits_y, limits_d, min_first_stage=DEFAULT_MIN_FIRST_STAGE, vce=VarianceKind.CLUSTER, cohort=None):
    """Single-cohort Wald ratio of the outcome jump over the treatment jump."""
    delta_d = limits_d.jump
    _require_first_stage(delta_d, min_first_stage, cohort)
    ratio = limits_y.jump / delta_d
    variance = delta_var_ratio(limits_y, limits_d, ratio, vce).variance
    key = "D" if cohort is None else f"D_{Cohort(cohort).value}"
    first_stage = FirstStage({key: delta_d}, {key: limits_d.jump_se(vce)})
    return _estimate(
        ratio,
        variance,
        EstimatorMethod.NONPARAMETRIC_RATIO,
        first_stage,
        {cohort.value if cohort else "cohort": int(limits_y.n_effective)},
        {"outcome_jump": limits_y.jump, "treatment_jump": delta_d},
    )


def fuzzy_diff_in_disc(limits, min_first_stage=DEFAULT_MIN_FIRST_STAGE, vce=VarianceKind.CLUSTER):
    """Post-cohort Wald ratio (joint treatment) minus pre-cohort Wald ratio (confounder)."""
    delta_t = limits.t_post.jump
    delta_m_pre = limits.m_pre.jump
    _require_first_stage(delta_t, min_first_stage, Cohort.POST)
    _require_first_stage(delta_m_pre, min_first_stage, Cohort.PRE)

    post_ratio = limits.y_post.jump / delta_t
    pre_ratio = limits.y_pre.jump / delta_m_pre
    post_var = delta_var_ratio(limits.y_post, limits.t_post, post_ratio, vce)
    pre_var = delta_var_ratio(limits.y_pre, limits.m_pre, pre_ratio, vce)
    variance = diff_disc_var(post_var, pre_var).variance
    return _estimate(
        post_ratio - pre_ratio,
        variance,
        EstimatorMethod.NONPARAMETRIC_RATIO,
        _first_stage_record(limits, vce),
        {"post": int(limits.y_post.n_effective), "pre": int(limits.y_pre.n_effective)},
        {
            "post_ratio": post_ratio,
            "pre_ratio": pre_ratio,
            "post_ratio_var": post_var.variance,
            "pre_ratio_var": pre_var.variance,
            "post_outcome_jump": limits.y_post.jump,
            "pre_outcome_jump": limits.y_pre.jump,
        },
    )


def theorem3a_correct(tau_frd, limits, ate_m, min_first_stage=0.0):
    """Recover ATE_O when the two treatments act additively.

    Returns ``(dT/dO) * (tau_frd + (1 - dM/dT) * ate_m)`` with post-cohort jumps.
    """
    delta_t = limits.t_post.jump
    delta_o = limits.pair("o_post").jump
    _require_first_stage(delta_o, min_first_stage, Cohort.POST)
    _require_first_stage(delta_t, min_first_stage, Cohort.POST)
    delta_m = limits.m_post.jump
    return (delta_t / delta_o) * (tau_frd + (1.0 - delta_m / delta_t) * ate_m)


def theorem3b_correct(tau_frd, limits, min_first_stage=0.0):
    """Rescale by ``dM/dO``; valid when the policy of interest dominates (O >= M)."""
    delta_o = limits.pair("o_post").jump
    _require_first_stage(delta_o, min_first_stage, Cohort.POST)
    return tau_frd * (limits.m_post.jump / delta_o)


def correct_estimate(base, limits, method, vce=VarianceKind.CLUSTER, min_first_stage=0.0):
    """Corrected estimate with a delta-method standard error.

    The jump ratios are treated as fixed. ATE_M is the pre-cohort ratio, which
    also enters ``base``, so the additive correction is written in terms of the
    two independent cohort ratios before taking variances.
    """
    method = EstimatorMethod(method)
    post_ratio = base.components["post_ratio"]
    pre_ratio = base.components["pre_ratio"]
    post_var = base.components["post_ratio_var"]
    pre_var = base.components["pre_ratio_var"]
    delta_t = limits.t_post.jump
    delta_o = limits.pair("o_post").jump
    delta_m = limits.m_post.jump

    if method == EstimatorMethod.THEOREM3A:
        tau = theorem3a_correct(base.tau, limits, pre_ratio, min_first_stage)
        scale = delta_t / delta_o
        variance = scale**2 * (post_var + (delta_m / delta_t) ** 2 * pre_var)
        components = {"ate_m": pre_ratio, "scale": scale}
    elif method == EstimatorMethod.THEOREM3B:
        tau = theorem3b_correct(base.tau, limits, min_first_stage)
        scale = delta_m / delta_o
        variance = scale**2 * base.se**2
        components = {"scale": scale}
    else:
        raise InvalidParameter(f"'{method}' is not a correction")
    components.update(uncorrected_tau=base.tau, post_ratio=post_ratio, pre_ratio=pre_ratio)
    return _estimate(tau, variance, method, base.first_stage, base.n_used, components, base.warnings)


def decompose_jumps(ate_o, gap_o, gap_m, delta_o, delta_t, delta_m):
    if delta_t == 0:
        raise WeakFirstStage(delta_t, cohort=Cohort.POST)
    term_o = (1.0 - delta_o / delta_t) * gap_o
    term_m = (1.0 - delta_m / delta_t) * gap_m
    return BiasDecomposition(ate_o, term_o, term_m, ate_o - term_o - term_m)


def bias_decompose(ate_o, gap_o, gap_m, limits):
    """What the naive estimator identifies when the first-stage jumps differ.

    ``gap_o`` is the effect of the policy of interest alone and ``gap_m`` the
    effect of the confounding policy alone, both at the cutoff.
    """
    return decompose_jumps(
        ate_o, gap_o, gap_m, limits.pair("o_post").jump, limits.t_post.jump, limits.m_post.jump
    )


def first_stage_difference(limits, vce=VarianceKind.CLUSTER):
    """Post joint-treatment jump minus pre confounder jump, with its standard error."""
    diff = limits.t_post.jump - limits.m_pre.jump
    return diff, float(np.sqrt(limits.t_post.jump_variance(vce) + limits.m_pre.jump_variance(vce)))


def _select_covariates(dataset, covariates):
    if covariates is None or len(dataset.column_names) == 0:
        return np.empty((len(dataset), 0)), ()
    if covariates == "all":
        return dataset.covariates, dataset.column_names
    columns = [dataset.covariate(c) for c in covariates]
    names = tuple(c if isinstance(c, str) else dataset.column_names[c] for c in covariates)
    return np.column_stack(columns) if columns else np.empty((len(dataset), 0)), names


def _robust_vcov(regressors, residuals, clusters, weights, vce):
    if VarianceKind(vce) == VarianceKind.CLUSTER:
        try:
            return cluster_robust_vcov(regressors, residuals, clusters, weights)
        except TooFewClusters:
            logger.debug("fewer than two clusters in 2SLS sample; using HC1")
    return hc1_vcov(regressors, residuals, weights)


def _wald_f(coef, vcov, df=None):
    df = len(coef) if df is None else df
    try:
        return float(coef @ np.linalg.solve(vcov, coef) / df)
    except np.linalg.LinAlgError:
        return float("inf") if np.any(coef != 0) else 0.0


def _conditional_f(j, exog, endog, z, pi, w, clusters, vce):
    """Sanderson-Windmeijer F for endogenous column ``j`` given the others.

    Column ``j`` is partialled on the remaining endogenous columns by 2SLS
    and its residual is tested on the excluded instruments with
    ``L - K + 1`` degrees of freedom. Near zero when the excluded
    instruments move column ``j`` only through the others.
    """
    k_exog = exog.shape[1]
    n_excluded = z.shape[1] - k_exog
    others = [c for c in range(endog.shape[1]) if c != j]
    rhs = np.column_stack([exog, endog[:, others]])
    fitted = np.column_stack([exog, z @ pi[:, [k_exog + c for c in others]]])
    coef = np.linalg.lstsq(fitted.T @ (rhs * w[:, None]), fitted.T @ (w * endog[:, j]), rcond=None)[0]
    resid = endog[:, j] - rhs @ coef
    gamma = np.linalg.solve(z.T @ (z * w[:, None]), z.T @ (w * resid))
    vcov = _robust_vcov(z, resid - z @ gamma, clusters, w, vce)
    excluded = slice(k_exog, k_exog + n_excluded)
    return _wald_f(gamma[excluded], vcov[excluded, excluded], df=n_excluded - len(others))


def reduced_form_2sls(
    dataset,
    design,
    spec=TwoSLSSpec.SIMPLIFIED,
    covariates=None,
    weak_f_threshold=4.0,
):
    """Two-stage least squares on the design window with cohort-by-side polynomial controls.

    Simplified spec: ``Y = a1 + a2*M + a3*D + delta*D*M + f(x, D) + e`` with M and
    D*M instrumented by the above-cutoff dummy and its interaction with D. The
    full spec adds O and instruments M, O and D*M*O with the dummy, its cohort
    interaction and the cohort-interacted linear slope above the cutoff.
    """
    spec = TwoSLSSpec(spec)
    sample = dataset.subset(design.window_mask(dataset.x))
    n = len(sample)
    xc = sample.x - design.cutoff
    above = design.above_mask(sample.x).astype(float)
    post = sample.post.astype(float)
    m = sample.m.astype(float)
    o = sample.o.astype(float)
    w = sample.weight
    cov, cov_names = _select_covariates(sample, covariates)

    exog = [np.ones(n), post]
    for k in range(1, design.poly_order + 1):
        power = xc**k
        exog += [power, power * above, power * post]
        if spec == TwoSLSSpec.SIMPLIFIED or k >= 2:
            exog.append(power * above * post)
    exog = np.column_stack(exog + [cov]) if cov.shape[1] else np.column_stack(exog)

    if spec == TwoSLSSpec.SIMPLIFIED:
        endog_names = ("M", "D*M")
        endog = np.column_stack([m, post * m])
        instruments = np.column_stack([above, post * above])
    else:
        endog_names = ("M", "O", "D*M*O")
        endog = np.column_stack([m, o, post * m * o])
        instruments = np.column_stack([above, post * above, post * above * xc])

    z = np.column_stack([exog, instruments])
    regressors = np.column_stack([exog, endog])
    ztwz = z.T @ (z * w[:, None])
    if np.linalg.matrix_rank(ztwz) < z.shape[1]:
        raise RankDeficient("instrument matrix is collinear")
    pi = np.linalg.solve(ztwz, z.T @ (regressors * w[:, None]))
    fitted = z @ pi
    cross = fitted.T @ (regressors * w[:, None])
    if np.linalg.matrix_rank(cross) < regressors.shape[1]:
        raise RankDeficient("second stage is not identified by the excluded instruments")
    beta = np.linalg.solve(cross, fitted.T @ (w * sample.y))
    residuals = sample.y - regressors @ beta
    vcov = _robust_vcov(fitted, residuals, sample.cluster, w, design.vce)

    k_exog = exog.shape[1]
    n_instr = instruments.shape[1]
    excluded = slice(k_exog, k_exog + n_instr)
    f_stats, jumps, jump_errors = {}, {}, {}
    for j, name in enumerate(endog_names):
        column = k_exog + j
        fs_resid = regressors[:, column] - z @ pi[:, column]
        fs_vcov = _robust_vcov(z, fs_resid, sample.cluster, w, design.vce)
        f_stats[name] = _wald_f(pi[excluded, column], fs_vcov[excluded, excluded])
        # Instrument order puts the above dummy first and its cohort interaction second.
        i_above, i_post = k_exog, k_exog + 1
        pre_jump = pi[i_above, column]
        post_jump = pi[i_above, column] + pi[i_post, column]
        pre_var = fs_vcov[i_above, i_above]
        post_var = fs_vcov[i_above, i_above] + fs_vcov[i_post, i_post] + 2 * fs_vcov[i_above, i_post]
        label = {"M": "M", "O": "O", "D*M": "T", "D*M*O": "T"}[name]
        jumps[f"{label}_post"] = float(post_jump)
        jump_errors[f"{label}_post"] = float(np.sqrt(max(post_var, 0.0)))
        if label == "M":
            jumps["M_pre"] = float(pre_jump)
            jump_errors["M_pre"] = float(np.sqrt(max(pre_var, 0.0)))

    conditional = {
        name: _conditional_f(j, exog, endog, z, pi, w, sample.cluster, design.vce)
        for j, name in enumerate(endog_names)
    }

    warnings = []
    if min(f_stats.values()) < weak_f_threshold:
        warnings.append(f"weak first stage: minimum F on excluded instruments {min(f_stats.values()):.3g}")
    weakest = min(conditional, key=conditional.get)
    if conditional[weakest] < weak_f_threshold:
        warnings.append(
            f"weak joint identification: conditional F for {weakest} is {conditional[weakest]:.3g}; "
            "the excluded instruments do not separate the endogenous regressors"
        )
    for message in warnings:
        logger.warning(message)

    target = regressors.shape[1] - 1
    n_clusters = len(np.unique(sample.cluster))
    clustered = VarianceKind(design.vce) == VarianceKind.CLUSTER and n_clusters >= 2
    variance = VarianceEstimate(
        max(float(vcov[target, target]), 0.0),
        VarianceMethod.CLUSTER_ROBUST if clustered else VarianceMethod.HC1,
        n_clusters if clustered else n,
    )
    return _estimate(
        beta[target],
        variance.variance,
        EstimatorMethod.TWO_STAGE_LS,
        FirstStage(jumps, jump_errors, f_stats, bool(warnings), conditional),
        {"post": int(sample.post.sum()), "pre": int((~sample.post).sum())},
        {
            "spec": spec.value,
            "covariates": list(cov_names),
            "coefficients": dict(zip(endog_names, map(float, beta[k_exog:]))),
            "variance_method": variance.method.value,
        },
        warnings,
    )


def run_estimator(
    dataset,
    design,
    method=EstimatorMethod.NONPARAMETRIC_RATIO,
    spec=TwoSLSSpec.SIMPLIFIED,
    covariates=None,
    min_first_stage=DEFAULT_MIN_FIRST_STAGE,
    weak_f_threshold=4.0,
):
    """One headline estimate by the selected route."""
    method = EstimatorMethod(method)
    if method == EstimatorMethod.TWO_STAGE_LS:
        return reduced_form_2sls(dataset, design, spec, covariates, weak_f_threshold)
    limits = estimate_boundary_limits(dataset, design)
    base = fuzzy_diff_in_disc(limits, min_first_stage, design.vce)
    if method == EstimatorMethod.NONPARAMETRIC_RATIO:
        return base
    return correct_estimate(base, limits, method, design.vce)


ROBUSTNESS_VARIANTS = ("baseline", "quadratic", "half_bandwidth", "donut")


def robustness_grid(dataset, design, variants=ROBUSTNESS_VARIANTS, donut=0.25, **options):
    """Re-run the headline estimate under quadratic controls, halved bandwidths and a donut.

    Failing variants map to the raised ``FDDError`` instead of an estimate.
    """
    designs = {
        "baseline": design,
        "quadratic": design.with_changes(poly_order=2),
        "half_bandwidth": design.with_changes(bandwidths=design.bandwidths.scaled(0.5)),
        "donut": design.with_changes(donut=donut),
    }
    results = {}
    for name in variants:
        if name not in designs:
            raise InvalidParameter(f"unknown robustness variant '{name}'")
        try:
            results[name] = run_estimator(dataset, designs[name], **options)
        except FDDError as exc:
            results[name] = exc
    return results
