"""Synthetic cohorts with known effects at the cutoff, and the Monte Carlo harness.

Every function of the running variable is a polynomial with coefficients in
ascending powers of ``x - cutoff``, so its value at the cutoff is the first
coefficient and population limits need no sampling.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from django.db import models
from joblib import Parallel, delayed
from numpy.polynomial import polynomial as P
from scipy import stats

from .estimators import EstimatorMethod, TwoSLSSpec, decompose_jumps, run_estimator
from .exceptions import AllReplicatesFailed, FDDError, InvalidParameter, InvalidSpec
from .inference import derive_seed
from .kernels import LocalFit
from .limits import BoundaryLimits, LocalFitPair
from .models import Cohort, Dataset

logger = logging.getLogger(__name__)

POTENTIAL_OUTCOMES = ("00", "01", "10", "11")
LATENT_TYPES = ("always", "complier", "never")


class JointRule(models.TextChoices):
    INDEPENDENT = "independent", "O and M drawn independently"
    DOMINANCE = "dominance", "M = 1 implies O = 1"
    EQUAL = "equal", "O = M"


def _coefs(values):
    coefs = tuple(float(v) for v in np.atleast_1d(values))
    if not coefs:
        raise InvalidSpec("polynomial needs at least one coefficient")
    return coefs


@dataclass(frozen=True)
class StepProbability:
    """P(treatment | x) with separate polynomials below and above the cutoff."""

    below: tuple[float, ...]
    above: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "below", _coefs(self.below))
        object.__setattr__(self, "above", _coefs(self.above))

    @property
    def jump(self):
        return self.above[0] - self.below[0]

    def at_cutoff(self, above):
        return self.above[0] if above else self.below[0]

    def __call__(self, xc):
        xc = np.asarray(xc, dtype=float)
        return np.where(xc >= 0, P.polyval(xc, self.above), P.polyval(xc, self.below))


@dataclass(frozen=True)
class SelectionModel:
    """Latent always/complier/never types shared by both treatments.

    Below the cutoff only always-takers are treated; above, compliers join
    them. Types shift the outcome level and the effect of each treatment.
    """

    shares: tuple[float, float, float]
    base: tuple[float, float, float] = (0.0, 0.0, 0.0)
    o_shift: tuple[float, float, float] = (0.0, 0.0, 0.0)
    m_shift: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        for name in ("shares", "base", "o_shift", "m_shift"):
            values = tuple(float(v) for v in getattr(self, name))
            if len(values) != 3:
                raise InvalidSpec(f"selection.{name} needs one value per type {LATENT_TYPES}")
            object.__setattr__(self, name, values)
        if min(self.shares) < 0 or not np.isclose(sum(self.shares), 1.0):
            raise InvalidSpec(f"selection shares {self.shares} must be nonnegative and sum to 1")
        if self.shares[1] == 0:
            raise InvalidSpec("selection model needs a positive complier share")

    def probability(self):
        always, complier, _ = self.shares
        return StepProbability(below=(always,), above=(always + complier,))


@dataclass(frozen=True)
class DGPSpec:
    cutoff: float
    window: tuple[float, float]
    n_per_cohort: int
    potential_means: dict
    p_m: dict
    p_o_post: StepProbability | None = None
    joint_rule: JointRule = JointRule.EQUAL
    noise_sd: float = 1.0
    selection: SelectionModel | None = None
    heteroskedastic: bool = False
    cluster_corr: float = 0.0
    bin_width: float = 0.25

    def __post_init__(self):
        lo, hi = (float(v) for v in self.window)
        object.__setattr__(self, "window", (lo, hi))
        if not lo < self.cutoff < hi:
            raise InvalidSpec(f"window ({lo}, {hi}) must strictly contain the cutoff {self.cutoff}")
        if int(self.n_per_cohort) < 2:
            raise InvalidSpec("n_per_cohort must be at least 2")
        if self.noise_sd < 0:
            raise InvalidSpec("noise_sd must be nonnegative")
        if not 0.0 <= self.cluster_corr < 1.0:
            raise InvalidSpec("cluster_corr must lie in [0, 1)")
        if self.bin_width <= 0:
            raise InvalidSpec("bin_width must be positive")
        try:
            object.__setattr__(self, "joint_rule", JointRule(self.joint_rule))
        except ValueError as exc:
            raise InvalidSpec(f"unknown joint rule '{self.joint_rule}'") from exc

        means = {}
        for cohort in Cohort:
            given = self.potential_means.get(cohort) or self.potential_means.get(cohort.value)
            if given is None or set(given) != set(POTENTIAL_OUTCOMES):
                raise InvalidSpec(f"{cohort.value} cohort needs potential means {POTENTIAL_OUTCOMES}")
            means[cohort] = {key: _coefs(given[key]) for key in POTENTIAL_OUTCOMES}
        object.__setattr__(self, "potential_means", means)

        p_m = {}
        for cohort in Cohort:
            given = self.p_m.get(cohort) or self.p_m.get(cohort.value)
            if given is None and self.selection is not None:
                given = self.selection.probability()
            if given is None:
                raise InvalidSpec(f"missing P(M=1|x) for the {cohort.value} cohort")
            p_m[cohort] = given if isinstance(given, StepProbability) else StepProbability(*given)
        object.__setattr__(self, "p_m", p_m)
        if self.p_o_post is not None and not isinstance(self.p_o_post, StepProbability):
            object.__setattr__(self, "p_o_post", StepProbability(*self.p_o_post))
        self._check_probabilities()

    def _grid(self):
        lo, hi = self.window
        below = np.linspace(lo, self.cutoff, 501)[:-1] - self.cutoff
        above = np.linspace(self.cutoff, hi, 501) - self.cutoff
        return np.concatenate([below, above])

    def _check_probabilities(self):
        if self.selection is not None:
            if self.joint_rule == JointRule.INDEPENDENT:
                raise InvalidSpec("a selection model needs the equal or dominance joint rule")
            return
        grid = self._grid()
        named = [(f"p_m.{c.value}", self.p_m[c]) for c in Cohort]
        if self.joint_rule != JointRule.EQUAL:
            if self.p_o_post is None:
                raise InvalidSpec(f"joint rule '{self.joint_rule}' needs p_o_post")
            named.append(("p_o_post", self.p_o_post))
        for name, prob in named:
            values = prob(grid)
            if values.min() < 0 or values.max() > 1:
                raise InvalidSpec(f"{name} leaves [0, 1] inside the window")
        if self.joint_rule == JointRule.DOMINANCE:
            if np.any(self.p_o_post(grid) < self.p_m[Cohort.POST](grid) - 1e-12):
                raise InvalidSpec("dominance needs P(O=1|x) >= P(M=1|x) in the post cohort")

    @property
    def effective_p_m(self):
        if self.selection is not None:
            step = self.selection.probability()
            return {Cohort.PRE: step, Cohort.POST: step}
        return self.p_m

    @property
    def effective_p_o(self):
        if self.selection is not None:
            return self.selection.probability()
        if self.joint_rule == JointRule.EQUAL:
            return self.p_m[Cohort.POST]
        return self.p_o_post

    def mean_at_cutoff(self, cohort, outcome):
        return self.potential_means[Cohort(cohort)][outcome][0]

    def with_changes(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class TrueEstimands:
    ate_o: float
    ate_m: float
    late_o: float | None
    tau_frd_limit: float
    jumps: dict
    gap_o: float
    gap_m: float
    cohort_drift: float = 0.0

    def target(self, method):
        """The quantity an estimator converges to under this DGP."""
        if EstimatorMethod(method) in (EstimatorMethod.THEOREM3A, EstimatorMethod.THEOREM3B):
            return "ate_o", self.ate_o
        return "tau_frd_limit", self.tau_frd_limit

    def as_dict(self):
        return {
            "ate_o": self.ate_o,
            "ate_m": self.ate_m,
            "late_o": self.late_o,
            "tau_frd_limit": self.tau_frd_limit,
            "jumps": dict(self.jumps),
            "gap_o": self.gap_o,
            "gap_m": self.gap_m,
            "cohort_drift": self.cohort_drift,
        }


def _joint_probabilities(rule, p_o, p_m):
    """(p00, p01, p10, p11) for (O, M) given the marginals."""
    if rule == JointRule.INDEPENDENT:
        p11 = p_o * p_m
        return 1 - p_o - p_m + p11, p_m - p11, p_o - p11, p11
    if rule == JointRule.DOMINANCE:
        return 1 - p_o, 0.0, p_o - p_m, p_m
    return 1 - p_m, 0.0, 0.0, p_m


def true_estimands(spec):
    """Closed-form effects and first-stage jumps at the cutoff."""
    post, pre = Cohort.POST, Cohort.PRE
    mu = {key: spec.mean_at_cutoff(post, key) for key in POTENTIAL_OUTCOMES}
    mu_pre = {key: spec.mean_at_cutoff(pre, key) for key in POTENTIAL_OUTCOMES}
    ate_o = mu["11"] - mu["01"]
    gap_o = mu["10"] - mu["00"]
    gap_m = mu["01"] - mu["00"]
    gap_m_pre = mu_pre["01"] - mu_pre["00"]

    p_m_post, p_m_pre, p_o = spec.effective_p_m[post], spec.effective_p_m[pre], spec.effective_p_o
    late_o = None
    if spec.selection is not None:
        _, complier, _ = spec.selection.shares
        o_c, m_c = spec.selection.o_shift[1], spec.selection.m_shift[1]
        weights = np.asarray(spec.selection.shares)
        ate_o += float(weights @ spec.selection.o_shift)
        gap_m += float(weights @ spec.selection.m_shift)
        gap_m_pre += float(weights @ spec.selection.m_shift)
        late_o = mu["11"] - mu["01"] + o_c
        delta_t = delta_o = delta_m = delta_m_pre = complier
        post_ratio = mu["11"] - mu["00"] + o_c + m_c
        pre_ratio = mu_pre["01"] - mu_pre["00"] + m_c
        tau = post_ratio - pre_ratio
        drift = (mu["01"] - mu["00"]) - (mu_pre["01"] - mu_pre["00"])
    else:
        sides = [_joint_probabilities(spec.joint_rule, p_o.at_cutoff(a), p_m_post.at_cutoff(a)) for a in (True, False)]
        delta_p = [above - below for above, below in zip(*sides)]
        delta_t, delta_o, delta_m = delta_p[3], p_o.jump, p_m_post.jump
        delta_m_pre = p_m_pre.jump
        if delta_t == 0 or delta_m_pre == 0:
            raise InvalidSpec("both cohorts need a first-stage discontinuity")
        jump_y_post = sum(d * mu[key] for d, key in zip(delta_p, POTENTIAL_OUTCOMES))
        tau = jump_y_post / delta_t - gap_m_pre
        drift = gap_m - gap_m_pre

    return TrueEstimands(
        ate_o=float(ate_o),
        ate_m=float(gap_m_pre),
        late_o=None if late_o is None else float(late_o),
        tau_frd_limit=float(tau),
        jumps={"O_post": float(delta_o), "M_post": float(delta_m), "T_post": float(delta_t), "M_pre": float(delta_m_pre)},
        gap_o=float(gap_o),
        gap_m=float(gap_m),
        cohort_drift=float(drift),
    )


def implied_decomposition(spec):
    """The three-term decomposition evaluated on the DGP's own jumps and gaps."""
    truth = true_estimands(spec)
    j = truth.jumps
    ate = truth.late_o if truth.late_o is not None else truth.ate_o
    return decompose_jumps(ate, truth.gap_o, truth.gap_m, j["O_post"], j["T_post"], j["M_post"])


def _population_fit(value):
    return LocalFit(intercept=float(value), slope=0.0, n_effective=0, hc_variance_intercept=0.0,
                    cluster_variance_intercept=0.0)


def population_limits(spec):
    """BoundaryLimits holding the DGP's exact one-sided limits with zero variance."""
    if spec.selection is not None:
        raise InvalidSpec("population limits are defined for specs without a selection model")
    post, pre = Cohort.POST, Cohort.PRE
    p_o, p_m_post, p_m_pre = spec.effective_p_o, spec.effective_p_m[post], spec.effective_p_m[pre]

    def side_limits(above):
        p = _joint_probabilities(spec.joint_rule, p_o.at_cutoff(above), p_m_post.at_cutoff(above))
        pm_pre = p_m_pre.at_cutoff(above)
        return {
            "y_post": sum(q * spec.mean_at_cutoff(post, key) for q, key in zip(p, POTENTIAL_OUTCOMES)),
            "t_post": p[3],
            "m_post": p_m_post.at_cutoff(above),
            "o_post": p_o.at_cutoff(above),
            "m_pre": pm_pre,
            "y_pre": (1 - pm_pre) * spec.mean_at_cutoff(pre, "00") + pm_pre * spec.mean_at_cutoff(pre, "01"),
        }

    above, below = side_limits(True), side_limits(False)
    return BoundaryLimits(**{
        label: LocalFitPair(_population_fit(above[label]), _population_fit(below[label])) for label in above
    })


def _noise(spec, rng, xc, cluster_codes):
    n = len(xc)
    if spec.noise_sd == 0:
        return np.zeros(n)
    scale = np.full(n, spec.noise_sd)
    if spec.heteroskedastic:
        half = (spec.window[1] - spec.window[0]) / 2.0
        scale = scale * (0.5 + np.abs(xc) / half)
    idiosyncratic = rng.standard_normal(n) * np.sqrt(1.0 - spec.cluster_corr)
    shared = 0.0
    if spec.cluster_corr > 0:
        effects = rng.standard_normal(cluster_codes.max() + 1) * np.sqrt(spec.cluster_corr)
        shared = effects[cluster_codes]
    return scale * (idiosyncratic + shared)


def _draw_cohort(spec, cohort, rng):
    n = int(spec.n_per_cohort)
    lo, hi = spec.window
    x = rng.uniform(lo, hi, n)
    xc = x - spec.cutoff
    u_m = rng.uniform(size=n)
    u_o = rng.uniform(size=n)
    bins = np.floor(xc / spec.bin_width).astype(int)
    codes = bins - bins.min()

    shift = np.zeros(n)
    if spec.selection is not None:
        kind = np.searchsorted(np.cumsum(spec.selection.shares), u_m, side="right").clip(0, 2)
        m = np.where(xc >= 0, kind <= 1, kind == 0).astype(np.int8)
        o = m.copy() if cohort == Cohort.POST else np.zeros(n, dtype=np.int8)
        sel = spec.selection
        shift = np.take(sel.base, kind) + o * np.take(sel.o_shift, kind) + m * np.take(sel.m_shift, kind)
    else:
        p_m = spec.p_m[cohort](xc)
        m = (u_m < p_m).astype(np.int8)
        if cohort == Cohort.PRE:
            o = np.zeros(n, dtype=np.int8)
        elif spec.joint_rule == JointRule.EQUAL:
            o = m.copy()
        elif spec.joint_rule == JointRule.DOMINANCE:
            o = (u_m < spec.p_o_post(xc)).astype(np.int8)
        else:
            o = (u_o < spec.p_o_post(xc)).astype(np.int8)

    means = spec.potential_means[cohort]
    mu = np.select(
        [(o == 0) & (m == 0), (o == 0) & (m == 1), (o == 1) & (m == 0)],
        [P.polyval(xc, means["00"]), P.polyval(xc, means["01"]), P.polyval(xc, means["10"])],
        P.polyval(xc, means["11"]),
    )
    y = mu + shift + _noise(spec, rng, xc, codes)
    return {
        "y": y,
        "x": x,
        "post": np.full(n, cohort == Cohort.POST),
        "m": m,
        "o": o,
        "cluster": bins.astype(str),
    }


def generate_sample(spec, seed):
    """Pre cohort rows first, then post; identical output for identical ``(spec, seed)``."""
    rng = np.random.default_rng(int(seed))
    parts = [_draw_cohort(spec, cohort, rng) for cohort in (Cohort.PRE, Cohort.POST)]
    return Dataset(**{key: np.concatenate([part[key] for part in parts]) for key in parts[0]})


def generate_placebo_sample(spec, seed, m_effect_shift=0.0):
    """Two pre-policy groups: the pseudo-post group follows the post cohort's means without O.

    Returns the dataset (``post`` all False) and the pseudo-post label.
    ``m_effect_shift`` is added to the confounder's effect in the pseudo-post
    group only, breaking constancy across groups.
    """
    pseudo = dict(spec.potential_means[Cohort.POST])
    pseudo["01"] = (pseudo["01"][0] + m_effect_shift,) + tuple(pseudo["01"][1:])
    placebo_spec = spec.with_changes(
        potential_means={Cohort.PRE: spec.potential_means[Cohort.PRE], Cohort.POST: pseudo},
        p_m={Cohort.PRE: spec.p_m[Cohort.PRE], Cohort.POST: spec.p_m[Cohort.POST]},
    )
    rng = np.random.default_rng(int(seed))
    first = _draw_cohort(placebo_spec, Cohort.PRE, rng)
    second_spec = placebo_spec.with_changes(
        potential_means={Cohort.PRE: pseudo, Cohort.POST: pseudo},
        p_m={Cohort.PRE: spec.p_m[Cohort.POST], Cohort.POST: spec.p_m[Cohort.POST]},
    )
    second = _draw_cohort(second_spec, Cohort.PRE, rng)
    dataset = Dataset(**{key: np.concatenate([first[key], second[key]]) for key in first})
    pseudo_post = np.concatenate([np.zeros(len(first["y"]), bool), np.ones(len(second["y"]), bool)])
    return dataset, pseudo_post


@dataclass(frozen=True, eq=False)
class StudyReport:
    method: EstimatorMethod
    target_name: str
    target: float
    reps: int
    n_failed: int
    mean_estimate: float
    mean_bias: float
    bias_vs_ate_o: float
    empirical_sd: float
    mean_se: float
    rmse: float
    coverage: float
    rejection_rate: float
    seed: int
    estimates: np.ndarray = field(repr=False, default=None)
    warnings: tuple[str, ...] = field(default_factory=tuple)

    def as_dict(self):
        return {
            "method": EstimatorMethod(self.method).value,
            "target_name": self.target_name,
            "target": self.target,
            "reps": self.reps,
            "n_failed": self.n_failed,
            "n_succeeded": self.reps - self.n_failed,
            "mean_estimate": self.mean_estimate,
            "mean_bias": self.mean_bias,
            "bias_vs_ate_o": self.bias_vs_ate_o,
            "empirical_sd": self.empirical_sd,
            "mean_se": self.mean_se,
            "rmse": self.rmse,
            "coverage": self.coverage,
            "rejection_rate": self.rejection_rate,
            "seed": self.seed,
        }


def monte_carlo_study(
    spec,
    design,
    method=EstimatorMethod.NONPARAMETRIC_RATIO,
    reps=500,
    seed=0,
    n_jobs=1,
    two_sls_spec=TwoSLSSpec.SIMPLIFIED,
    alpha=0.05,
    min_reps=100,
    min_first_stage=0.05,
    failure_warn=0.10,
):
    """Repeat sample generation and estimation ``reps`` times.

    Replicate ``r`` draws its sample from ``derive_seed(seed, r)``. Coverage is
    the share of normal 95% intervals containing the target;
    ``rejection_rate`` is the share of replicates whose estimate differs from
    zero at ``alpha``.
    """
    if reps < min_reps:
        raise InvalidParameter(f"Monte Carlo study needs at least {min_reps} replicates, got {reps}")
    method = EstimatorMethod(method)
    truth = true_estimands(spec)
    target_name, target = truth.target(method)
    critical = stats.norm.ppf(1.0 - alpha / 2.0)

    def replicate(index):
        data = generate_sample(spec, derive_seed(seed, index))
        try:
            estimate = run_estimator(data, design, method, two_sls_spec, None, min_first_stage)
        except FDDError as exc:
            logger.debug("Monte Carlo replicate %d failed: %s", index, exc)
            return None
        return estimate.tau, estimate.se, estimate.ci95[0] <= target <= estimate.ci95[1]

    outcomes = Parallel(n_jobs=n_jobs, backend="threading")(delayed(replicate)(r) for r in range(reps))
    done = np.array([row for row in outcomes if row is not None], dtype=float).reshape(-1, 3)
    n_failed = reps - len(done)
    if len(done) == 0:
        raise AllReplicatesFailed(f"all {reps} Monte Carlo replicates failed")

    warnings = []
    if n_failed > failure_warn * reps:
        message = f"{n_failed} of {reps} Monte Carlo replicates failed"
        logger.warning(message)
        warnings.append(message)

    taus, ses, covered = done[:, 0], done[:, 1], done[:, 2]
    rejected = np.abs(taus) > critical * ses
    taus.setflags(write=False)
    return StudyReport(
        method=method,
        target_name=target_name,
        target=target,
        reps=int(reps),
        n_failed=int(n_failed),
        mean_estimate=float(taus.mean()),
        mean_bias=float(taus.mean() - target),
        bias_vs_ate_o=float(taus.mean() - truth.ate_o),
        empirical_sd=float(taus.std(ddof=1)) if len(taus) > 1 else 0.0,
        mean_se=float(ses.mean()),
        rmse=float(np.sqrt(np.mean((taus - target) ** 2))),
        coverage=float(covered.mean()),
        rejection_rate=float(rejected.mean()),
        seed=int(seed),
        estimates=taus,
        warnings=tuple(warnings),
    )


def _join(values):
    return ",".join(repr(float(v)) for v in values)


def _floats(mapping, key):
    try:
        return tuple(float(v) for v in mapping[key].split(","))
    except KeyError as exc:
        raise InvalidSpec(f"missing key '{key}'") from exc
    except ValueError as exc:
        raise InvalidSpec(f"key '{key}' must be a comma list of numbers, got '{mapping[key]}'") from exc


def dgp_to_config(spec):
    """Flat ``dgp.*`` mapping readable by ``dgp_from_config``."""
    config = {
        "dgp.cutoff": repr(float(spec.cutoff)),
        "dgp.window": _join(spec.window),
        "dgp.n_per_cohort": str(int(spec.n_per_cohort)),
        "dgp.noise_sd": repr(float(spec.noise_sd)),
        "dgp.joint_rule": spec.joint_rule.value,
        "dgp.heteroskedastic": "true" if spec.heteroskedastic else "false",
        "dgp.cluster_corr": repr(float(spec.cluster_corr)),
        "dgp.bin_width": repr(float(spec.bin_width)),
    }
    for cohort in Cohort:
        for key in POTENTIAL_OUTCOMES:
            config[f"dgp.mu{key}.{cohort.value}"] = _join(spec.potential_means[cohort][key])
        config[f"dgp.p_m.{cohort.value}.below"] = _join(spec.p_m[cohort].below)
        config[f"dgp.p_m.{cohort.value}.above"] = _join(spec.p_m[cohort].above)
    if spec.p_o_post is not None:
        config["dgp.p_o_post.below"] = _join(spec.p_o_post.below)
        config["dgp.p_o_post.above"] = _join(spec.p_o_post.above)
    if spec.selection is not None:
        for name in ("shares", "base", "o_shift", "m_shift"):
            config[f"dgp.selection.{name}"] = _join(getattr(spec.selection, name))
    return config


def dgp_from_config(mapping):
    """Build a ``DGPSpec`` from ``dgp.*`` keys; other keys are ignored."""
    def number(key, default=None, cast=float):
        if key not in mapping:
            if default is None:
                raise InvalidSpec(f"missing key '{key}'")
            return default
        try:
            return cast(mapping[key])
        except ValueError as exc:
            raise InvalidSpec(f"key '{key}' has invalid value '{mapping[key]}'") from exc

    window = _floats(mapping, "dgp.window")
    if len(window) != 2:
        raise InvalidSpec("dgp.window needs two values")
    means = {
        cohort: {key: _floats(mapping, f"dgp.mu{key}.{cohort.value}") for key in POTENTIAL_OUTCOMES}
        for cohort in Cohort
    }
    p_m = {
        cohort: StepProbability(
            _floats(mapping, f"dgp.p_m.{cohort.value}.below"), _floats(mapping, f"dgp.p_m.{cohort.value}.above")
        )
        for cohort in Cohort
        if f"dgp.p_m.{cohort.value}.below" in mapping or "dgp.selection.shares" not in mapping
    }
    p_o = None
    if "dgp.p_o_post.below" in mapping or "dgp.p_o_post.above" in mapping:
        p_o = StepProbability(_floats(mapping, "dgp.p_o_post.below"), _floats(mapping, "dgp.p_o_post.above"))
    selection = None
    if "dgp.selection.shares" in mapping:
        selection = SelectionModel(
            *(
                _floats(mapping, f"dgp.selection.{name}") if f"dgp.selection.{name}" in mapping else (0.0, 0.0, 0.0)
                for name in ("shares", "base", "o_shift", "m_shift")
            )
        )
    heteroskedastic = mapping.get("dgp.heteroskedastic", "false").strip().lower()
    if heteroskedastic not in ("true", "false", "1", "0"):
        raise InvalidSpec(f"dgp.heteroskedastic must be true or false, got '{heteroskedastic}'")

    return DGPSpec(
        cutoff=number("dgp.cutoff"),
        window=window,
        n_per_cohort=number("dgp.n_per_cohort", cast=int),
        potential_means=means,
        p_m=p_m,
        p_o_post=p_o,
        joint_rule=mapping.get("dgp.joint_rule", JointRule.EQUAL.value),
        noise_sd=number("dgp.noise_sd", 1.0),
        selection=selection,
        heteroskedastic=heteroskedastic in ("true", "1"),
        cluster_corr=number("dgp.cluster_corr", 0.0),
        bin_width=number("dgp.bin_width", 0.25),
    )
