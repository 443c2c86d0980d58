from pathlib import Path

import numpy as np

from core.kernels import LocalFit
from core.limits import BoundaryLimits, LocalFitPair
from core.models import Dataset, StudyDesign
from core.simulation import DGPSpec, JointRule, StepProbability

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def fit(intercept, variance=0.0, n=100):
    return LocalFit(
        intercept=float(intercept),
        slope=0.0,
        n_effective=n,
        hc_variance_intercept=variance,
        cluster_variance_intercept=variance,
    )


def pair(jump, variance=0.0, below=0.0):
    """Limit pair with the given jump; ``variance`` is split evenly between the sides."""
    return LocalFitPair(fit(below + jump, variance / 2.0), fit(below, variance / 2.0))


def limits_from_jumps(y_post=0.0, t_post=1.0, m_post=1.0, y_pre=0.0, m_pre=1.0, o_post=1.0, variance=0.0):
    return BoundaryLimits(
        y_post=pair(y_post, variance),
        t_post=pair(t_post, variance),
        m_post=pair(m_post, variance),
        y_pre=pair(y_pre, variance),
        m_pre=pair(m_pre, variance),
        o_post=pair(o_post, variance),
    )


def sharp_dataset(pre_jump=0.2, post_jump=0.5, slope=0.03, cutoff=65.0, points=41):
    """Noise-free cohorts with M = 1{x >= cutoff} (and O = M after the policy)."""
    x = np.linspace(cutoff - 4, cutoff + 4, points)
    above = (x >= cutoff).astype(int)
    cluster = np.floor((x - cutoff) / 0.25).astype(int)
    y_pre = 1.0 + slope * (x - cutoff) + pre_jump * above
    y_post = 1.2 + slope * (x - cutoff) + post_jump * above
    return Dataset(
        y=np.concatenate([y_pre, y_post]),
        x=np.concatenate([x, x]),
        post=np.r_[np.zeros(points, bool), np.ones(points, bool)],
        m=np.concatenate([above, above]),
        o=np.concatenate([np.zeros(points, int), above]),
        cluster=np.concatenate([cluster, cluster]),
    )


def fuzzy_cell_dataset(cutoff=65.0, points=33):
    """Four rows per grid point; one of four treated below, three of four above.

    Outcome is linear in x plus a cohort-specific effect of M: 0.2 before the
    policy and 0.5 after it, so the outcome jumps by 0.10 and 0.25.
    """
    grid = np.linspace(cutoff - 4, cutoff + 4, points)
    xs, ms, posts = [], [], []
    for post in (False, True):
        for x in grid:
            treated = 3 if x >= cutoff else 1
            for k in range(4):
                xs.append(x)
                ms.append(int(k < treated))
                posts.append(post)
    x, m, post = np.array(xs), np.array(ms), np.array(posts)
    effect = np.where(post, 0.5, 0.2)
    y = 0.4 + 0.02 * (x - cutoff) + 0.1 * post + effect * m
    return Dataset(
        y=y,
        x=x,
        post=post,
        m=m,
        o=np.where(post, m, 0),
        cluster=np.floor((x - cutoff) / 0.25).astype(int),
    )


def design(cutoff=65.0, half=4.0, **changes):
    return StudyDesign(cutoff=cutoff, window=(cutoff - half, cutoff + half), **changes)


def means(level, ate_o=0.25, gap_m=0.1, gap_o=0.25, slope=0.01):
    return {
        "00": (level, slope),
        "01": (level + gap_m, slope),
        "10": (level + gap_o, slope),
        "11": (level + gap_m + ate_o, slope),
    }


def dgp(joint_rule=JointRule.EQUAL, p_m_pre=(0.2, 0.7), p_m_post=(0.2, 0.7), p_o_post=None, n=2000,
        noise_sd=0.3, ate_o=0.25, gap_m=0.1, gap_o=0.25, gap_m_pre=None, **extra):
    return DGPSpec(
        cutoff=65.0,
        window=(61.0, 69.0),
        n_per_cohort=n,
        potential_means={
            "pre": means(0.3, ate_o, gap_m if gap_m_pre is None else gap_m_pre, gap_o),
            "post": means(0.3, ate_o, gap_m, gap_o),
        },
        p_m={"pre": StepProbability((p_m_pre[0],), (p_m_pre[1],)), "post": StepProbability((p_m_post[0],), (p_m_post[1],))},
        p_o_post=p_o_post if p_o_post is None or isinstance(p_o_post, StepProbability)
        else StepProbability((p_o_post[0],), (p_o_post[1],)),
        joint_rule=joint_rule,
        noise_sd=noise_sd,
        **extra,
    )
