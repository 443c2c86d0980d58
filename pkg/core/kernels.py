"""Kernels and one-sided local polynomial fits at the cutoff."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .exceptions import InsufficientSupport, InvalidParameter, SingularFit, TooFewClusters
from .inference import cluster_robust_vcov, hc1_vcov
from .models import CutoffSide, Kernel, Side, VarianceKind

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class KernelSpec:
    family: Kernel = Kernel.TRIANGULAR

    def __post_init__(self):
        object.__setattr__(self, "family", Kernel(self.family))

    def weights(self, u):
        u = np.abs(np.asarray(u, dtype=float))
        if self.family == Kernel.TRIANGULAR:
            return np.maximum(0.0, 1.0 - u)
        if self.family == Kernel.UNIFORM:
            # Constant 1 rather than 1/2: only weight ratios matter in WLS.
            return (u <= 1.0).astype(float)
        return np.maximum(0.0, 0.75 * (1.0 - u**2))


def kernel_weight(spec, u):
    if not np.isfinite(u):
        raise InvalidParameter(f"kernel argument must be finite, got {u}")
    return float(spec.weights(u))


@dataclass(frozen=True)
class LocalFit:
    intercept: float
    slope: float
    n_effective: int
    hc_variance_intercept: float
    cluster_variance_intercept: float
    bandwidth: float = float("nan")
    n_clusters: int = 0
    curvature: float = 0.0

    def variance(self, vce=VarianceKind.CLUSTER):
        if VarianceKind(vce) == VarianceKind.CLUSTER:
            return self.cluster_variance_intercept
        return self.hc_variance_intercept

    def as_dict(self):
        return {
            "intercept": self.intercept,
            "slope": self.slope,
            "n_effective": self.n_effective,
            "hc_variance_intercept": self.hc_variance_intercept,
            "cluster_variance_intercept": self.cluster_variance_intercept,
            "bandwidth": self.bandwidth,
            "n_clusters": self.n_clusters,
        }


def side_mask(x, side, cutoff, at_cutoff_side=CutoffSide.TREATED):
    x = np.asarray(x, dtype=float)
    if CutoffSide(at_cutoff_side) == CutoffSide.TREATED:
        above = x >= cutoff
    else:
        above = x > cutoff
    return above if Side(side) == Side.ABOVE else ~above


def llr_boundary(
    x,
    v,
    side,
    cutoff,
    h,
    kernel=KernelSpec(),
    weight=None,
    cluster=None,
    poly_order=1,
    at_cutoff_side=CutoffSide.TREATED,
):
    """Kernel-weighted least squares of ``v`` on powers of ``x - cutoff`` on one side.

    The intercept estimates the one-sided limit of E[v | x] at the cutoff.
    Rows get weight ``weight * K((x - cutoff) / h)``; rows with zero weight are
    dropped before fitting.
    """
    if not h > 0:
        raise InvalidParameter(f"bandwidth must be positive, got {h}")
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    weight = np.ones(len(x)) if weight is None else np.asarray(weight, dtype=float)

    on_side = side_mask(x, side, cutoff, at_cutoff_side)
    w = weight[on_side] * kernel.weights((x[on_side] - cutoff) / h)
    keep = w > 0
    n_effective = int(keep.sum())
    if n_effective < 2:
        raise InsufficientSupport(f"{n_effective} rows with positive weight on the {Side(side).value} side")

    xc = x[on_side][keep] - cutoff
    if np.ptp(xc) == 0:
        raise InsufficientSupport("no spread in the running variable")
    w = w[keep]
    target = v[on_side][keep]

    regressors = np.column_stack([xc**p for p in range(poly_order + 1)])
    cross = regressors.T @ (regressors * w[:, None])
    if np.linalg.matrix_rank(cross) < regressors.shape[1]:
        raise SingularFit(f"local polynomial of order {poly_order} is rank deficient")
    coef = np.linalg.solve(cross, regressors.T @ (w * target))
    residuals = target - regressors @ coef

    hc_var = max(float(hc1_vcov(regressors, residuals, w)[0, 0]), 0.0)
    n_clusters = 0
    if cluster is None:
        cluster_var = hc_var
    else:
        groups = np.asarray(cluster)[on_side][keep]
        n_clusters = len(set(groups))
        try:
            cluster_var = max(float(cluster_robust_vcov(regressors, residuals, groups, w)[0, 0]), 0.0)
        except TooFewClusters:
            logger.debug("one-sided fit has %d cluster(s); using HC1 variance", n_clusters)
            cluster_var = hc_var

    return LocalFit(
        intercept=float(coef[0]),
        slope=float(coef[1]),
        n_effective=n_effective,
        hc_variance_intercept=hc_var,
        cluster_variance_intercept=cluster_var,
        bandwidth=float(h),
        n_clusters=n_clusters,
        curvature=float(coef[2]) if poly_order > 1 else 0.0,
    )
