"""Boundary limits of conditional means for both cohorts, and bandwidth selection."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .exceptions import InsufficientSupport, MissingLimits, SingularFit
from .kernels import KernelSpec, llr_boundary, side_mask
from .models import Cohort, Side, Variable, VarianceKind

logger = logging.getLogger(__name__)

# (label, cohort, variable) for every limit pair the estimators consume.
# Treatment cells come first so support failures name the first-stage cell.
LIMIT_CELLS = (
    ("m_pre", Cohort.PRE, Variable.M),
    ("y_pre", Cohort.PRE, Variable.Y),
    ("t_post", Cohort.POST, Variable.T),
    ("m_post", Cohort.POST, Variable.M),
    ("o_post", Cohort.POST, Variable.O),
    ("y_post", Cohort.POST, Variable.Y),
)


@dataclass(frozen=True)
class LocalFitPair:
    above: object
    below: object

    @property
    def jump(self):
        return self.above.intercept - self.below.intercept

    def jump_variance(self, vce=VarianceKind.CLUSTER):
        return self.above.variance(vce) + self.below.variance(vce)

    def jump_se(self, vce=VarianceKind.CLUSTER):
        return float(np.sqrt(self.jump_variance(vce)))

    @property
    def n_effective(self):
        return self.above.n_effective + self.below.n_effective

    def as_dict(self):
        return {"above": self.above.as_dict(), "below": self.below.as_dict(), "jump": self.jump}


@dataclass(frozen=True)
class BoundaryLimits:
    y_post: LocalFitPair
    t_post: LocalFitPair
    m_post: LocalFitPair
    y_pre: LocalFitPair
    m_pre: LocalFitPair
    o_post: LocalFitPair | None = None

    def pair(self, label):
        value = getattr(self, label, None)
        if value is None:
            raise MissingLimits(f"limit pair '{label}' was not estimated")
        return value

    def as_dict(self):
        return {
            label: self.pair(label).as_dict()
            for label, _, _ in LIMIT_CELLS
            if getattr(self, label) is not None
        }


def cohort_window_rows(dataset, design, cohort):
    return design.window_mask(dataset.x) & dataset.cohort_mask(cohort)


def estimate_boundary_limits(dataset, design):
    """Fit every one-sided limit the fuzzy difference-in-discontinuities needs.

    Post-cohort pairs use post rows only and pre-cohort pairs pre rows only, so
    the two cohort ratios are estimated on independent samples.
    """
    kernel = KernelSpec(design.kernel)
    pairs = {}
    for label, cohort, variable in LIMIT_CELLS:
        rows = cohort_window_rows(dataset, design, cohort)
        values = dataset.variable(variable)[rows]
        fits = {}
        for side in (Side.ABOVE, Side.BELOW):
            cell = f"{cohort.value}/{side.value}/{variable.value}"
            try:
                fits[side] = llr_boundary(
                    dataset.x[rows],
                    values,
                    side=side,
                    cutoff=design.cutoff,
                    h=design.bandwidths.for_cell(cohort, side),
                    kernel=kernel,
                    weight=dataset.weight[rows],
                    cluster=dataset.cluster[rows],
                    poly_order=design.poly_order,
                    at_cutoff_side=design.at_cutoff_side,
                )
            except (InsufficientSupport, SingularFit) as exc:
                raise exc.tagged(cell) from exc
        pairs[label] = LocalFitPair(above=fits[Side.ABOVE], below=fits[Side.BELOW])
    return BoundaryLimits(**pairs)


def _loo_errors(xs, vs, ws, h, above, kernel, eval_index):
    """Squared errors predicting each evaluation point from its outward neighbours only."""
    errors = []
    for i in eval_index:
        xi = xs[i]
        if above:
            lo, hi = np.searchsorted(xs, xi, "right"), np.searchsorted(xs, xi + h, "right")
        else:
            lo, hi = np.searchsorted(xs, xi - h, "left"), np.searchsorted(xs, xi, "left")
        d = xs[lo:hi] - xi
        w = ws[lo:hi] * kernel.weights(d / h)
        if np.count_nonzero(w) < 2:
            continue
        s0, s1, s2 = w.sum(), (w * d).sum(), (w * d * d).sum()
        det = s0 * s2 - s1 * s1
        if det <= 1e-14 * max(s0 * s2, 1e-300):
            continue
        t0, t1 = (w * vs[lo:hi]).sum(), (w * d * vs[lo:hi]).sum()
        fitted = (s2 * t0 - s1 * t1) / det
        errors.append((vs[i] - fitted) ** 2)
    return errors


def select_bandwidth(dataset, design, variable, cohort, grid_size=20, max_eval=200):
    """Leave-one-out cross-validated bandwidth for one variable in one cohort.

    Each evaluation point is predicted from a local linear fit on neighbours
    lying farther from the cutoff, mimicking estimation at a boundary. Points
    come from the half of each side closest to the cutoff. Ties go to the
    larger bandwidth.
    """
    cohort = Cohort(cohort)
    rows = cohort_window_rows(dataset, design, cohort)
    if rows.sum() < 20:
        raise InsufficientSupport(f"bandwidth selection needs 20 observations, found {int(rows.sum())}",
                                  cell=f"{cohort.value}/{Variable(variable).value}")
    kernel = KernelSpec(design.kernel)
    grid = np.geomspace(0.1, 1.0, grid_size) * design.half_width

    sides = []
    for side in (Side.ABOVE, Side.BELOW):
        on_side = side_mask(dataset.x, side, design.cutoff, design.at_cutoff_side) & rows
        order = np.argsort(dataset.x[on_side], kind="stable")
        xs = dataset.x[on_side][order]
        vs = np.asarray(dataset.variable(variable), dtype=float)[on_side][order]
        ws = dataset.weight[on_side][order]
        distance = np.abs(xs - design.cutoff)
        near = np.flatnonzero(distance <= np.median(distance)) if len(xs) else np.array([], dtype=int)
        if len(near) > max_eval:
            near = near[np.linspace(0, len(near) - 1, max_eval).astype(int)]
        sides.append((xs, vs, ws, side == Side.ABOVE, near))

    n_points = sum(len(near) for *_, near in sides)
    scores = np.full(len(grid), np.inf)
    for k, h in enumerate(grid):
        errors = []
        for xs, vs, ws, above, near in sides:
            errors.extend(_loo_errors(xs, vs, ws, h, above, kernel, near))
        if errors and len(errors) >= n_points / 2:
            scores[k] = float(np.mean(errors))

    if not np.isfinite(scores).any():
        raise InsufficientSupport("no bandwidth on the grid supports leave-one-out fits",
                                  cell=f"{cohort.value}/{Variable(variable).value}")
    best = scores.min()
    chosen = float(grid[np.flatnonzero(scores <= best + 1e-12 + 1e-9 * best).max()])
    logger.info("cross-validated bandwidth for %s/%s: %.6g", cohort.value, Variable(variable).value, chosen)
    return chosen
