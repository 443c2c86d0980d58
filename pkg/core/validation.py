from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import EmptyDataset, NonFiniteValue
from .models import Cohort, Side


@dataclass(frozen=True)
class ValidationReport:
    cell_counts: dict
    illegal_o_count: int
    violations_o_lt_m: int
    missing_counts: dict
    n_rows: int
    n_in_window: int

    @property
    def empty_cells(self):
        return tuple(cell for cell, count in self.cell_counts.items() if count == 0)

    @property
    def is_estimable(self):
        return not self.empty_cells and self.illegal_o_count == 0

    def as_dict(self):
        return {
            "cell_counts": dict(self.cell_counts),
            "illegal_o_count": self.illegal_o_count,
            "violations_o_lt_m": self.violations_o_lt_m,
            "missing_counts": dict(self.missing_counts),
            "n_rows": self.n_rows,
            "n_in_window": self.n_in_window,
        }


def _first_non_finite(values):
    bad = np.flatnonzero(~np.isfinite(values))
    return int(bad[0]) if bad.size else None


def validate(dataset, design):
    """Count observations per cohort and side inside the window and audit indicators.

    Rows are numbered from 1 in ``NonFiniteValue``. Cell keys are
    ``"<cohort>/<side>"``.
    """
    if len(dataset) == 0:
        raise EmptyDataset()
    for column in ("y", "x"):
        row = _first_non_finite(getattr(dataset, column))
        if row is not None:
            raise NonFiniteValue(row + 1, column)

    in_window = design.window_mask(dataset.x)
    above = design.above_mask(dataset.x)
    counts = {}
    for cohort in (Cohort.PRE, Cohort.POST):
        cohort_rows = in_window & dataset.cohort_mask(cohort)
        counts[f"{cohort.value}/{Side.BELOW.value}"] = int(np.sum(cohort_rows & ~above))
        counts[f"{cohort.value}/{Side.ABOVE.value}"] = int(np.sum(cohort_rows & above))

    missing = {"weight": int(np.sum(~np.isfinite(dataset.weight)))}
    for j, name in enumerate(dataset.column_names):
        missing[name] = int(np.sum(~np.isfinite(dataset.covariates[:, j])))

    return ValidationReport(
        cell_counts=counts,
        illegal_o_count=int(np.sum(~dataset.post & (dataset.o == 1))),
        violations_o_lt_m=int(np.sum(dataset.post & (dataset.o < dataset.m))),
        missing_counts=missing,
        n_rows=len(dataset),
        n_in_window=int(np.sum(in_window)),
    )
