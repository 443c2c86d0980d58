"""Domain types shared by estimation, diagnostics and simulation.

Nothing here is persisted: the enums reuse Django's ``TextChoices`` so they
serialize as plain strings, and the containers are frozen dataclasses over
read-only numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from django.db import models

from .exceptions import InvalidParameter


class Kernel(models.TextChoices):
    TRIANGULAR = "triangular", "Triangular"
    UNIFORM = "uniform", "Uniform"
    EPANECHNIKOV = "epanechnikov", "Epanechnikov"


class Side(models.TextChoices):
    ABOVE = "above", "Above cutoff"
    BELOW = "below", "Below cutoff"


class Cohort(models.TextChoices):
    PRE = "pre", "Pre-policy cohort"
    POST = "post", "Post-policy cohort"


class CutoffSide(models.TextChoices):
    TREATED = "treated", "Treated side"
    CONTROL = "control", "Control side"


class Variable(models.TextChoices):
    Y = "Y", "Outcome"
    T = "T", "Joint treatment (O*M)"
    M = "M", "Confounding policy"
    O = "O", "Policy of interest"


class VarianceKind(models.TextChoices):
    CLUSTER = "cluster", "Cluster-robust (CR1)"
    ROBUST = "robust", "Heteroskedasticity-robust (HC1)"


@dataclass(frozen=True)
class Observation:
    y: float
    x: float
    post: bool
    m: int
    o: int
    cluster: str
    weight: float = 1.0
    covariates: tuple[float, ...] = ()

    @property
    def t(self):
        return self.m * self.o


@dataclass(frozen=True)
class BandwidthSet:
    left_pre: float
    right_pre: float
    left_post: float
    right_post: float

    def __post_init__(self):
        for name in ("left_pre", "right_pre", "left_post", "right_post"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise InvalidParameter(f"bandwidth {name} must be positive, got {value}")

    @classmethod
    def shared(cls, h):
        return cls(h, h, h, h)

    def for_cell(self, cohort, side):
        left = side == Side.BELOW
        if cohort == Cohort.PRE:
            return self.left_pre if left else self.right_pre
        return self.left_post if left else self.right_post

    def scaled(self, factor):
        return BandwidthSet(
            self.left_pre * factor,
            self.right_pre * factor,
            self.left_post * factor,
            self.right_post * factor,
        )

    def as_dict(self):
        return {
            "left_pre": self.left_pre,
            "right_pre": self.right_pre,
            "left_post": self.left_post,
            "right_post": self.right_post,
        }


@dataclass(frozen=True)
class StudyDesign:
    """Cutoff, estimation window and local-regression settings.

    When no bandwidths are given every cell uses the distance from the cutoff
    to the farther window edge, i.e. the whole window with linear controls.
    """

    cutoff: float
    window: tuple[float, float]
    kernel: Kernel = Kernel.TRIANGULAR
    bandwidths: BandwidthSet | None = None
    poly_order: int = 1
    at_cutoff_side: CutoffSide = CutoffSide.TREATED
    vce: VarianceKind = VarianceKind.CLUSTER
    donut: float = 0.0

    def __post_init__(self):
        lo, hi = self.window
        if not (lo < self.cutoff < hi):
            raise InvalidParameter(
                f"window ({lo}, {hi}) must strictly contain the cutoff {self.cutoff}"
            )
        if self.poly_order not in (1, 2):
            raise InvalidParameter(f"poly_order must be 1 or 2, got {self.poly_order}")
        if self.donut < 0 or self.donut >= min(self.cutoff - lo, hi - self.cutoff):
            raise InvalidParameter(f"donut {self.donut} must lie in [0, window half-width)")
        object.__setattr__(self, "kernel", Kernel(self.kernel))
        object.__setattr__(self, "at_cutoff_side", CutoffSide(self.at_cutoff_side))
        object.__setattr__(self, "vce", VarianceKind(self.vce))
        if self.bandwidths is None:
            object.__setattr__(self, "bandwidths", BandwidthSet.shared(self.default_bandwidth))

    @property
    def default_bandwidth(self):
        lo, hi = self.window
        return max(self.cutoff - lo, hi - self.cutoff)

    @property
    def half_width(self):
        lo, hi = self.window
        return (hi - lo) / 2.0

    def above_mask(self, x):
        """Rows on the treated side, honoring where ``x == cutoff`` belongs."""
        x = np.asarray(x, dtype=float)
        if self.at_cutoff_side == CutoffSide.TREATED:
            return x >= self.cutoff
        return x > self.cutoff

    def window_mask(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.window
        mask = (x >= lo) & (x <= hi)
        if self.donut > 0:
            mask &= np.abs(x - self.cutoff) >= self.donut
        return mask

    def with_changes(self, **changes):
        return replace(self, **changes)


def _frozen(values, dtype):
    array = np.array(values, dtype=dtype)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Dataset:
    """Pooled cross-section of observations in columnar form."""

    y: np.ndarray
    x: np.ndarray
    post: np.ndarray
    m: np.ndarray
    o: np.ndarray
    cluster: np.ndarray
    weight: np.ndarray | None = None
    covariates: np.ndarray | None = None
    column_names: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        n = len(self.y)
        object.__setattr__(self, "y", _frozen(self.y, float))
        object.__setattr__(self, "x", _frozen(self.x, float))
        object.__setattr__(self, "post", _frozen(self.post, bool))
        object.__setattr__(self, "m", _frozen(self.m, np.int8))
        object.__setattr__(self, "o", _frozen(self.o, np.int8))
        object.__setattr__(self, "cluster", _frozen(np.asarray(self.cluster).astype(str), object))
        weight = np.ones(n) if self.weight is None else self.weight
        object.__setattr__(self, "weight", _frozen(weight, float))
        covariates = np.empty((n, 0)) if self.covariates is None else self.covariates
        covariates = np.asarray(covariates, dtype=float)
        if covariates.ndim != 2:
            covariates = covariates.reshape(n, -1)
        object.__setattr__(self, "covariates", _frozen(covariates, float))
        object.__setattr__(self, "column_names", tuple(self.column_names))

        for name in ("x", "post", "m", "o", "cluster", "weight", "covariates"):
            if len(getattr(self, name)) != n:
                raise InvalidParameter(f"column '{name}' has {len(getattr(self, name))} rows, expected {n}")
        if self.covariates.shape[1] != len(self.column_names):
            raise InvalidParameter(
                f"{self.covariates.shape[1]} covariate columns but {len(self.column_names)} names"
            )
        if not np.isin(self.m, (0, 1)).all() or not np.isin(self.o, (0, 1)).all():
            raise InvalidParameter("m and o must be 0/1 indicators")
        if (self.weight < 0).any():
            raise InvalidParameter("weights must be nonnegative")

    def __len__(self):
        return len(self.y)

    @property
    def t(self):
        """Joint treatment indicator, computed on demand."""
        return (self.m * self.o).astype(np.int8)

    @property
    def observations(self):
        return tuple(
            Observation(
                y=float(self.y[i]),
                x=float(self.x[i]),
                post=bool(self.post[i]),
                m=int(self.m[i]),
                o=int(self.o[i]),
                cluster=str(self.cluster[i]),
                weight=float(self.weight[i]),
                covariates=tuple(float(v) for v in self.covariates[i]),
            )
            for i in range(len(self))
        )

    @classmethod
    def from_observations(cls, observations, column_names=()):
        observations = list(observations)
        k = len(column_names)
        return cls(
            y=[ob.y for ob in observations],
            x=[ob.x for ob in observations],
            post=[ob.post for ob in observations],
            m=[ob.m for ob in observations],
            o=[ob.o for ob in observations],
            cluster=[ob.cluster for ob in observations],
            weight=[ob.weight for ob in observations],
            covariates=np.array([ob.covariates for ob in observations], dtype=float).reshape(len(observations), k),
            column_names=column_names,
        )

    def variable(self, name):
        """Column for a ``Variable`` name; ``Y``/``T``/``M``/``O``."""
        name = Variable(name)
        if name == Variable.Y:
            return self.y
        if name == Variable.T:
            return self.t
        if name == Variable.M:
            return self.m
        return self.o

    def covariate(self, index_or_name):
        if isinstance(index_or_name, str):
            if index_or_name not in self.column_names:
                raise InvalidParameter(f"unknown covariate '{index_or_name}'")
            index_or_name = self.column_names.index(index_or_name)
        if not 0 <= index_or_name < self.covariates.shape[1]:
            raise InvalidParameter(f"covariate index {index_or_name} out of range")
        return self.covariates[:, index_or_name]

    def subset(self, mask):
        mask = np.asarray(mask, dtype=bool)
        return Dataset(
            y=self.y[mask],
            x=self.x[mask],
            post=self.post[mask],
            m=self.m[mask],
            o=self.o[mask],
            cluster=self.cluster[mask],
            weight=self.weight[mask],
            covariates=self.covariates[mask],
            column_names=self.column_names,
        )

    def take(self, indices):
        indices = np.asarray(indices, dtype=np.intp)
        return Dataset(
            y=self.y[indices],
            x=self.x[indices],
            post=self.post[indices],
            m=self.m[indices],
            o=self.o[indices],
            cluster=self.cluster[indices],
            weight=self.weight[indices],
            covariates=self.covariates[indices],
            column_names=self.column_names,
        )

    def with_columns(self, **columns):
        """Copy with some columns replaced, e.g. ``with_columns(y=covariate)``."""
        fields = {
            "y": self.y,
            "x": self.x,
            "post": self.post,
            "m": self.m,
            "o": self.o,
            "cluster": self.cluster,
            "weight": self.weight,
            "covariates": self.covariates,
            "column_names": self.column_names,
        }
        fields.update(columns)
        return Dataset(**fields)

    def cohort_mask(self, cohort):
        return self.post if Cohort(cohort) == Cohort.POST else ~self.post
