"""CSV ingestion and export, the key=value config grammar, and result rendering."""

from __future__ import annotations

import csv
import json
import logging
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd

from .exceptions import EmptyDataset, FileNotFound, HeaderMismatch, InvalidConfig, InvalidParameter, ParseError
from .models import Cohort, Dataset, Variable

logger = logging.getLogger(__name__)

TRUE_WORDS = {"1": True, "true": True, "0": False, "false": False}
CONFIG_KEY = re.compile(r"^[a-z0-9]+(?:[._][a-z0-9]+)*$")


@dataclass(frozen=True)
class ColumnMapping:
    outcome: str = "y"
    running: str = "x"
    post: str = "post"
    m: str = "m"
    o: str = "o"
    cluster: str = "cluster"
    weight: str | None = None
    covariates: tuple[str, ...] = field(default_factory=tuple)

    @property
    def required(self):
        columns = [self.outcome, self.running, self.post, self.m]
        if self.weight:
            columns.append(self.weight)
        return columns + list(self.covariates)


def _read_frame(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFound(f"no such file: {path}")
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True, encoding="utf-8")
    except pd.errors.EmptyDataError as exc:
        raise HeaderMismatch(["<header>"]) from exc


def _numbers(frame, column, finite=False):
    """Exact float parse of one column; ``finite`` rejects nan and inf text too."""
    raw = frame[column].str.strip()
    # to_numeric only screens; it can drop the last digit of a 17-digit value.
    screened = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=float)
    if finite:
        bad = np.flatnonzero(~np.isfinite(screened))
    else:
        accepted = raw.str.lower().isin(["nan", "inf", "-inf", "+inf"]).to_numpy()
        bad = np.flatnonzero(np.isnan(screened) & ~accepted)
    if bad.size:
        row = int(bad[0])
        raise ParseError(row + 1, column, frame[column].iloc[row])
    return raw.to_numpy(dtype=object).astype(float)


def _flags(frame, column):
    lowered = frame[column].str.strip().str.lower()
    bad = np.flatnonzero(~lowered.isin(list(TRUE_WORDS)).to_numpy())
    if bad.size:
        row = int(bad[0])
        raise ParseError(row + 1, column, frame[column].iloc[row])
    return lowered.map(TRUE_WORDS).to_numpy(dtype=bool)


def quarter_bins(x, cutoff=0.0, bin_width=0.25):
    """Bin labels of width ``bin_width`` counted from the cutoff."""
    return np.floor((np.asarray(x, dtype=float) - cutoff) / bin_width).astype(int).astype(str)


def ingest_csv(path, mapping=ColumnMapping(), cutoff=0.0, bin_width=0.25):
    """Read a header-first, comma-separated file into a ``Dataset``.

    Row numbers in ``ParseError`` count data rows from 1. Without an o column,
    o copies m on post rows and is 0 elsewhere. Without a cluster column,
    rows are clustered by ``bin_width`` bins of the running variable.
    """
    frame = _read_frame(path)
    missing = [column for column in mapping.required if column not in frame.columns]
    if missing:
        raise HeaderMismatch(missing)
    if frame.empty:
        raise EmptyDataset(f"{path} has a header but no rows")

    post = _flags(frame, mapping.post)
    m = _flags(frame, mapping.m).astype(np.int8)
    if mapping.o in frame.columns:
        o = _flags(frame, mapping.o).astype(np.int8)
    else:
        o = np.where(post, m, 0).astype(np.int8)
        logger.info("no '%s' column in %s; using o = m on post rows and 0 elsewhere", mapping.o, path)

    x = _numbers(frame, mapping.running)
    if mapping.cluster in frame.columns:
        cluster = frame[mapping.cluster].str.strip().to_numpy()
    else:
        cluster = quarter_bins(x, cutoff, bin_width)
        logger.info("no '%s' column in %s; clustering by %.4g-wide running-variable bins",
                    mapping.cluster, path, bin_width)

    covariates = np.column_stack([_numbers(frame, c, finite=True) for c in mapping.covariates]) \
        if mapping.covariates else None
    try:
        return Dataset(
            y=_numbers(frame, mapping.outcome),
            x=x,
            post=post,
            m=m,
            o=o,
            cluster=cluster,
            weight=_numbers(frame, mapping.weight) if mapping.weight else None,
            covariates=covariates,
            column_names=mapping.covariates,
        )
    except InvalidParameter as exc:
        raise ParseError(0, "<dataset>", str(exc)) from exc


def read_flag_column(path, column):
    frame = _read_frame(path)
    if column not in frame.columns:
        raise HeaderMismatch([column])
    return _flags(frame, column)


def write_csv(dataset, path):
    """Write every core field at full float precision; ``ingest_csv`` reads it back unchanged."""
    header = ["y", "x", "post", "m", "o", "cluster", "weight", *dataset.column_names]
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for i in range(len(dataset)):
            writer.writerow([
                f"{dataset.y[i]:.17g}",
                f"{dataset.x[i]:.17g}",
                int(dataset.post[i]),
                int(dataset.m[i]),
                int(dataset.o[i]),
                dataset.cluster[i],
                f"{dataset.weight[i]:.17g}",
                *(f"{v:.17g}" for v in dataset.covariates[i]),
            ])
    return Path(path)


def subgroup_mask(dataset, expression):
    """Rows where a covariate equals a value, from ``"column=value"``."""
    column, sep, value = expression.partition("=")
    if not sep or not column.strip():
        raise InvalidParameter(f"subgroup filter must look like column=value, got '{expression}'")
    try:
        target = float(value)
    except ValueError as exc:
        raise InvalidParameter(f"subgroup value must be numeric, got '{value}'") from exc
    return dataset.covariate(column.strip()) == target


def parse_config(text, source="<config>"):
    """Parse ``key = value`` lines; ``#`` starts a comment and blank lines are skipped."""
    values = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not CONFIG_KEY.match(key):
            raise InvalidConfig(f"{source}:{number}: expected 'key = value', got '{line}'")
        values[key] = value.strip()
    return values


def read_config(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFound(f"no such file: {path}")
    return parse_config(path.read_text(encoding="utf-8"), str(path))


def write_config(values, path):
    lines = [f"{key} = {values[key]}" for key in sorted(values)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass(frozen=True, eq=False)
class BinnedSeries:
    centers: np.ndarray
    means: np.ndarray
    counts: np.ndarray
    cohort: Cohort
    variable: Variable

    def as_dict(self):
        return {
            "cohort": Cohort(self.cohort).value,
            "variable": Variable(self.variable).value,
            "centers": self.centers.tolist(),
            "means": self.means.tolist(),
            "counts": self.counts.tolist(),
        }


def bin_series(dataset, design, variable=Variable.Y, bin_width=0.25):
    """Per-cohort means of a variable in ``bin_width`` bins anchored at the cutoff."""
    if not bin_width > 0:
        raise InvalidParameter(f"bin width must be positive, got {bin_width}")
    variable = Variable(variable)
    rows = design.window_mask(dataset.x)
    frame = pd.DataFrame({
        "bin": np.floor((dataset.x - design.cutoff) / bin_width).astype(int),
        "value": np.asarray(dataset.variable(variable), dtype=float),
        "post": dataset.post,
    })[rows]
    series = []
    for cohort in (Cohort.PRE, Cohort.POST):
        part = frame[frame["post"] == (cohort == Cohort.POST)]
        grouped = part.groupby("bin", sort=True)["value"].agg(["mean", "count"])
        series.append(BinnedSeries(
            centers=design.cutoff + (grouped.index.to_numpy(dtype=float) + 0.5) * bin_width,
            means=grouped["mean"].to_numpy(dtype=float),
            counts=grouped["count"].to_numpy(dtype=int),
            cohort=cohort,
            variable=variable,
        ))
    return series


def write_binned_tsv(series, path):
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, delimiter="\t", lineterminator="\n")
        writer.writerow(["bin_center", "mean", "count", "cohort"])
        for s in series:
            for center, mean, count in zip(s.centers, s.means, s.counts):
                writer.writerow([f"{center:.12g}", f"{mean:.17g}", int(count), Cohort(s.cohort).value])
    return Path(path)


def to_plain(value):
    """JSON-ready copy: 12 significant digits, non-finite floats as null."""
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {str(to_plain(k)): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [to_plain(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            return None
        return float(f"{value:.12g}")
    if value is None or isinstance(value, str):
        return value
    if hasattr(value, "as_dict"):
        return to_plain(value.as_dict())
    return str(value)


def render_document(command, config, result, warnings=(), schema_version="1.0"):
    document = {
        "schema_version": schema_version,
        "command": command,
        "config": config,
        "result": result,
        "warnings": list(warnings),
    }
    return json.dumps(to_plain(document), sort_keys=True, indent=2) + "\n"


def format_table(headers, rows):
    """Left-aligned label column, right-aligned values."""
    def cell(value):
        if isinstance(value, float):
            return "nan" if not math.isfinite(value) else f"{value:.6g}"
        return "" if value is None else str(value)

    text_rows = [[cell(v) for v in row] for row in rows]
    widths = [max(len(str(h)), *(len(r[i]) for r in text_rows)) if text_rows else len(str(h))
              for i, h in enumerate(headers)]
    lines = []
    for row in [list(map(str, headers))] + text_rows:
        first, *rest = row
        lines.append("  ".join([first.ljust(widths[0])] + [v.rjust(w) for v, w in zip(rest, widths[1:])]))
    return "\n".join(lines) + "\n"
