"""Shared plumbing for the management commands."""

from __future__ import annotations

import logging
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from .diagnostics import AssumptionName, Verdict
from .exceptions import FDDError, InvalidConfig
from .forms import RunConfigForm
from .io import ingest_csv, read_config, render_document, subgroup_mask
from .limits import select_bandwidth
from .models import BandwidthSet, Cohort, Variable
from .validation import validate

logger = logging.getLogger(__name__)

# Keys left out of the recorded config so documents match across output paths and thread counts.
UNRECORDED_KEYS = {"out_json", "out_binned", "out_csv", "n_jobs", "config"}


class FDDCommand(BaseCommand):
    """Base for every subcommand.

    Subclasses implement ``add_command_arguments`` and ``run(config)``; the
    latter returns ``(result, table, warnings)``. Any ``FDDError`` becomes a
    one-line ``CommandError`` of the form ``"<code>: <message>"``.
    """

    requires_system_checks = []
    reads_dataset = True

    def add_arguments(self, parser):
        parser.add_argument("--config", help="key = value file; flags override its values")
        parser.add_argument("--seed", type=int)
        parser.add_argument("--alpha", type=float)
        parser.add_argument("--out-json", dest="out_json")
        parser.add_argument("--n-jobs", dest="n_jobs", type=int)
        parser.add_argument("--cutoff", type=float)
        parser.add_argument("--window", help="lo,hi")
        parser.add_argument("--kernel")
        parser.add_argument("--poly-order", dest="poly_order", type=int)
        parser.add_argument("--vce", help="cluster or robust")
        parser.add_argument("--min-first-stage", dest="min_first_stage", type=float)
        if self.reads_dataset:
            parser.add_argument("--input")
            parser.add_argument("--bandwidth", help="shared bandwidth, or 'cv' for cross-validation")
            for side in ("left", "right"):
                for cohort in ("pre", "post"):
                    parser.add_argument(f"--bw-{side}-{cohort}", dest=f"bw_{side}_{cohort}", type=float)
            parser.add_argument("--at-cutoff-side", dest="at_cutoff_side")
            parser.add_argument("--donut", type=float)
            for column in ("outcome", "running", "post", "m", "o", "cluster", "weight"):
                parser.add_argument(f"--{column}-col", dest=f"{column}_col")
            parser.add_argument("--covariates", help="comma-separated covariate columns")
            parser.add_argument("--where", help="keep rows where covariate column=value")
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def handle(self, *args, **options):
        try:
            values = self.merged_values(options)
            config = RunConfigForm(values).to_run_config()
            result, table, warnings = self.run(config)
            self.emit(values, config, result, table, warnings)
        except FDDError as exc:
            raise CommandError(f"{exc.code}: {exc}", returncode=exc.exit_status) from exc

    def merged_values(self, options):
        values = read_config(options["config"]) if options.get("config") else {}
        skip = {
            "verbosity", "settings", "pythonpath", "traceback", "no_color", "force_color", "skip_checks", "config",
            "stdout", "stderr",
        }
        for key, value in options.items():
            if key in skip or value is None or value is False:
                continue
            values[key] = "true" if value is True else str(value)
        return values

    def emit(self, values, config, result, table, warnings):
        recorded = {k: v for k, v in values.items() if k not in UNRECORDED_KEYS}
        document = render_document(self.command_name, recorded, result, warnings, settings.FDD_SCHEMA_VERSION)
        if config.out_json:
            Path(config.out_json).write_text(document, encoding="utf-8")
        self.stdout.write(table, ending="")
        for warning in warnings:
            self.stderr.write(self.style.WARNING(f"warning: {warning}"))

    @property
    def command_name(self):
        return self.__module__.rsplit(".", 1)[-1]

    def load_dataset(self, config):
        """Ingest, filter to the requested subgroup, and validate."""
        if not config.input:
            raise InvalidConfig("input is required")
        design = config.design()
        dataset = ingest_csv(config.input, config.mapping, cutoff=design.cutoff, bin_width=config.bin_width)
        self.kept_rows = None
        if config.where:
            mask = subgroup_mask(dataset, config.where)
            logger.info("subgroup %s keeps %d of %d rows", config.where, int(mask.sum()), len(dataset))
            dataset = dataset.subset(mask)
            self.kept_rows = mask
        report = validate(dataset, design)
        return dataset, report

    def resolve_design(self, config, dataset):
        """Design with cross-validated bandwidths when requested."""
        design = config.design()
        if not config.uses_cv_bandwidth:
            return design
        chosen = {cohort: select_bandwidth(dataset, design, Variable.Y, cohort) for cohort in Cohort}
        bandwidths = BandwidthSet(
            left_pre=config.cell_bandwidths.get("bw_left_pre", chosen[Cohort.PRE]),
            right_pre=config.cell_bandwidths.get("bw_right_pre", chosen[Cohort.PRE]),
            left_post=config.cell_bandwidths.get("bw_left_post", chosen[Cohort.POST]),
            right_post=config.cell_bandwidths.get("bw_right_post", chosen[Cohort.POST]),
        )
        return config.design(bandwidths)

    def estimation_sample(self, config):
        dataset, report = self.load_dataset(config)
        design = self.resolve_design(config, dataset)
        warnings = []
        if report.illegal_o_count:
            warnings.append(f"{report.illegal_o_count} pre-cohort rows have o = 1")
        if report.empty_cells:
            warnings.append("empty cells in window: " + ", ".join(report.empty_cells))
        return dataset, design, report, warnings


def estimate_rows(estimate, label="tau"):
    rows = [
        (label, estimate.tau),
        ("se", estimate.se),
        ("ci95_lo", estimate.ci95[0]),
        ("ci95_hi", estimate.ci95[1]),
    ]
    for name, delta in estimate.first_stage.discontinuities.items():
        rows.append((f"first_stage_{name}", delta))
    return rows


def design_dict(design):
    return {
        "cutoff": design.cutoff,
        "window": list(design.window),
        "kernel": design.kernel,
        "poly_order": design.poly_order,
        "bandwidths": design.bandwidths.as_dict(),
        "vce": design.vce,
        "donut": design.donut,
        "at_cutoff_side": design.at_cutoff_side,
    }


def report_rows(reports):
    return [(f"check_{AssumptionName(r.name).value}", Verdict(r.verdict).value) for r in reports]
