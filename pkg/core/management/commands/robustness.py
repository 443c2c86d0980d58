from django.conf import settings

from core.cli import FDDCommand, design_dict
from core.estimators import ROBUSTNESS_VARIANTS, robustness_grid
from core.exceptions import FDDError
from core.io import format_table


class Command(FDDCommand):
    help = "Re-run the headline estimate with quadratic controls, halved bandwidths and a donut."

    def add_command_arguments(self, parser):
        parser.add_argument("--method", help="nonparametric_ratio, theorem3a, theorem3b or two_stage_ls")
        parser.add_argument("--spec", help="2SLS model: simplified or full")
        parser.add_argument("--controls", help="covariates entering the 2SLS model")

    def run(self, config):
        dataset, design, report, warnings = self.estimation_sample(config)
        donut = config.donut or config.bin_width
        results = robustness_grid(
            dataset,
            design.with_changes(donut=0.0),
            ROBUSTNESS_VARIANTS,
            donut=donut,
            method=config.method,
            spec=config.spec,
            covariates=config.controls or None,
            min_first_stage=config.min_first_stage,
            weak_f_threshold=settings.FDD_WEAK_F_THRESHOLD,
        )
        variants, rows = {}, []
        for name, outcome in results.items():
            if isinstance(outcome, FDDError):
                variants[name] = {"error": f"{outcome.code}: {outcome}"}
                warnings.append(f"{name} variant failed: {outcome}")
                rows.append((name, outcome.code, None))
                continue
            variants[name] = outcome.as_dict()
            warnings.extend(outcome.warnings)
            rows.append((name, outcome.tau, outcome.se))
        result = {"validation": report.as_dict(), "design": design_dict(design), "donut": donut, "variants": variants}
        return result, format_table(("variant", "tau", "se"), rows), warnings
