from core.cli import FDDCommand, design_dict, report_rows
from core.diagnostics import assumed_conditions, check_dominance, covariate_smoothness, test_equal_discontinuities
from core.io import format_table
from core.limits import estimate_boundary_limits


class Command(FDDCommand):
    help = "Report every assumption check: equal first stages, dominance, covariate smoothness."

    def add_command_arguments(self, parser):
        parser.add_argument("--covariate", help="check only this covariate")

    def run(self, config):
        dataset, design, report, warnings = self.estimation_sample(config)
        limits = estimate_boundary_limits(dataset, design)
        reports = [
            test_equal_discontinuities(limits, config.alpha, vce=design.vce),
            test_equal_discontinuities(limits, config.alpha, include_t=True, vce=design.vce),
            check_dominance(dataset),
        ]
        covariates = (config.covariate,) if config.covariate else dataset.column_names
        for name in covariates:
            reports.append(covariate_smoothness(dataset, design, name, config.alpha, config.min_first_stage))
        reports.extend(assumed_conditions())
        result = {
            "validation": report.as_dict(),
            "design": design_dict(design),
            "reports": [r.as_dict() for r in reports],
        }
        rows = report_rows(reports)
        rows[1] = ("check_equal_discontinuities_with_t", rows[1][1])
        return result, format_table(("check", "verdict"), rows), warnings
