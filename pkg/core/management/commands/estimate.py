from django.conf import settings

from core.cli import FDDCommand, design_dict, estimate_rows, report_rows
from core.diagnostics import diagnostics_summary
from core.estimators import EstimatorMethod, correct_estimate, fuzzy_diff_in_disc, run_estimator
from core.exceptions import FDDError
from core.forms import InferenceKind
from core.inference import cluster_bootstrap
from core.io import format_table
from core.limits import estimate_boundary_limits


class Command(FDDCommand):
    help = "Estimate the effect of the policy of interest with the fuzzy difference-in-discontinuities."

    def add_command_arguments(self, parser):
        parser.add_argument("--method", help="nonparametric_ratio, theorem3a, theorem3b or two_stage_ls")
        parser.add_argument("--spec", help="2SLS model: simplified or full")
        parser.add_argument("--controls", help="covariates entering the 2SLS model")
        parser.add_argument("--corrections", help="extra corrected estimates: theorem3a,theorem3b")
        parser.add_argument("--inference", help="delta or bootstrap")
        parser.add_argument("--bootstrap-reps", dest="bootstrap_reps", type=int)
        parser.add_argument("--diagnostics", help="true or false")

    def run(self, config):
        dataset, design, report, warnings = self.estimation_sample(config)
        options = {
            "method": config.method,
            "spec": config.spec,
            "covariates": config.controls or None,
            "min_first_stage": config.min_first_stage,
            "weak_f_threshold": settings.FDD_WEAK_F_THRESHOLD,
        }
        estimate = run_estimator(dataset, design, **options)
        warnings.extend(estimate.warnings)
        result = {"validation": report.as_dict(), "design": design_dict(design), "estimate": estimate.as_dict()}
        table = estimate_rows(estimate)

        limits = None
        if config.corrections or config.diagnostics:
            limits = estimate_boundary_limits(dataset, design)
        if config.corrections:
            base = fuzzy_diff_in_disc(limits, config.min_first_stage, design.vce)
            corrected = {}
            for method in config.corrections:
                try:
                    value = correct_estimate(base, limits, method, design.vce)
                except FDDError as exc:
                    corrected[method.value] = {"error": f"{exc.code}: {exc}"}
                    warnings.append(f"{method.value} correction failed: {exc}")
                    continue
                corrected[method.value] = value.as_dict()
                table.append((method.value, value.tau))
            result["corrections"] = corrected

        if config.inference == InferenceKind.BOOTSTRAP:
            boot = cluster_bootstrap(
                dataset,
                design,
                lambda sample: run_estimator(sample, design, **options).tau,
                reps=config.bootstrap_reps,
                seed=config.seed,
                n_jobs=config.n_jobs,
                failure_warn=settings.FDD_BOOTSTRAP_FAILURE_WARN,
            )
            warnings.extend(boot.warnings)
            result["bootstrap"] = boot.as_dict()
            table += [
                ("bootstrap_se", boot.se),
                ("bootstrap_ci_lo", boot.ci_percentile_95[0]),
                ("bootstrap_ci_hi", boot.ci_percentile_95[1]),
            ]

        if config.diagnostics:
            reports = diagnostics_summary(
                dataset, design, limits, config.alpha, config.mapping.covariates, config.min_first_stage
            )
            result["diagnostics"] = [r.as_dict() for r in reports]
            table += report_rows(reports)

        result["method"] = EstimatorMethod(config.method).value
        return result, format_table(("quantity", "value"), table), warnings

