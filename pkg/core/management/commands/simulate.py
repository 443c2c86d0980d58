from dataclasses import replace

from django.conf import settings

from core.cli import FDDCommand, design_dict
from core.io import format_table
from core.simulation import dgp_from_config, monte_carlo_study, true_estimands


def dgp_and_config(config):
    """DGP from the ``dgp.*`` keys; cutoff and window default to the DGP's own."""
    spec = dgp_from_config(config.dgp)
    config = replace(
        config,
        cutoff=spec.cutoff if config.cutoff is None else config.cutoff,
        window=spec.window if config.window is None else config.window,
    )
    return spec, config


class Command(FDDCommand):
    help = "Monte Carlo study of one estimator on a data-generating process described by dgp.* keys."
    reads_dataset = False

    def add_command_arguments(self, parser):
        parser.add_argument("--method", help="nonparametric_ratio, theorem3a, theorem3b or two_stage_ls")
        parser.add_argument("--spec", help="2SLS model: simplified or full")
        parser.add_argument("--reps", type=int)

    def run(self, config):
        spec, config = dgp_and_config(config)
        design = config.design()
        truth = true_estimands(spec)
        report = monte_carlo_study(
            spec,
            design,
            method=config.method,
            reps=config.reps,
            seed=config.seed,
            n_jobs=config.n_jobs,
            two_sls_spec=config.spec,
            alpha=config.alpha,
            min_first_stage=config.min_first_stage,
            failure_warn=settings.FDD_BOOTSTRAP_FAILURE_WARN,
        )
        result = {"design": design_dict(design), "truth": truth.as_dict(), "study": report.as_dict()}
        rows = [
            ("target", f"{report.target_name}={report.target:.6g}"),
            ("mean_estimate", report.mean_estimate),
            ("mean_bias", report.mean_bias),
            ("bias_vs_ate_o", report.bias_vs_ate_o),
            ("empirical_sd", report.empirical_sd),
            ("mean_se", report.mean_se),
            ("rmse", report.rmse),
            ("coverage", report.coverage),
            ("n_failed", report.n_failed),
        ]
        return result, format_table(("quantity", "value"), rows), list(report.warnings)
