from core.cli import FDDCommand, design_dict, report_rows
from core.diagnostics import placebo_diff_in_disc
from core.exceptions import InvalidConfig
from core.io import format_table, read_flag_column


class Command(FDDCommand):
    help = "Placebo difference-in-discontinuities between two groups never exposed to the policy."

    def add_command_arguments(self, parser):
        parser.add_argument("--pseudo-post-col", dest="pseudo_post_col", help="0/1 column marking the pseudo-post group")
        parser.add_argument("--split", help="adjacent_pre_periods or untreated_region")

    def run(self, config):
        if not config.pseudo_post_col:
            raise InvalidConfig("pseudo_post_col is required")
        dataset, report = self.load_dataset(config)
        design = self.resolve_design(config, dataset)
        pseudo_post = read_flag_column(config.input, config.pseudo_post_col)
        if self.kept_rows is not None:
            pseudo_post = pseudo_post[self.kept_rows]
        placebo = placebo_diff_in_disc(
            dataset, design, pseudo_post, config.split, config.alpha, config.min_first_stage
        )
        result = {"validation": report.as_dict(), "design": design_dict(design), "report": placebo.as_dict()}
        estimate = placebo.details["estimate"]
        rows = [("tau", estimate["tau"]), ("se", estimate["se"]), ("p_value", placebo.p_value)]
        rows += report_rows([placebo])
        return result, format_table(("quantity", "value"), rows), []
