from core.cli import FDDCommand
from core.exceptions import InvalidConfig
from core.io import format_table, write_csv
from core.simulation import dgp_from_config, generate_sample, true_estimands


class Command(FDDCommand):
    help = "Write one synthetic dataset drawn from the dgp.* keys, with its true effects."
    reads_dataset = False

    def add_command_arguments(self, parser):
        parser.add_argument("--out-csv", dest="out_csv")

    def run(self, config):
        if not config.out_csv:
            raise InvalidConfig("out_csv is required")
        spec = dgp_from_config(config.dgp)
        dataset = generate_sample(spec, config.seed)
        write_csv(dataset, config.out_csv)
        truth = true_estimands(spec)
        result = {"seed": config.seed, "n_rows": len(dataset), "truth": truth.as_dict()}
        rows = [("n_rows", len(dataset)), ("ate_o", truth.ate_o), ("tau_frd_limit", truth.tau_frd_limit)]
        return result, format_table(("quantity", "value"), rows), []
