from core.cli import FDDCommand, design_dict
from core.exceptions import InvalidConfig
from core.io import bin_series, format_table, write_binned_tsv


class Command(FDDCommand):
    help = "Per-cohort bin means of a variable around the cutoff, as a tab-separated file."

    def add_command_arguments(self, parser):
        parser.add_argument("--out-binned", dest="out_binned")
        parser.add_argument("--bin-width", dest="bin_width", type=float)
        parser.add_argument("--variable", help="Y, T, M or O")

    def run(self, config):
        if not config.out_binned:
            raise InvalidConfig("out_binned is required")
        dataset, report = self.load_dataset(config)
        design = config.design()
        series = bin_series(dataset, design, config.variable, config.bin_width)
        write_binned_tsv(series, config.out_binned)
        result = {
            "design": design_dict(design),
            "bin_width": config.bin_width,
            "series": [s.as_dict() for s in series],
        }
        rows = [(s.cohort.value, f"{len(s.centers)} bins, {int(s.counts.sum())} rows") for s in series]
        return result, format_table(("cohort", "bins"), rows), []
