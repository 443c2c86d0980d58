from core.cli import FDDCommand, design_dict, estimate_rows
from core.estimators import fuzzy_rd
from core.io import format_table
from core.limits import estimate_boundary_limits
from core.models import Cohort


class Command(FDDCommand):
    help = "Single-cohort fuzzy RD: the confounder alone before the policy, both policies after it."

    def run(self, config):
        dataset, design, report, warnings = self.estimation_sample(config)
        limits = estimate_boundary_limits(dataset, design)
        pre = fuzzy_rd(limits.y_pre, limits.m_pre, config.min_first_stage, design.vce, cohort=Cohort.PRE)
        post = fuzzy_rd(limits.y_post, limits.t_post, config.min_first_stage, design.vce, cohort=Cohort.POST)
        result = {
            "validation": report.as_dict(),
            "design": design_dict(design),
            "pre": pre.as_dict(),
            "post": post.as_dict(),
            "first_stage": {label: limits.pair(label).jump for label in ("m_pre", "t_post", "m_post", "o_post")},
        }
        table = estimate_rows(pre, "rd_pre") + estimate_rows(post, "rd_post")
        return result, format_table(("quantity", "value"), table), warnings
