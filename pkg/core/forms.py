from dataclasses import dataclass, field

from django import forms
from django.conf import settings

from .diagnostics import PlaceboSplit
from .estimators import EstimatorMethod, TwoSLSSpec
from .exceptions import InvalidConfig
from .io import ColumnMapping
from .models import BandwidthSet, CutoffSide, Kernel, StudyDesign, Variable, VarianceKind

CELL_BANDWIDTHS = ("bw_left_pre", "bw_right_pre", "bw_left_post", "bw_right_post")


class InferenceKind:
    DELTA = "delta"
    BOOTSTRAP = "bootstrap"
    choices = [(DELTA, "Delta method"), (BOOTSTRAP, "Cluster bootstrap")]


@dataclass(frozen=True)
class RunConfig:
    input: str | None
    mapping: ColumnMapping
    cutoff: float | None
    window: tuple[float, float] | None
    kernel: Kernel
    bandwidth: float | str | None
    cell_bandwidths: dict
    poly_order: int
    at_cutoff_side: CutoffSide
    vce: VarianceKind
    donut: float
    method: EstimatorMethod
    spec: TwoSLSSpec
    controls: tuple[str, ...]
    corrections: tuple[EstimatorMethod, ...]
    inference: str
    bootstrap_reps: int
    seed: int
    alpha: float
    min_first_stage: float
    diagnostics: bool
    out_json: str | None
    out_binned: str | None
    out_csv: str | None
    bin_width: float
    where: str | None
    n_jobs: int
    reps: int
    variable: Variable
    pseudo_post_col: str | None
    split: PlaceboSplit
    covariate: str | None
    dgp: dict = field(default_factory=dict)

    @property
    def uses_cv_bandwidth(self):
        return self.bandwidth == "cv"

    def design(self, bandwidths=None):
        """``StudyDesign`` from the cutoff, window and local-fit settings."""
        if self.cutoff is None or self.window is None:
            raise InvalidConfig("cutoff and window are required")
        design = StudyDesign(
            cutoff=self.cutoff,
            window=self.window,
            kernel=self.kernel,
            poly_order=self.poly_order,
            at_cutoff_side=self.at_cutoff_side,
            vce=self.vce,
            donut=self.donut,
        )
        if bandwidths is not None:
            return design.with_changes(bandwidths=bandwidths)
        base = self.bandwidth if isinstance(self.bandwidth, float) else design.default_bandwidth
        if isinstance(self.bandwidth, float) or self.cell_bandwidths:
            cells = {name.removeprefix("bw_"): self.cell_bandwidths.get(name, base) for name in CELL_BANDWIDTHS}
            design = design.with_changes(bandwidths=BandwidthSet(**cells))
        return design


def _choice(enum):
    return forms.ChoiceField(choices=enum.choices, required=False)


class RunConfigForm(forms.Form):
    """Validates the merged config-file and command-line values of one run."""

    input = forms.CharField(required=False)
    outcome_col = forms.CharField(required=False)
    running_col = forms.CharField(required=False)
    post_col = forms.CharField(required=False)
    m_col = forms.CharField(required=False)
    o_col = forms.CharField(required=False)
    cluster_col = forms.CharField(required=False)
    weight_col = forms.CharField(required=False)
    covariates = forms.CharField(required=False)

    cutoff = forms.FloatField(required=False)
    window = forms.CharField(required=False)
    bandwidth = forms.CharField(required=False)
    bw_left_pre = forms.FloatField(required=False)
    bw_right_pre = forms.FloatField(required=False)
    bw_left_post = forms.FloatField(required=False)
    bw_right_post = forms.FloatField(required=False)
    kernel = _choice(Kernel)
    poly_order = forms.TypedChoiceField(choices=[("1", "1"), ("2", "2")], coerce=int, required=False)
    at_cutoff_side = _choice(CutoffSide)
    vce = _choice(VarianceKind)
    donut = forms.FloatField(required=False, min_value=0.0)

    method = _choice(EstimatorMethod)
    spec = _choice(TwoSLSSpec)
    controls = forms.CharField(required=False)
    corrections = forms.CharField(required=False)
    inference = forms.ChoiceField(choices=InferenceKind.choices, required=False)
    bootstrap_reps = forms.IntegerField(required=False, min_value=0)
    seed = forms.IntegerField(required=False)
    alpha = forms.FloatField(required=False)
    min_first_stage = forms.FloatField(required=False, min_value=0.0)
    diagnostics = forms.BooleanField(required=False)
    n_jobs = forms.IntegerField(required=False)
    reps = forms.IntegerField(required=False, min_value=1)

    out_json = forms.CharField(required=False)
    out_binned = forms.CharField(required=False)
    out_csv = forms.CharField(required=False)
    bin_width = forms.FloatField(required=False)
    variable = _choice(Variable)
    where = forms.CharField(required=False)
    pseudo_post_col = forms.CharField(required=False)
    split = _choice(PlaceboSplit)
    covariate = forms.CharField(required=False)

    def __init__(self, data, *args, **kwargs):
        # dgp.* keys describe a simulation spec and bypass field validation.
        self.dgp = {k: v for k, v in data.items() if k.startswith("dgp.")}
        unknown = sorted(k for k in data if k not in self.base_fields and not k.startswith("dgp."))
        super().__init__({k: v for k, v in data.items() if k in self.base_fields}, *args, **kwargs)
        self.unknown = unknown

    def clean_window(self):
        raw = self.cleaned_data.get("window")
        if not raw:
            return None
        try:
            lo, hi = (float(part) for part in raw.split(","))
        except ValueError:
            raise forms.ValidationError("Give the window as two numbers: lo,hi.")
        if not lo < hi:
            raise forms.ValidationError("Window lower bound must be below the upper bound.")
        return (lo, hi)

    def clean_bandwidth(self):
        raw = (self.cleaned_data.get("bandwidth") or "").strip().lower()
        if not raw:
            return None
        if raw == "cv":
            return raw
        try:
            value = float(raw)
        except ValueError:
            raise forms.ValidationError("Bandwidth must be a positive number or 'cv'.")
        if not value > 0:
            raise forms.ValidationError("Bandwidth must be positive.")
        return value

    def clean_corrections(self):
        names = [part.strip() for part in (self.cleaned_data.get("corrections") or "").split(",") if part.strip()]
        allowed = {EstimatorMethod.THEOREM3A.value, EstimatorMethod.THEOREM3B.value}
        unknown = [name for name in names if name not in allowed]
        if unknown:
            raise forms.ValidationError(f"Unknown correction: {', '.join(unknown)}.")
        return ",".join(names)

    def clean_alpha(self):
        alpha = self.cleaned_data.get("alpha")
        if alpha is None:
            return settings.FDD_ALPHA
        if not 0 < alpha < 1:
            raise forms.ValidationError("Alpha must lie strictly between 0 and 1.")
        return alpha

    def clean_bin_width(self):
        width = self.cleaned_data.get("bin_width")
        if width is None:
            return settings.FDD_BIN_WIDTH
        if not width > 0:
            raise forms.ValidationError("Bin width must be positive.")
        return width

    def clean(self):
        cleaned = super().clean()
        if self.unknown:
            raise forms.ValidationError(f"Unknown keys: {', '.join(self.unknown)}.")
        for name in CELL_BANDWIDTHS:
            value = cleaned.get(name)
            if value is not None and not value > 0:
                self.add_error(name, "Bandwidths must be positive.")
        window, cutoff = cleaned.get("window"), cleaned.get("cutoff")
        if window and cutoff is not None and not window[0] < cutoff < window[1]:
            raise forms.ValidationError("The window must strictly contain the cutoff.")
        reps = cleaned.get("bootstrap_reps") or 0
        inference = cleaned.get("inference")
        if (inference == InferenceKind.BOOTSTRAP or (not inference and reps)) and reps < 100:
            self.add_error("bootstrap_reps", "Bootstrap inference needs at least 100 replicates.")
        return cleaned

    def error_text(self):
        parts = []
        for name, errors in self.errors.items():
            label = "config" if name == "__all__" else name
            parts.append(f"{label}: {' '.join(str(e) for e in errors)}")
        return "; ".join(parts)

    def to_run_config(self):
        if not self.is_valid():
            raise InvalidConfig(self.error_text())
        data = self.cleaned_data
        split_list = lambda raw: tuple(part.strip() for part in (raw or "").split(",") if part.strip())
        defaults = ColumnMapping()
        mapping = ColumnMapping(
            outcome=data["outcome_col"] or defaults.outcome,
            running=data["running_col"] or defaults.running,
            post=data["post_col"] or defaults.post,
            m=data["m_col"] or defaults.m,
            o=data["o_col"] or defaults.o,
            cluster=data["cluster_col"] or defaults.cluster,
            weight=data["weight_col"] or None,
            covariates=split_list(data["covariates"]),
        )
        reps = data["bootstrap_reps"] or 0
        return RunConfig(
            input=data["input"] or None,
            mapping=mapping,
            cutoff=data["cutoff"],
            window=data["window"],
            kernel=Kernel(data["kernel"] or settings.FDD_DEFAULT_KERNEL),
            bandwidth=data["bandwidth"],
            cell_bandwidths={n: data[n] for n in CELL_BANDWIDTHS if data[n] is not None},
            poly_order=data["poly_order"] or 1,
            at_cutoff_side=CutoffSide(data["at_cutoff_side"] or CutoffSide.TREATED),
            vce=VarianceKind(data["vce"] or VarianceKind.CLUSTER),
            donut=data["donut"] or 0.0,
            method=EstimatorMethod(data["method"] or EstimatorMethod.NONPARAMETRIC_RATIO),
            spec=TwoSLSSpec(data["spec"] or TwoSLSSpec.SIMPLIFIED),
            controls=split_list(data["controls"]),
            corrections=tuple(EstimatorMethod(name) for name in split_list(data["corrections"])),
            inference=data["inference"] or (InferenceKind.BOOTSTRAP if reps else InferenceKind.DELTA),
            bootstrap_reps=reps,
            seed=settings.FDD_SEED if data["seed"] is None else data["seed"],
            alpha=data["alpha"],
            min_first_stage=settings.FDD_MIN_FIRST_STAGE if data["min_first_stage"] is None else data["min_first_stage"],
            diagnostics=data["diagnostics"] if "diagnostics" in self.data else True,
            out_json=data["out_json"] or None,
            out_binned=data["out_binned"] or None,
            out_csv=data["out_csv"] or None,
            bin_width=data["bin_width"],
            where=data["where"] or None,
            n_jobs=data["n_jobs"] or settings.FDD_N_JOBS,
            reps=data["reps"] or 500,
            variable=Variable(data["variable"] or Variable.Y),
            pseudo_post_col=data["pseudo_post_col"] or None,
            split=PlaceboSplit(data["split"] or PlaceboSplit.ADJACENT_PRE_PERIODS),
            covariate=data["covariate"] or None,
            dgp=self.dgp,
        )
