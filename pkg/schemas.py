# schemas.py
from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator


class Schema(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


# ========== POPULATION SCHEMAS ==========
class MethodVariable(Schema):
    name: str
    values: List[str]
    weights: List[float] = Field(default_factory=list)

    @model_validator(mode="before")
    @classmethod
    def _uniform_by_default(cls, data):
        # no weights means every value is equally likely
        if isinstance(data, dict) and not data.get("weights"):
            n = len(data.get("values") or [])
            data = {**data, "weights": [1.0 / n] * n if n else []}
        return data


class BroadMethodSpec(Schema):
    name: str
    components: List[MethodVariable]


class ContrastKind(str, Enum):
    simple = "simple"
    broad = "broad"


class TreatmentContrast(Schema):
    kind: ContrastKind = ContrastKind.simple
    # simple contrast
    variable: Optional[MethodVariable] = None
    treatment: Optional[str] = None
    control: Optional[str] = None
    # broad contrast
    treatment_method: Optional[BroadMethodSpec] = None
    control_method: Optional[BroadMethodSpec] = None


class DataSourceKind(str, Enum):
    synthetic_corpus = "synthetic_corpus"
    jsonl = "jsonl"


class DataSourceSpec(Schema):
    kind: DataSourceKind = DataSourceKind.synthetic_corpus
    # synthetic corpus generator
    n_docs: int = 40
    vocab_size: int = 40
    class_signal_strength: float = 0.5
    doc_length: int = 12
    case_noise: float = 0.2
    seed: int = 0
    # labelled JSON-lines file
    path: Optional[str] = None


class SplitPolicy(Schema):
    train_fraction: float = Field(default=0.8, gt=0.0, lt=1.0)
    train_size: Optional[int] = Field(default=None, ge=1)
    test_size: Optional[int] = Field(default=None, ge=1)
    disjoint: bool = True


class PopulationSpec(Schema):
    contrast: TreatmentContrast
    nuisance: List[MethodVariable] = Field(default_factory=list)
    data_source: DataSourceSpec = Field(default_factory=DataSourceSpec)
    split_policy: SplitPolicy = Field(default_factory=SplitPolicy)
    executor_id: str = "text_pipeline"
    # partial assignments that cannot be realised by some unit of the population
    exclusions: List[Dict[str, str]] = Field(default_factory=list)


class Violation(Schema):
    path: str
    message: str


class ValidationReport(Schema):
    violations: List[Violation] = Field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


# ========== SAMPLING SCHEMAS ==========
class Split(Schema):
    train_indices: List[int]
    test_indices: List[int]
    seed: int


class SystemConfig(Schema):
    system_id: int = Field(ge=1)
    nuisance_values: Dict[str, str]
    split: Split
    system_seed: int


class Arm(str, Enum):
    treatment = "treatment"
    control = "control"


class Design(str, Enum):
    paired = "paired"
    independent = "independent"
    exhaustive = "exhaustive"


class ArmedSystem(Schema):
    base: SystemConfig
    arm: Arm
    full_values: Dict[str, str]


class SplitUniverse(Schema):
    splits: List[Split]


# ========== EXECUTION SCHEMAS ==========
class DataPool(Schema):
    instances: List[Tuple[str, str]]
    class_set: List[str]

    @property
    def size(self) -> int:
        return len(self.instances)

    @property
    def documents(self) -> List[str]:
        return [doc for doc, _ in self.instances]

    @property
    def labels(self) -> List[str]:
        return [label for _, label in self.instances]


class MetricId(str, Enum):
    zero_one_error = "zero_one_error"
    zero_one_agreement = "zero_one_agreement"


class Orientation(str, Enum):
    lower_is_better = "lower_is_better"
    higher_is_better = "higher_is_better"


METRIC_ORIENTATION = {
    MetricId.zero_one_error: Orientation.lower_is_better,
    MetricId.zero_one_agreement: Orientation.higher_is_better,
}


class MetricSpec(Schema):
    metric_id: MetricId = MetricId.zero_one_error
    orientation: Optional[Orientation] = None

    @model_validator(mode="before")
    @classmethod
    def _orientation_from_metric(cls, data):
        if isinstance(data, dict):
            metric_id = MetricId(data.get("metric_id", MetricId.zero_one_error))
            expected = METRIC_ORIENTATION[metric_id]
            given = data.get("orientation")
            if given is None:
                data = {**data, "orientation": expected}
            elif Orientation(given) != expected:
                raise ValueError(f"{metric_id.value} is {expected.value}, not {Orientation(given).value}")
        return data


class SplitSummary(Schema):
    n_train: int
    n_test: int
    split_seed: int


class RunRecord(Schema):
    system_id: int
    arm: Arm
    full_values: Dict[str, str]
    split: SplitSummary
    per_instance_losses: List[float]
    mean_loss: float
    executor_id: str
    wall_time: float = 0.0
    degenerate: bool = False


class SyntheticSurfaceParams(Schema):
    base_loss: float = 0.0
    # variable -> value -> additive effect
    effects: Dict[str, Dict[str, float]] = Field(default_factory=dict)
    # variable -> value -> effect added on the treatment arm only
    interaction_effects: Dict[str, Dict[str, float]] = Field(default_factory=dict)
    treatment_effect: float = 0.0
    split_noise_sd: float = Field(default=0.0, ge=0.0)
    instance_noise_sd: float = Field(default=0.0, ge=0.0)
    treatment_split_sd: float = Field(default=0.0, ge=0.0)
    clip: bool = False


# ========== INFERENCE SCHEMAS ==========
class TestId(str, Enum):
    __test__ = False

    shifted_bootstrap_test = "shifted_bootstrap_test"
    paired_system_test = "paired_system_test"
    independent_system_test = "independent_system_test"


class PairedMode(str, Enum):
    sign_flip_permutation = "sign_flip_permutation"
    bootstrap = "bootstrap"


class TestResult(Schema):
    __test__ = False

    test_id: TestId
    statistic: float
    p_value: float = Field(ge=0.0, le=1.0)
    K: int
    alpha: float
    reject: bool
    seed: int
    two_sided: bool
    exhaustive: bool = False


# ========== ESTIMATION SCHEMAS ==========
class EGEEstimate(Schema):
    method_label: str
    value: float
    S: int
    per_system_means: List[float]
    standard_error: float


class IntervalMethod(str, Enum):
    normal = "normal"
    bootstrap_over_systems = "bootstrap_over_systems"


class ConfidenceInterval(Schema):
    lo: float
    hi: float
    level: float
    method: IntervalMethod


class NuisanceEffect(Schema):
    value: str
    mean_ite: float
    count: int


class ConfigurationEGE(Schema):
    arm: Arm
    configuration: Dict[str, str]
    value: float
    S: int
    standard_error: float


class ATEReport(Schema):
    ege_A: EGEEstimate
    ege_B: EGEEstimate
    ate: float
    standard_error: float
    design: Design
    orientation: Orientation
    ites: Optional[List[float]] = None
    confidence_interval: Optional[ConfidenceInterval] = None
    test_result: Optional[TestResult] = None
    baseline_test: Optional[TestResult] = None
    heterogeneity: Optional[Dict[str, List[NuisanceEffect]]] = None
    by_configuration: Optional[List[ConfigurationEGE]] = None
    # parts of the report left out because the sample was too small
    notes: Optional[List[str]] = None
    master_seed: int
    spec_digest: str


# ========== EXPERIMENT SCHEMAS ==========
class InferenceSpec(Schema):
    # empty means the system-level test that matches the design
    tests: List[TestId] = Field(default_factory=list)
    K: int = Field(default=10_000, ge=1)
    alpha: float = Field(default=0.05, gt=0.0, lt=1.0)
    two_sided: bool = True
    baseline_two_sided: bool = False
    paired_mode: PairedMode = PairedMode.sign_flip_permutation


class IntervalSpec(Schema):
    method: IntervalMethod = IntervalMethod.normal
    level: float = Field(default=0.95, gt=0.0, lt=1.0)
    K: int = Field(default=2_000, ge=1)


class OracleSpec(Schema):
    split_seeds: int = Field(default=5, ge=1)
    exhaustive_splits: bool = False
    budget: Optional[int] = Field(default=None, ge=1)


class OutputSpec(Schema):
    directory: Optional[str] = None
    report_name: str = "report.json"
    runs_name: str = "runs.csv"


class SimulationSpec(Schema):
    replications: int = Field(default=300, ge=1)


class ExperimentSpec(Schema):
    name: str = "experiment"
    population: PopulationSpec
    S: int = Field(ge=1)
    design: Design = Design.paired
    metric: MetricSpec = Field(default_factory=MetricSpec)
    inference: InferenceSpec = Field(default_factory=InferenceSpec)
    interval: IntervalSpec = Field(default_factory=IntervalSpec)
    master_seed: int
    output: OutputSpec = Field(default_factory=OutputSpec)
    parallelism: int = Field(default=1, ge=1)
    synthetic: Optional[SyntheticSurfaceParams] = None
    oracle: OracleSpec = Field(default_factory=OracleSpec)
    simulation: SimulationSpec = Field(default_factory=SimulationSpec)

    @model_validator(mode="after")
    def _enough_systems(self):
        if self.design != Design.exhaustive and self.S < 2:
            raise ValueError("S must be at least 2 for sampled designs")
        return self


# ========== REPORT SCHEMAS ==========
class ReportBundle(Schema):
    report: ATEReport
    runs: List[RunRecord]
    spec: ExperimentSpec
    variable_names: List[str]
    tool_version: str
    content_digest: str = ""


class ReportDocument(Schema):
    """Shape of report.json on disk"""

    tool_version: str
    spec_digest: str
    content_digest: str
    report: ATEReport
    spec: ExperimentSpec


class SimulationSummary(Schema):
    replications: int
    exact_ate: float
    mean_ate: float
    bias: float
    sd_ate: float
    coverage_3se: float
    design: Design
    system_rejection_rate: float
    baseline_rejection_rate: Optional[float] = None
    alpha: float
    calibration_interval: Tuple[float, float]


# ========== SERVICE SCHEMAS ==========
class ExperimentRequest(Schema):
    # experiment file contents, YAML
    config: str
    workers: Optional[int] = Field(default=None, ge=1)


class SimulationRequest(ExperimentRequest):
    replications: Optional[int] = Field(default=None, ge=1)


class ValidationResponse(Schema):
    valid: bool
    name: str
    S: int
    design: Design
    spec_digest: str


class ReportResponse(Schema):
    content_digest: str
    summary: str
    report: ATEReport
    runs: int


class ExecutorList(Schema):
    executors: List[str]
