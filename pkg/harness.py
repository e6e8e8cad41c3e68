# harness.py
"""Experiment files in, reproducible report bundles out."""
import csv
import hashlib
import io
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import yaml
from pydantic import ValidationError
from tqdm import tqdm

from estimation import estimate_ate
from exceptions import ConfigError, ContractError, RunFailure, SizingError
from execution import execute_all, expected_synthetic_ate, load_pool, registered_executors
from inference import binomial_interval
from oracle import enumerate_armed, universe_for
from pipelines import TEXT_PIPELINE_DOMAINS
from population import (
    LEADING_RUN_COLUMNS,
    RESERVED_NAMES,
    TRAILING_RUN_COLUMNS,
    arm_label,
    require_valid,
    spec_digest,
    variable_names,
)
from sampling import assign_arms, derive_seed, sample_systems
from schemas import (
    Arm,
    ArmedSystem,
    ContrastKind,
    Design,
    ExperimentSpec,
    ReportBundle,
    ReportDocument,
    RunRecord,
    SimulationSummary,
    SplitSummary,
    TestId,
)
from settings import TOOL_VERSION, load_settings

logger = logging.getLogger(__name__)

PARTIAL_MANIFEST = "partial_manifest.json"
# coverage counts |ate - exact| <= 3 SE, with this much float slack
COVERAGE_SLACK = 1e-12


# ========== CONFIG ==========
def _yaml_line(text: str, loc: Sequence[Any]) -> Optional[int]:
    """1-based line of the deepest node on a pydantic error path"""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return None
    line = None
    for key in loc:
        if isinstance(node, yaml.MappingNode):
            match = next(((k, v) for k, v in node.value if k.value == str(key)), None)
            if match is None:
                break
            line = match[0].start_mark.line + 1
            node = match[1]
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
            line = node.start_mark.line + 1
        else:
            break
    return line


def _check_executor_variables(spec: ExperimentSpec, path: Optional[str]) -> None:
    if spec.population.executor_id != "text_pipeline":
        return
    population = spec.population
    domains: Dict[str, List[str]] = {var.name: list(var.values) for var in population.nuisance}
    contrast = population.contrast
    if contrast.kind == ContrastKind.simple:
        domains[contrast.variable.name] = list(contrast.variable.values)
    else:
        for broad in (contrast.treatment_method, contrast.control_method):
            for component in broad.components:
                domains.setdefault(component.name, []).extend(component.values)
    for name, values in domains.items():
        if name not in TEXT_PIPELINE_DOMAINS:
            raise ConfigError(f"text_pipeline has no variable {name!r}", path=path)
        unknown = [v for v in values if v not in TEXT_PIPELINE_DOMAINS[name]]
        if unknown:
            raise ConfigError(
                f"{name} values {unknown} are not text_pipeline methods (choose from {list(TEXT_PIPELINE_DOMAINS[name])})",
                path=path,
            )
    missing = [name for name in TEXT_PIPELINE_DOMAINS if name not in domains]
    if missing:
        raise ConfigError(f"text_pipeline needs every system to set {missing}", path=path)


def parse_experiment_config(text: str, path: Optional[str] = None) -> ExperimentSpec:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"not a valid YAML document: {exc}", path=path,
                          line=mark.line + 1 if mark is not None else None)
    if not isinstance(data, dict):
        raise ConfigError("experiment file must be a mapping of keys to values", path=path)

    try:
        spec = ExperimentSpec.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        loc = first["loc"]
        dotted = ".".join(str(part) for part in loc) or "<root>"
        lines = [f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in exc.errors()]
        raise ConfigError(f"{dotted}: invalid experiment\n  " + "\n  ".join(lines),
                          path=path, line=_yaml_line(text, loc))

    require_valid(spec.population)
    if spec.population.executor_id not in registered_executors():
        raise ConfigError(
            f"population.executor_id: no executor {spec.population.executor_id!r} "
            f"(known: {registered_executors()})", path=path,
        )
    if spec.population.executor_id == "synthetic_surface" and spec.synthetic is None:
        raise ConfigError("synthetic: the synthetic_surface executor needs surface parameters", path=path)
    paired_only = {TestId.paired_system_test, TestId.shifted_bootstrap_test}
    if spec.design == Design.independent and paired_only & set(spec.inference.tests):
        raise ConfigError("inference.tests: paired tests need design 'paired'", path=path)
    if spec.design == Design.paired and TestId.independent_system_test in spec.inference.tests:
        raise ConfigError("inference.tests: the independent system test needs design 'independent'", path=path)
    _check_executor_variables(spec, path)
    return spec


def load_experiment(path: str) -> ExperimentSpec:
    text = Path(path).read_text(encoding="utf-8")
    return parse_experiment_config(text, path=str(path))


# ========== ORCHESTRATION ==========
def resolve_workers(spec: ExperimentSpec, workers: Optional[int] = None) -> int:
    if workers is not None:
        return workers
    env_workers = load_settings().workers
    return env_workers if env_workers is not None else spec.parallelism


def output_directory(spec: ExperimentSpec) -> Path:
    if spec.output.directory:
        return Path(spec.output.directory)
    return Path(load_settings().output_dir) / spec.name


def _write_partial_manifest(failure: RunFailure, spec: ExperimentSpec, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "experiment": spec.name,
        "spec_digest": spec_digest(spec),
        "master_seed": spec.master_seed,
        "completed": [{"system_id": sid, "arm": arm} for sid, arm in failure.completed],
        "failed": {"system_id": failure.failed[0], "arm": failure.failed[1]} if failure.failed else None,
        "error": str(failure),
        "tool_version": TOOL_VERSION,
    }
    target = directory / PARTIAL_MANIFEST
    target.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    failure.manifest_path = str(target)
    print(f"❌ Run aborted, partial manifest written to {target}")


def _execute(spec: ExperimentSpec, armed: List[ArmedSystem], pool, workers: int,
             directory: Optional[Path]) -> List[RunRecord]:
    try:
        return execute_all(armed, pool, spec.population.executor_id, spec.metric, spec.synthetic, workers)
    except RunFailure as failure:
        _write_partial_manifest(failure, spec, directory or output_directory(spec))
        raise


def _require_both_arms(armed: List[ArmedSystem]) -> None:
    drawn = {a.arm for a in armed}
    for arm in (Arm.treatment, Arm.control):
        if arm not in drawn:
            raise SizingError(f"arm assignment left the {arm.value} arm empty; raise S or change master_seed")


def _arm_order(record: RunRecord) -> Tuple[int, int]:
    return record.system_id, 0 if record.arm == Arm.treatment else 1


def _bundle(spec: ExperimentSpec, records: List[RunRecord]) -> ReportBundle:
    records = sorted(records, key=_arm_order)
    population = spec.population
    report = estimate_ate(
        records,
        design=spec.design,
        orientation=spec.metric.orientation,
        interval=spec.interval,
        inference=spec.inference,
        master_seed=spec.master_seed,
        spec_digest=spec_digest(spec),
        labels=(arm_label(population.contrast, Arm.treatment), arm_label(population.contrast, Arm.control)),
        nuisance_names=[var.name for var in population.nuisance],
    )
    return ReportBundle(
        report=report,
        runs=records,
        spec=spec,
        variable_names=variable_names(population),
        tool_version=TOOL_VERSION,
    )


def run_experiment(
    spec: ExperimentSpec,
    workers: Optional[int] = None,
    directory: Optional[Path] = None,
) -> ReportBundle:
    """Sample, assign, execute and estimate; writes the bundle when given a directory"""
    if spec.design == Design.exhaustive:
        return run_oracle(spec, workers=workers, directory=directory)
    require_valid(spec.population)
    workers = resolve_workers(spec, workers)
    pool = load_pool(spec.population.data_source)
    configs = sample_systems(spec.population, spec.S, spec.master_seed, pool_size=pool.size)
    armed = assign_arms(configs, spec.design, spec.population.contrast, derive_seed(spec.master_seed, ["assign"]))
    if spec.design == Design.independent:
        _require_both_arms(armed)
    logger.info("%s: %d systems, %d runs, %d workers", spec.name, len(configs), len(armed), workers)
    bundle = _bundle(spec, _execute(spec, armed, pool, workers, directory))
    if directory is not None:
        emit_report(bundle, directory)
    return bundle


def run_oracle(
    spec: ExperimentSpec,
    workers: Optional[int] = None,
    directory: Optional[Path] = None,
    budget: Optional[int] = None,
) -> ReportBundle:
    """Exact EGE and ATE over the enumerated population"""
    spec = spec.model_copy(update={"design": Design.exhaustive})
    require_valid(spec.population)
    workers = resolve_workers(spec, workers)
    budget = budget or spec.oracle.budget or load_settings().oracle_budget
    pool = load_pool(spec.population.data_source)
    universe = universe_for(spec.oracle, pool.size, spec.population.split_policy, budget)
    armed = []
    for arm in (Arm.treatment, Arm.control):
        armed.extend(enumerate_armed(spec.population, universe, arm, budget, spec.master_seed))
    logger.info("%s: oracle over %d splits, %d runs", spec.name, len(universe.splits), len(armed))
    bundle = _bundle(spec, _execute(spec, armed, pool, workers, directory))
    if directory is not None:
        emit_report(bundle, directory)
    return bundle


# ========== REPORT FILES ==========
def _format_float(value: float) -> str:
    if not math.isfinite(value):
        raise ContractError(f"cannot serialise non-finite value {value!r}")
    return format(value, ".17g")


def _render(value: Any, level: int = 0) -> str:
    """JSON with declaration-ordered keys and 17-significant-digit floats"""
    pad, inner = "  " * level, "  " * (level + 1)
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return _format_float(value)
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{inner}{json.dumps(str(k), ensure_ascii=False)}: {_render(v, level + 1)}" for k, v in value.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in value):
            return "[" + ", ".join(_render(v, level + 1) for v in value) + "]"
        items = [inner + _render(v, level + 1) for v in value]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    raise ContractError(f"cannot serialise {type(value).__name__}")


def _document(bundle: ReportBundle, content_digest: str) -> Dict[str, Any]:
    return {
        "tool_version": bundle.tool_version,
        "spec_digest": bundle.report.spec_digest,
        "content_digest": content_digest,
        "report": bundle.report.model_dump(mode="json", exclude_none=True),
        "spec": bundle.spec.model_dump(mode="json", exclude_none=True),
    }


def render_report(bundle: ReportBundle) -> Tuple[str, str]:
    """The report text and its content digest (hashed with an empty digest field)"""
    unsigned = _render(_document(bundle, "")) + "\n"
    digest = hashlib.sha256(unsigned.encode("utf-8")).hexdigest()
    return _render(_document(bundle, digest)) + "\n", digest


def render_runs_table(bundle: ReportBundle) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow([*LEADING_RUN_COLUMNS, *bundle.variable_names, *TRAILING_RUN_COLUMNS])
    for record in bundle.runs:
        writer.writerow([
            record.system_id,
            record.arm.value,
            *[record.full_values.get(name, "") for name in bundle.variable_names],
            record.split.split_seed,
            record.split.n_train,
            record.split.n_test,
            _format_float(record.mean_loss),
            int(record.degenerate),
        ])
    return buffer.getvalue()


def emit_report(bundle: ReportBundle, directory: Path) -> Tuple[Path, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    report_text, _ = render_report(bundle)
    report_path = directory / bundle.spec.output.report_name
    runs_path = directory / bundle.spec.output.runs_name
    report_path.write_text(report_text, encoding="utf-8")
    runs_path.write_text(render_runs_table(bundle), encoding="utf-8")
    logger.info("wrote %s and %s", report_path, runs_path)
    return report_path, runs_path


def verify_digest(report_text: str) -> bool:
    stated = json.loads(report_text)["content_digest"]
    unsigned = report_text.replace(f'"content_digest": "{stated}"', '"content_digest": ""', 1)
    return hashlib.sha256(unsigned.encode("utf-8")).hexdigest() == stated


def load_bundle(directory: Path, report_name: str = "report.json", runs_name: str = "runs.csv") -> ReportBundle:
    """Read an emitted bundle back; runs carry mean losses only"""
    directory = Path(directory)
    report_text = (directory / report_name).read_text(encoding="utf-8")
    if not verify_digest(report_text):
        raise ContractError(f"{directory / report_name}: content digest does not match the report")
    document = ReportDocument.model_validate_json(report_text)

    with open(directory / runs_name, "r", encoding="utf-8", newline="") as handle:
        rows = list(csv.DictReader(handle))
    names = [name for name in (rows[0].keys() if rows else []) if name not in RESERVED_NAMES]
    runs = [
        RunRecord(
            system_id=int(row["system_id"]),
            arm=Arm(row["arm"]),
            full_values={name: row[name] for name in names if row[name] != ""},
            split=SplitSummary(n_train=int(row["N"]), n_test=int(row["M"]), split_seed=int(row["split_seed"])),
            per_instance_losses=[],
            mean_loss=float(row["mean_loss"]),
            executor_id=document.spec.population.executor_id,
            degenerate=row["degenerate"] == "1",
        )
        for row in rows
    ]
    return ReportBundle(
        report=document.report,
        runs=runs,
        spec=document.spec,
        variable_names=names,
        tool_version=document.tool_version,
        content_digest=document.content_digest,
    )


def render_summary(bundle: ReportBundle) -> str:
    report = bundle.report
    better = "lower" if report.orientation.value == "lower_is_better" else "higher"
    lines = [
        f"experiment     {bundle.spec.name} ({report.design.value}, master seed {report.master_seed})",
        f"EGE {report.ege_A.method_label:<10} {report.ege_A.value:.6f} (S={report.ege_A.S}, SE {report.ege_A.standard_error:.6f})",
        f"EGE {report.ege_B.method_label:<10} {report.ege_B.value:.6f} (S={report.ege_B.S}, SE {report.ege_B.standard_error:.6f})",
        f"ATE            {report.ate:+.6f} (SE {report.standard_error:.6f}, {better} is better)",
    ]
    if report.confidence_interval is not None:
        ci = report.confidence_interval
        lines.append(f"{ci.level:.0%} CI         [{ci.lo:+.6f}, {ci.hi:+.6f}] ({ci.method.value})")
    for label, result in (("test", report.test_result), ("baseline", report.baseline_test)):
        if result is not None:
            verdict = "reject" if result.reject else "keep"
            lines.append(f"{label:<14} {result.test_id.value}: p={result.p_value:.4f} -> {verdict} H0 at {result.alpha}")
    for name, effects in (report.heterogeneity or {}).items():
        cells = ", ".join(f"{e.value}={e.mean_ite:+.4f} (n={e.count})" for e in effects)
        lines.append(f"ATE by {name:<8} {cells}")
    for arm in (Arm.treatment, Arm.control):
        rows = [row for row in report.by_configuration or [] if row.arm == arm]
        if rows:
            pick = min if better == "lower" else max
            best = pick(rows, key=lambda row: row.value)
            values = ", ".join(f"{k}={v}" for k, v in best.configuration.items())
            lines.append(f"best {arm.value:<9} {best.value:.6f} (S={best.S}) {values}")
    for note in report.notes or []:
        lines.append(f"note           {note}")
    lines.append(f"runs         {len(bundle.runs)} rows, tool {bundle.tool_version}")
    return "\n".join(lines)


def report_schema() -> Dict[str, Any]:
    return ReportDocument.model_json_schema()


# ========== SIMULATION ==========
def _sd(values: Sequence[float]) -> float:
    if len(values) < 2:
        return 0.0
    m = math.fsum(values) / len(values)
    return math.sqrt(math.fsum((v - m) ** 2 for v in values) / (len(values) - 1))


def simulate(
    spec: ExperimentSpec,
    replications: Optional[int] = None,
    workers: Optional[int] = None,
    progress: bool = True,
) -> SimulationSummary:
    """Replicate a synthetic-surface experiment under derived master seeds"""
    if spec.synthetic is None:
        raise ConfigError("synthetic: simulation needs surface parameters")
    if spec.design == Design.exhaustive:
        raise ContractError("simulation replicates sampled designs only")
    replications = replications or spec.simulation.replications
    population = spec.population.model_copy(update={"executor_id": "synthetic_surface"})
    tests = [TestId.paired_system_test, TestId.shifted_bootstrap_test] if spec.design == Design.paired \
        else [TestId.independent_system_test]
    base = spec.model_copy(update={
        "population": population,
        "inference": spec.inference.model_copy(update={"tests": tests}),
    })
    exact = expected_synthetic_ate(population, spec.synthetic)

    ates, covered, system_rejections, baseline_rejections = [], 0, 0, 0
    for r in tqdm(range(replications), desc=f"simulate {spec.name}", disable=not progress):
        replicate = base.model_copy(update={"master_seed": derive_seed(spec.master_seed, ["replication", r])})
        report = run_experiment(replicate, workers=workers).report
        ates.append(report.ate)
        covered += abs(report.ate - exact) <= 3.0 * report.standard_error + COVERAGE_SLACK
        if report.test_result is not None:
            system_rejections += report.test_result.reject
        if report.baseline_test is not None:
            baseline_rejections += report.baseline_test.reject

    mean_ate = math.fsum(ates) / replications
    return SimulationSummary(
        replications=replications,
        exact_ate=exact,
        mean_ate=mean_ate,
        bias=mean_ate - exact,
        sd_ate=_sd(ates),
        coverage_3se=covered / replications,
        design=spec.design,
        system_rejection_rate=system_rejections / replications,
        baseline_rejection_rate=baseline_rejections / replications if spec.design == Design.paired else None,
        alpha=spec.inference.alpha,
        calibration_interval=binomial_interval(replications, spec.inference.alpha, 0.99),
    )
