# population.py
import hashlib
import itertools
import json
import math
from typing import Dict, List

from pydantic import BaseModel

from exceptions import SpecValidationError
from schemas import (
    Arm,
    BroadMethodSpec,
    ContrastKind,
    MethodVariable,
    PopulationSpec,
    TreatmentContrast,
    ValidationReport,
    Violation,
)

WEIGHT_TOLERANCE = 1e-12
# runs table columns around the method variables
LEADING_RUN_COLUMNS = ("system_id", "arm")
TRAILING_RUN_COLUMNS = ("split_seed", "N", "M", "mean_loss", "degenerate")
RESERVED_NAMES = frozenset(LEADING_RUN_COLUMNS + TRAILING_RUN_COLUMNS)


# ========== VALIDATION ==========
def _check_variable(var: MethodVariable, path: str) -> List[Violation]:
    found = []
    if not var.name or not var.name.strip():
        found.append(Violation(path=f"{path}.name", message="variable name must be non-empty"))
    elif var.name in RESERVED_NAMES:
        found.append(Violation(path=f"{path}.name", message=f"{var.name!r} is a runs table column name"))
    if not var.values:
        found.append(Violation(path=f"{path}.values", message="at least one method value is required"))
    if any(not v for v in var.values):
        found.append(Violation(path=f"{path}.values", message="method values must be non-empty"))
    if len(set(var.values)) != len(var.values):
        dupes = sorted({v for v in var.values if var.values.count(v) > 1})
        found.append(Violation(path=f"{path}.values", message=f"duplicate method values: {dupes}"))
    if len(var.weights) != len(var.values):
        found.append(Violation(
            path=f"{path}.weights",
            message=f"{len(var.weights)} weights for {len(var.values)} values",
        ))
    elif var.values:
        if any(w < 0 or not math.isfinite(w) for w in var.weights):
            found.append(Violation(path=f"{path}.weights", message="weights must be finite and non-negative"))
        elif abs(math.fsum(var.weights) - 1.0) > WEIGHT_TOLERANCE:
            found.append(Violation(
                path=f"{path}.weights",
                message=f"weights sum to {math.fsum(var.weights)!r}, not 1",
            ))
    return found


def _check_broad(broad: BroadMethodSpec, path: str) -> List[Violation]:
    found = []
    if not broad.components:
        found.append(Violation(path=f"{path}.components", message="a broad method needs at least one component"))
    names = [c.name for c in broad.components]
    for i, component in enumerate(broad.components):
        found.extend(_check_variable(component, f"{path}.components[{i}]"))
        if names.count(component.name) > 1 and names.index(component.name) == i:
            found.append(Violation(
                path=f"{path}.components[{i}].name",
                message=f"component {component.name!r} declared more than once",
            ))
    return found


def _check_contrast(contrast: TreatmentContrast, nuisance_names: List[str]) -> List[Violation]:
    found = []
    if contrast.kind == ContrastKind.simple:
        if contrast.treatment_method is not None or contrast.control_method is not None:
            found.append(Violation(path="contrast", message="simple contrast must not declare broad methods"))
        if contrast.variable is None:
            found.append(Violation(path="contrast.variable", message="simple contrast needs its variable"))
            return found
        found.extend(_check_variable(contrast.variable, "contrast.variable"))
        for field in ("treatment", "control"):
            value = getattr(contrast, field)
            if value is None:
                found.append(Violation(path=f"contrast.{field}", message=f"{field} value is missing"))
            elif value not in contrast.variable.values:
                found.append(Violation(
                    path=f"contrast.{field}",
                    message=f"{value!r} is not a value of {contrast.variable.name!r}",
                ))
        if contrast.treatment is not None and contrast.treatment == contrast.control:
            found.append(Violation(path="contrast.control", message="treatment and control must differ"))
        if contrast.variable.name in nuisance_names:
            found.append(Violation(
                path="contrast.variable.name",
                message=f"{contrast.variable.name!r} is also declared as a nuisance variable",
            ))
        return found

    if contrast.variable is not None or contrast.treatment is not None or contrast.control is not None:
        found.append(Violation(path="contrast", message="broad contrast must not declare a simple variable"))
    for field in ("treatment_method", "control_method"):
        broad = getattr(contrast, field)
        if broad is None:
            found.append(Violation(path=f"contrast.{field}", message=f"{field} is missing"))
            continue
        found.extend(_check_broad(broad, f"contrast.{field}"))
        for i, component in enumerate(broad.components):
            if component.name in nuisance_names:
                found.append(Violation(
                    path=f"contrast.{field}.components[{i}].name",
                    message=f"{component.name!r} is also declared as a nuisance variable",
                ))
    return found


def _domains(spec: PopulationSpec) -> Dict[str, List[str]]:
    domains = {var.name: list(var.values) for var in spec.nuisance}
    contrast = spec.contrast
    if contrast.kind == ContrastKind.simple and contrast.variable is not None:
        domains[contrast.variable.name] = list(contrast.variable.values)
    elif contrast.kind == ContrastKind.broad:
        for broad in (contrast.treatment_method, contrast.control_method):
            for component in broad.components if broad else []:
                merged = domains.setdefault(component.name, [])
                merged.extend(v for v in component.values if v not in merged)
    return domains


def _check_exclusions(spec: PopulationSpec) -> List[Violation]:
    found = []
    domains = _domains(spec)
    for i, exclusion in enumerate(spec.exclusions):
        path = f"exclusions[{i}]"
        if not exclusion:
            found.append(Violation(path=path, message="empty exclusion matches every unit"))
            continue
        consistent = True
        for name, value in exclusion.items():
            if name not in domains:
                found.append(Violation(path=f"{path}.{name}", message=f"undeclared variable {name!r}"))
                consistent = False
            elif value not in domains[name]:
                found.append(Violation(path=f"{path}.{name}", message=f"{value!r} is not a value of {name!r}"))
                consistent = False
        if consistent:
            # the population would contain a unit that cannot be exposed to both arms
            assignment = ", ".join(f"{k}={v}" for k, v in exclusion.items())
            found.append(Violation(
                path=path,
                message=f"population contains non-exposable units ({assignment}); narrow the variable domains instead",
            ))
    return found


def validate_spec(spec: PopulationSpec) -> ValidationReport:
    violations: List[Violation] = []
    names = [var.name for var in spec.nuisance]
    for i, var in enumerate(spec.nuisance):
        violations.extend(_check_variable(var, f"nuisance[{i}]"))
        if names.count(var.name) > 1 and names.index(var.name) == i:
            violations.append(Violation(
                path=f"nuisance[{i}].name",
                message=f"nuisance variable {var.name!r} declared more than once",
            ))
    violations.extend(_check_contrast(spec.contrast, names))
    violations.extend(_check_exclusions(spec))
    if not spec.executor_id:
        violations.append(Violation(path="executor_id", message="executor id must be non-empty"))
    return ValidationReport(violations=violations)


def require_valid(spec: PopulationSpec) -> None:
    report = validate_spec(spec)
    if not report.ok:
        raise SpecValidationError(report)


# ========== COMBINATORICS ==========
def nuisance_combination_count(spec: PopulationSpec) -> int:
    require_valid(spec)
    return math.prod(len(var.values) for var in spec.nuisance)


def _cross_product(variables: List[MethodVariable]) -> List[Dict[str, str]]:
    names = [var.name for var in variables]
    return [dict(zip(names, combo)) for combo in itertools.product(*(var.values for var in variables))]


def expand_broad_method(broad: BroadMethodSpec) -> List[Dict[str, str]]:
    """Every component combination of a broad method, in declaration-lexicographic order"""
    return _cross_product(broad.components)


def nuisance_combinations(spec: PopulationSpec) -> List[Dict[str, str]]:
    require_valid(spec)
    return _cross_product(spec.nuisance)


def variable_names(spec: PopulationSpec) -> List[str]:
    names = [var.name for var in spec.nuisance]
    contrast = spec.contrast
    if contrast.kind == ContrastKind.simple:
        names.append(contrast.variable.name)
    else:
        for broad in (contrast.treatment_method, contrast.control_method):
            names.extend(c.name for c in broad.components if c.name not in names)
    return names


def arm_label(contrast: TreatmentContrast, arm: Arm) -> str:
    if contrast.kind == ContrastKind.simple:
        return contrast.treatment if arm == Arm.treatment else contrast.control
    broad = contrast.treatment_method if arm == Arm.treatment else contrast.control_method
    return broad.name


def spec_digest(model: BaseModel) -> str:
    canonical = json.dumps(model.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
