# estimation.py
"""Monte Carlo estimators over a sample of processing systems.

The expected generalization error of a method is the unweighted mean over
systems of each system's mean test loss: every system counts once, whatever
its test-set size. Pooling all test instances is a different estimator and is
not offered. Sums use ``math.fsum`` so record order never changes a result.
"""
import math
from collections import defaultdict
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm

from exceptions import ContractError, SizingError
from inference import independent_system_test, paired_system_test, shifted_bootstrap_test
from sampling import derive_seed
from schemas import (
    Arm,
    ATEReport,
    ConfidenceInterval,
    ConfigurationEGE,
    Design,
    EGEEstimate,
    InferenceSpec,
    IntervalMethod,
    IntervalSpec,
    NuisanceEffect,
    Orientation,
    RunRecord,
    TestId,
    TestResult,
)

Pair = Tuple[RunRecord, RunRecord]


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


def _sd(values: Sequence[float]) -> float:
    if len(values) < 2:
        return 0.0
    m = _mean(values)
    return math.sqrt(math.fsum((v - m) ** 2 for v in values) / (len(values) - 1))


def _standard_error(values: Sequence[float]) -> float:
    return _sd(values) / math.sqrt(len(values)) if len(values) > 1 else 0.0


# ========== POINT ESTIMATES ==========
def ege_hat(records: Sequence[RunRecord], method_label: Optional[str] = None) -> EGEEstimate:
    if not records:
        raise ContractError("ege_hat needs at least one record")
    arms = {r.arm for r in records}
    if len(arms) > 1:
        raise ContractError("ege_hat got records from both arms")
    ordered = sorted(records, key=lambda r: r.system_id)
    means = [r.mean_loss for r in ordered]
    return EGEEstimate(
        method_label=method_label or ordered[0].arm.value,
        value=_mean(means),
        S=len(means),
        per_system_means=means,
        standard_error=_standard_error(means),
    )


def ite_hat(treatment: RunRecord, control: RunRecord) -> float:
    if treatment.system_id != control.system_id:
        raise ContractError(f"system {treatment.system_id} paired with system {control.system_id}")
    if treatment.split != control.split:
        raise ContractError(f"system {treatment.system_id}: arms ran on different splits")
    if treatment.arm != Arm.treatment or control.arm != Arm.control:
        raise ContractError(f"system {treatment.system_id}: arms passed in the wrong order")
    return treatment.mean_loss - control.mean_loss


def ate_hat(ege_a: EGEEstimate, ege_b: EGEEstimate) -> float:
    return ege_a.value - ege_b.value


def split_arms(records: Sequence[RunRecord]) -> Tuple[List[RunRecord], List[RunRecord]]:
    treated = [r for r in records if r.arm == Arm.treatment]
    controls = [r for r in records if r.arm == Arm.control]
    return treated, controls


def pair_records(records: Sequence[RunRecord]) -> List[Pair]:
    by_id: Dict[int, Dict[Arm, RunRecord]] = defaultdict(dict)
    for record in records:
        if record.arm in by_id[record.system_id]:
            raise ContractError(f"system {record.system_id} has two {record.arm.value} records")
        by_id[record.system_id][record.arm] = record
    pairs = []
    for system_id in sorted(by_id):
        arms = by_id[system_id]
        if len(arms) != 2:
            raise ContractError(f"system {system_id} is missing an arm")
        pairs.append((arms[Arm.treatment], arms[Arm.control]))
    return pairs


# ========== UNCERTAINTY ==========
def ate_interval(
    ites: Optional[Sequence[float]] = None,
    groups: Optional[Tuple[Sequence[float], Sequence[float]]] = None,
    level: float = 0.95,
    method: IntervalMethod = IntervalMethod.normal,
    K: int = 2_000,
    seed: int = 0,
) -> ConfidenceInterval:
    """Interval for the ATE from paired ITEs or from two groups of per-system means.

    The bootstrap resamples systems, never test instances.
    """
    if (ites is None) == (groups is None):
        raise ContractError("pass either paired ITEs or two groups of per-system means")
    if ites is not None and len(ites) < 2:
        raise SizingError("a paired interval needs at least 2 systems")
    if groups is not None and min(len(groups[0]), len(groups[1])) < 2:
        raise SizingError("an independent interval needs at least 2 systems per group")

    if method == IntervalMethod.normal:
        z = float(norm.ppf(0.5 + level / 2.0))
        if ites is not None:
            center, se = _mean(ites), _standard_error(ites)
        else:
            center = _mean(groups[0]) - _mean(groups[1])
            se = math.hypot(_standard_error(groups[0]), _standard_error(groups[1]))
        return ConfidenceInterval(lo=center - z * se, hi=center + z * se, level=level, method=method)

    rng = np.random.default_rng(seed)
    if ites is not None:
        values = np.asarray(ites, dtype=float)
        stats = values[rng.integers(0, len(values), size=(K, len(values)))].mean(axis=1)
    else:
        a, b = np.asarray(groups[0], dtype=float), np.asarray(groups[1], dtype=float)
        stats = (a[rng.integers(0, len(a), size=(K, len(a)))].mean(axis=1)
                 - b[rng.integers(0, len(b), size=(K, len(b)))].mean(axis=1))
    lo, hi = np.quantile(stats, [(1.0 - level) / 2.0, (1.0 + level) / 2.0])
    return ConfidenceInterval(lo=float(lo), hi=float(hi), level=level, method=method)


# ========== BREAKDOWNS ==========
def _configuration_groups(records: Sequence[RunRecord]) -> Dict[str, List[RunRecord]]:
    groups: Dict[str, List[RunRecord]] = defaultdict(list)
    for record in records:
        values = ",".join(f"{k}={v}" for k, v in sorted(record.full_values.items()))
        groups[f"{record.arm.value}|{values}"].append(record)
    return dict(sorted(groups.items()))


def ege_by_configuration(records: Sequence[RunRecord]) -> Dict[str, EGEEstimate]:
    """EGE of each fixed method combination, averaged over its train/test compositions"""
    return {key: ege_hat(members, method_label=key) for key, members in _configuration_groups(records).items()}


def configuration_table(records: Sequence[RunRecord]) -> List[ConfigurationEGE]:
    table = []
    for key, members in _configuration_groups(records).items():
        estimate = ege_hat(members, method_label=key)
        table.append(ConfigurationEGE(
            arm=members[0].arm,
            configuration=dict(sorted(members[0].full_values.items())),
            value=estimate.value,
            S=estimate.S,
            standard_error=estimate.standard_error,
        ))
    return table


def ate_by_nuisance_value(pairs: Sequence[Pair], variable: str) -> List[NuisanceEffect]:
    ites: Dict[str, List[float]] = defaultdict(list)
    for treatment, control in pairs:
        ites[treatment.full_values[variable]].append(ite_hat(treatment, control))
    return [
        NuisanceEffect(value=value, mean_ite=_mean(values), count=len(values))
        for value, values in sorted(ites.items())
    ]


# ========== REPORT CORE ==========
def default_tests(design: Design) -> List[TestId]:
    if design == Design.paired:
        return [TestId.paired_system_test]
    if design == Design.independent:
        return [TestId.independent_system_test]
    return []


def _baseline_test(pair: Pair, inference: InferenceSpec, master_seed: int) -> TestResult:
    treatment, control = pair
    return shifted_bootstrap_test(
        treatment.per_instance_losses,
        control.per_instance_losses,
        K=inference.K,
        alpha=inference.alpha,
        seed=derive_seed(master_seed, ["test", TestId.shifted_bootstrap_test]),
        two_sided=inference.baseline_two_sided,
    )


def estimate_ate(
    records: Sequence[RunRecord],
    design: Design,
    orientation: Orientation,
    interval: IntervalSpec,
    inference: InferenceSpec,
    master_seed: int,
    spec_digest: str,
    labels: Tuple[str, str] = ("treatment", "control"),
    nuisance_names: Sequence[str] = (),
) -> ATEReport:
    treated, controls = split_arms(records)
    ege_a = ege_hat(treated, method_label=labels[0])
    ege_b = ege_hat(controls, method_label=labels[1])
    ate = ate_hat(ege_a, ege_b)
    tests = inference.tests or default_tests(design)

    ites = None
    heterogeneity = None
    ci = None
    test_result = None
    baseline = None
    notes: List[str] = []
    pairable = design == Design.paired or (
        design == Design.exhaustive and {r.system_id for r in treated} == {r.system_id for r in controls}
    )
    if pairable:
        pairs = pair_records(records)
        ites = [ite_hat(t, c) for t, c in pairs]
        se = _standard_error(ites)
        heterogeneity = {name: ate_by_nuisance_value(pairs, name) for name in nuisance_names}
        if TestId.shifted_bootstrap_test in tests:
            baseline = _baseline_test(pairs[0], inference, master_seed)
    else:
        if design == Design.independent and (
            TestId.shifted_bootstrap_test in tests or TestId.paired_system_test in tests
        ):
            raise ContractError("paired tests need the paired design")
        se = math.hypot(ege_a.standard_error, ege_b.standard_error)

    if design == Design.exhaustive:
        # population values, nothing left to infer
        se = 0.0
    else:
        interval_seed = derive_seed(master_seed, ["interval"])
        group_sizes = f"groups of {ege_a.S} and {ege_b.S} systems"
        if ites is not None:
            ci = ate_interval(ites=ites, level=interval.level, method=interval.method, K=interval.K, seed=interval_seed)
        elif min(ege_a.S, ege_b.S) < 2:
            notes.append(f"confidence_interval omitted: {group_sizes}, an interval needs at least 2 per group")
            notes.append("standard_error leaves out the spread of a single-system group")
        else:
            ci = ate_interval(groups=(ege_a.per_system_means, ege_b.per_system_means), level=interval.level,
                              method=interval.method, K=interval.K, seed=interval_seed)
        if TestId.paired_system_test in tests:
            test_result = paired_system_test(
                ites, K=inference.K, alpha=inference.alpha,
                seed=derive_seed(master_seed, ["test", TestId.paired_system_test]),
                mode=inference.paired_mode, two_sided=inference.two_sided,
            )
        elif TestId.independent_system_test in tests and ege_a.S + ege_b.S < 3:
            notes.append(f"{TestId.independent_system_test.value} omitted: {group_sizes}, relabelling needs 3")
        elif TestId.independent_system_test in tests:
            test_result = independent_system_test(
                ege_a.per_system_means, ege_b.per_system_means, K=inference.K, alpha=inference.alpha,
                seed=derive_seed(master_seed, ["test", TestId.independent_system_test]),
                two_sided=inference.two_sided,
            )

    return ATEReport(
        ege_A=ege_a,
        ege_B=ege_b,
        ate=ate,
        standard_error=se,
        design=design,
        orientation=orientation,
        ites=ites,
        confidence_interval=ci,
        test_result=test_result,
        baseline_test=baseline,
        heterogeneity=heterogeneity,
        by_configuration=configuration_table(records),
        notes=notes or None,
        master_seed=master_seed,
        spec_digest=spec_digest,
    )
