# oracle.py
"""Exact values over small finite populations, by brute force.

The split space is truncated to an explicit SplitUniverse; every nuisance
combination is crossed with every split (and, for broad contrasts, with every
component combination of the arm), each unit weighted equally.
"""
import itertools
import logging
import math
from typing import Dict, Iterable, List, Optional, Tuple

from exceptions import BudgetExceededError
from execution import execute_all, load_pool
from population import expand_broad_method, nuisance_combination_count, nuisance_combinations
from sampling import derive_seed, draw_split, split_sizes
from schemas import (
    Arm,
    ArmedSystem,
    ContrastKind,
    DataPool,
    MetricSpec,
    OracleSpec,
    PopulationSpec,
    Split,
    SplitPolicy,
    SplitUniverse,
    SyntheticSurfaceParams,
    SystemConfig,
)

logger = logging.getLogger(__name__)

DEFAULT_BUDGET = 10_000


# ========== SPLIT UNIVERSES ==========
def universe_from_seeds(pool_size: int, policy: SplitPolicy, seeds: Iterable[int]) -> SplitUniverse:
    return SplitUniverse(splits=[draw_split(pool_size, policy, seed) for seed in seeds])


def exhaustive_universe(pool_size: int, policy: SplitPolicy, limit: int = DEFAULT_BUDGET) -> SplitUniverse:
    """Every (train set, test set) pair the policy allows on a tiny pool"""
    n_train, n_test = split_sizes(pool_size, policy)
    count = math.comb(pool_size, n_train) * math.comb(pool_size - n_train, n_test)
    if count > limit:
        raise BudgetExceededError(f"{count} splits exceed the limit of {limit}")
    splits = []
    everything = range(pool_size)
    for train in itertools.combinations(everything, n_train):
        rest = [i for i in everything if i not in train]
        for test in itertools.combinations(rest, n_test):
            splits.append(Split(train_indices=list(train), test_indices=list(test), seed=len(splits) + 1))
    return SplitUniverse(splits=splits)


def universe_for(oracle: OracleSpec, pool_size: int, policy: SplitPolicy, budget: int) -> SplitUniverse:
    if oracle.exhaustive_splits:
        return exhaustive_universe(pool_size, policy, limit=budget)
    return universe_from_seeds(pool_size, policy, range(1, oracle.split_seeds + 1))


# ========== ENUMERATION ==========
def enumerate_systems(
    spec: PopulationSpec,
    universe: SplitUniverse,
    budget: int = DEFAULT_BUDGET,
) -> List[Tuple[Dict[str, str], Split]]:
    required = nuisance_combination_count(spec) * len(universe.splits)
    if required > budget:
        raise BudgetExceededError(f"{required} systems exceed the enumeration budget of {budget}")
    return [(combo, split) for combo in nuisance_combinations(spec) for split in universe.splits]


def enumerated_configs(
    spec: PopulationSpec,
    universe: SplitUniverse,
    budget: int = DEFAULT_BUDGET,
    master_seed: int = 0,
) -> List[SystemConfig]:
    """The enumeration as SystemConfigs, usable as a sample by the Monte Carlo estimators"""
    return [
        SystemConfig(
            system_id=i,
            nuisance_values=combo,
            split=split,
            system_seed=derive_seed(master_seed, ["sys", i]),
        )
        for i, (combo, split) in enumerate(enumerate_systems(spec, universe, budget), start=1)
    ]


def enumerate_armed(
    spec: PopulationSpec,
    universe: SplitUniverse,
    arm: Arm,
    budget: int = DEFAULT_BUDGET,
    master_seed: int = 0,
) -> List[ArmedSystem]:
    configs = enumerated_configs(spec, universe, budget, master_seed)
    contrast = spec.contrast
    if contrast.kind == ContrastKind.simple:
        value = contrast.treatment if arm == Arm.treatment else contrast.control
        arm_combos = [{contrast.variable.name: value}]
    else:
        broad = contrast.treatment_method if arm == Arm.treatment else contrast.control_method
        arm_combos = expand_broad_method(broad)
    if len(configs) * len(arm_combos) > budget:
        raise BudgetExceededError(
            f"{len(configs) * len(arm_combos)} {arm.value} systems exceed the enumeration budget of {budget}"
        )

    armed = []
    for config in configs:
        for combo in arm_combos:
            if len(arm_combos) > 1:
                # one unit per component combination
                config = config.model_copy(update={"system_id": len(armed) + 1})
            armed.append(ArmedSystem(base=config, arm=arm, full_values={**config.nuisance_values, **combo}))
    return armed


# ========== EXACT VALUES ==========
def exact_ege(
    spec: PopulationSpec,
    arm: Arm,
    executor_id: str,
    universe: SplitUniverse,
    metric: MetricSpec,
    pool: Optional[DataPool] = None,
    params: Optional[SyntheticSurfaceParams] = None,
    budget: int = DEFAULT_BUDGET,
    master_seed: int = 0,
    workers: int = 1,
) -> float:
    pool = pool if pool is not None else load_pool(spec.data_source)
    armed = enumerate_armed(spec, universe, arm, budget, master_seed)
    records = execute_all(armed, pool, executor_id, metric, params, workers)
    value = math.fsum(r.mean_loss for r in records) / len(records)
    logger.info("exact EGE (%s) over %d systems: %r", arm.value, len(records), value)
    return value


def exact_ate(
    spec: PopulationSpec,
    executor_id: str,
    universe: SplitUniverse,
    metric: MetricSpec,
    pool: Optional[DataPool] = None,
    params: Optional[SyntheticSurfaceParams] = None,
    budget: int = DEFAULT_BUDGET,
    master_seed: int = 0,
    workers: int = 1,
) -> float:
    pool = pool if pool is not None else load_pool(spec.data_source)
    kwargs = dict(pool=pool, params=params, budget=budget, master_seed=master_seed, workers=workers)
    return (exact_ege(spec, Arm.treatment, executor_id, universe, metric, **kwargs)
            - exact_ege(spec, Arm.control, executor_id, universe, metric, **kwargs))
