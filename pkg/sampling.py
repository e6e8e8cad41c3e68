# sampling.py
import hashlib
import logging
import math
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from exceptions import ContractError, SizingError
from population import expand_broad_method, require_valid
from schemas import (
    Arm,
    ArmedSystem,
    ContrastKind,
    Design,
    PopulationSpec,
    Split,
    SplitPolicy,
    SplitUniverse,
    SystemConfig,
    TreatmentContrast,
)

logger = logging.getLogger(__name__)

Label = Union[str, int, Enum]


# ========== SEEDS ==========
def derive_seed(master_seed: int, path: Sequence[Label] = ()) -> int:
    """Hash a master seed and a label path into an independent 64-bit seed.

    The encoding tags every label with its type so ["sys", 1] and ["sys", "1"]
    land on different streams. An empty path still mixes the master seed.
    """
    digest = hashlib.sha256(f"ege-harness|{int(master_seed)}".encode("utf-8"))
    for label in path:
        if isinstance(label, Enum):
            label = label.value
        tag = "i" if isinstance(label, int) else "s"
        digest.update(f"\x1f{tag}:{label}".encode("utf-8"))
    return int.from_bytes(digest.digest()[:8], "big")


def rng_for(master_seed: int, path: Sequence[Label] = ()) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master_seed, path))


# ========== SPLITS ==========
def split_sizes(pool_size: int, policy: SplitPolicy) -> Tuple[int, int]:
    if pool_size < 2:
        raise SizingError(f"pool of {pool_size} instances cannot be split")
    if policy.train_size is not None:
        n_train = policy.train_size
    else:
        # the epsilon keeps 0.8 * 10 from flooring to 7
        n_train = int(math.floor(policy.train_fraction * pool_size + 1e-9))
    n_test = policy.test_size if policy.test_size is not None else pool_size - n_train
    if n_train < 1 or n_test < 1:
        raise SizingError(f"split policy gives N={n_train}, M={n_test} on a pool of {pool_size}")
    if n_train + n_test > pool_size:
        raise SizingError(f"N={n_train} + M={n_test} exceeds the pool of {pool_size}")
    return n_train, n_test


def draw_split(pool_size: int, policy: SplitPolicy, seed: int) -> Split:
    n_train, n_test = split_sizes(pool_size, policy)
    order = np.random.default_rng(seed).permutation(pool_size)
    return Split(
        train_indices=sorted(int(i) for i in order[:n_train]),
        test_indices=sorted(int(i) for i in order[n_train:n_train + n_test]),
        seed=seed,
    )


# ========== SYSTEMS ==========
def sample_systems(
    spec: PopulationSpec,
    S: int,
    master_seed: int,
    pool_size: Optional[int] = None,
    universe: Optional[SplitUniverse] = None,
) -> List[SystemConfig]:
    """Draw S processing systems i.i.d. (with replacement) from the population"""
    require_valid(spec)
    if S < 1:
        raise SizingError("S must be at least 1")
    if universe is None and pool_size is None:
        from execution import source_size
        pool_size = source_size(spec.data_source)
    if universe is not None and not universe.splits:
        raise SizingError("split universe is empty")

    configs = []
    for i in range(1, S + 1):
        rng = rng_for(master_seed, ["sys", i, "nuisance"])
        nuisance = {}
        for var in spec.nuisance:
            idx = int(rng.choice(len(var.values), p=np.asarray(var.weights, dtype=float)))
            nuisance[var.name] = var.values[idx]
        split_seed = derive_seed(master_seed, ["sys", i, "split"])
        if universe is not None:
            split = universe.splits[int(np.random.default_rng(split_seed).integers(len(universe.splits)))]
        else:
            split = draw_split(pool_size, spec.split_policy, split_seed)
        configs.append(SystemConfig(
            system_id=i,
            nuisance_values=nuisance,
            split=split,
            system_seed=derive_seed(master_seed, ["sys", i]),
        ))
    logger.debug("sampled %d systems from master seed %d", S, master_seed)
    return configs


def _arm_values(
    contrast: TreatmentContrast,
    arm: Arm,
    expansions: Dict[Arm, List[Dict[str, str]]],
    seed: int,
    system_id: int,
) -> Dict[str, str]:
    if contrast.kind == ContrastKind.simple:
        value = contrast.treatment if arm == Arm.treatment else contrast.control
        return {contrast.variable.name: value}
    combos = expansions[arm]
    pick = int(rng_for(seed, ["arm", system_id, arm, "combo"]).integers(len(combos)))
    return dict(combos[pick])


def assign_arms(
    configs: List[SystemConfig],
    design: Design,
    contrast: TreatmentContrast,
    seed: int,
) -> List[ArmedSystem]:
    if not configs:
        raise SizingError("no systems to assign")
    expansions = {}
    if contrast.kind == ContrastKind.broad:
        expansions = {
            Arm.treatment: expand_broad_method(contrast.treatment_method),
            Arm.control: expand_broad_method(contrast.control_method),
        }

    armed = []
    for config in configs:
        if design == Design.paired:
            arms = [Arm.treatment, Arm.control]
        elif design == Design.independent:
            coin = rng_for(seed, ["arm", config.system_id, "coin"]).random()
            arms = [Arm.treatment if coin < 0.5 else Arm.control]
        else:
            raise ContractError(f"arm assignment is undefined for design {design.value!r}")
        for arm in arms:
            values = dict(config.nuisance_values)
            values.update(_arm_values(contrast, arm, expansions, seed, config.system_id))
            armed.append(ArmedSystem(base=config, arm=arm, full_values=values))
    return armed
