# test_sampling.py
import math

import numpy as np
import pytest

from conftest import synthetic_population
from exceptions import ContractError, SizingError
from sampling import assign_arms, derive_seed, draw_split, sample_systems, split_sizes
from schemas import (
    Arm,
    BroadMethodSpec,
    Design,
    MethodVariable,
    PopulationSpec,
    SplitPolicy,
    TreatmentContrast,
)


def test_derive_seed_is_deterministic_and_path_sensitive():
    assert derive_seed(7, ["sys", 1]) == derive_seed(7, ["sys", 1])
    assert derive_seed(7, ["sys", 1]) != derive_seed(7, ["sys", 2])
    assert derive_seed(7, ["sys", 1]) != derive_seed(7, ["sys", "1"])
    assert derive_seed(7, []) != 7


def test_derive_seed_has_no_collisions_over_many_paths():
    seeds = {derive_seed(7, ["sys", i]) for i in range(10_000)}
    assert len(seeds) == 10_000


@pytest.mark.parametrize("pool, fraction, expected", [(10, 0.8, (8, 2)), (2, 0.5, (1, 1))])
def test_split_sizes(pool, fraction, expected):
    assert split_sizes(pool, SplitPolicy(train_fraction=fraction)) == expected


def test_draw_split_is_disjoint_and_deterministic():
    policy = SplitPolicy(train_fraction=0.8)
    split = draw_split(10, policy, seed=4)
    assert len(split.train_indices) == 8 and len(split.test_indices) == 2
    assert not set(split.train_indices) & set(split.test_indices)
    assert draw_split(10, policy, seed=4) == split


def test_splits_respect_policy_for_many_seeds():
    policy = SplitPolicy(train_fraction=0.7)
    for seed in range(1000):
        split = draw_split(13, policy, seed)
        assert len(split.train_indices) == 9 and len(split.test_indices) == 4
        assert not set(split.train_indices) & set(split.test_indices)


def test_pool_too_small_is_sizing_error():
    with pytest.raises(SizingError):
        split_sizes(1, SplitPolicy())
    with pytest.raises(SizingError):
        split_sizes(4, SplitPolicy(train_size=4))


def test_sample_systems_is_reproducible(population):
    first = sample_systems(population, 3, master_seed=11)
    assert first == sample_systems(population, 3, master_seed=11)
    assert [c.system_id for c in first] == [1, 2, 3]


def test_adding_systems_keeps_earlier_ones(population):
    assert sample_systems(population, 5, 11)[:3] == sample_systems(population, 3, 11)


def test_single_value_population_gives_that_combination():
    spec = synthetic_population(sizes=(1, 1))
    (config,) = sample_systems(spec, 1, master_seed=2)
    assert config.nuisance_values == {"v1": "x10", "v2": "x20"}


def test_uniform_value_frequencies():
    spec = PopulationSpec(
        contrast=TreatmentContrast(variable=MethodVariable(name="v1", values=["A", "B"]), treatment="A", control="B"),
        nuisance=[MethodVariable(name="v2", values=["C", "G", "H"])],
        data_source={"n_docs": 10},
    )
    n = 30_000
    configs = sample_systems(spec, n, master_seed=99, pool_size=10)
    bound = 3 * math.sqrt((1 / 3) * (2 / 3) / n)
    for value in ("C", "G", "H"):
        freq = sum(c.nuisance_values["v2"] == value for c in configs) / n
        assert abs(freq - 1 / 3) <= bound


def test_paired_assignment_shares_base(population):
    configs = sample_systems(population, 2, master_seed=1)
    armed = assign_arms(configs, Design.paired, population.contrast, seed=5)
    assert len(armed) == 4
    for treated, control in zip(armed[::2], armed[1::2]):
        assert treated.base == control.base
        assert (treated.arm, control.arm) == (Arm.treatment, Arm.control)
        assert treated.full_values["method"] == "A" and control.full_values["method"] == "B"
        assert {k: v for k, v in treated.full_values.items() if k != "method"} == treated.base.nuisance_values


def test_independent_assignment_is_a_fair_coin_and_independent_of_nuisance():
    spec = synthetic_population(sizes=(3,))
    n = 10_000
    configs = sample_systems(spec, n, master_seed=8, pool_size=40)
    armed = assign_arms(configs, Design.independent, spec.contrast, seed=derive_seed(8, ["assign"]))
    assert len(armed) == n
    treated = np.array([a.arm == Arm.treatment for a in armed], dtype=float)
    assert abs(treated.sum() - n / 2) <= 3 * math.sqrt(n * 0.25)
    for value in ("x10", "x11", "x12"):
        indicator = np.array([a.base.nuisance_values["v1"] == value for a in armed], dtype=float)
        r = np.corrcoef(treated, indicator)[0, 1]
        assert abs(r) <= 3 / math.sqrt(n)


def test_broad_arms_draw_from_their_own_expansions():
    treatment = BroadMethodSpec(name="A", components=[
        MethodVariable(name="v1", values=["A", "B"]),
        MethodVariable(name="v2", values=["C", "G", "H"]),
    ])
    control = BroadMethodSpec(name="B", components=[
        MethodVariable(name="v1", values=["K", "L"]),
        MethodVariable(name="v2", values=["M", "N"]),
    ])
    spec = PopulationSpec(
        contrast=TreatmentContrast(kind="broad", treatment_method=treatment, control_method=control),
        nuisance=[MethodVariable(name="v3", values=["p", "q"])],
        data_source={"n_docs": 10},
    )
    armed = assign_arms(sample_systems(spec, 50, 3), Design.paired, spec.contrast, seed=4)
    for system in armed:
        if system.arm == Arm.treatment:
            assert system.full_values["v1"] in ("A", "B") and system.full_values["v2"] in ("C", "G", "H")
        else:
            assert system.full_values["v1"] in ("K", "L") and system.full_values["v2"] in ("M", "N")


def test_exhaustive_design_cannot_be_assigned(population):
    with pytest.raises(ContractError):
        assign_arms(sample_systems(population, 2, 1), Design.exhaustive, population.contrast, seed=1)
