# conftest.py
from pathlib import Path
from typing import Dict, List, Optional

import pytest

from schemas import (
    Arm,
    ExperimentSpec,
    MethodVariable,
    PopulationSpec,
    RunRecord,
    SplitSummary,
    SyntheticSurfaceParams,
    TreatmentContrast,
)
from settings import get_settings

EXPERIMENTS = Path(__file__).parent / "experiments"


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    for name in ("EGE_HARNESS_WORKERS", "EGE_HARNESS_OUTPUT_DIR", "EGE_HARNESS_ORACLE_BUDGET", "EGE_HARNESS_LOG_LEVEL"):
        monkeypatch.delenv(name, raising=False)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


def make_record(
    system_id: int,
    losses: List[float],
    arm: Arm = Arm.treatment,
    values: Optional[Dict[str, str]] = None,
    split_seed: int = 1,
) -> RunRecord:
    return RunRecord(
        system_id=system_id,
        arm=arm,
        full_values=values or {},
        split=SplitSummary(n_train=10, n_test=len(losses), split_seed=split_seed),
        per_instance_losses=losses,
        mean_loss=sum(losses) / len(losses),
        executor_id="synthetic_surface",
    )


def synthetic_population(sizes=(3, 2, 4), n_docs: int = 40) -> PopulationSpec:
    nuisance = [
        MethodVariable(name=f"v{i + 1}", values=[f"x{i + 1}{j}" for j in range(size)])
        for i, size in enumerate(sizes)
    ]
    return PopulationSpec(
        contrast=TreatmentContrast(
            variable=MethodVariable(name="method", values=["A", "B"]),
            treatment="A",
            control="B",
        ),
        nuisance=nuisance,
        data_source={"n_docs": n_docs},
        executor_id="synthetic_surface",
    )


def synthetic_experiment(
    S: int = 50,
    tau: float = 0.05,
    master_seed: int = 3,
    design: str = "paired",
    **surface,
) -> ExperimentSpec:
    params = {
        "base_loss": 0.3,
        "treatment_effect": tau,
        "effects": {"v1": {"x10": 0.02, "x11": 0.0, "x12": -0.03}, "v3": {"x30": 0.04, "x33": -0.01}},
        "split_noise_sd": 0.05,
        "instance_noise_sd": 0.1,
    }
    params.update(surface)
    return ExperimentSpec(
        name="synthetic-test",
        population=synthetic_population(),
        S=S,
        design=design,
        master_seed=master_seed,
        synthetic=SyntheticSurfaceParams(**params),
        inference={"K": 2000},
    )


@pytest.fixture
def population() -> PopulationSpec:
    return synthetic_population()


MINIMAL = """\
name: minimal
S: 4
design: paired
master_seed: 3
population:
  executor_id: synthetic_surface
  contrast:
    variable: {name: method, values: ["A", "B"]}
    treatment: A
    control: B
  nuisance:
    - {name: v1, values: ["a", "b"]}
synthetic:
  base_loss: 0.3
  treatment_effect: 0.05
"""
