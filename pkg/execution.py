# execution.py
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from exceptions import ContractError, HarnessError, RunFailure, SizingError, UnknownExecutorError
from pipelines import check_pipeline_config, run_text_pipeline
from population import expand_broad_method
from sampling import rng_for
from schemas import (
    Arm,
    ArmedSystem,
    ContrastKind,
    DataPool,
    DataSourceKind,
    DataSourceSpec,
    MetricId,
    MetricSpec,
    PopulationSpec,
    RunRecord,
    SplitSummary,
    SyntheticSurfaceParams,
)

logger = logging.getLogger(__name__)

# (armed system, pool, metric, surface params) -> (per-instance losses, degenerate flag)
Executor = Callable[[ArmedSystem, DataPool, MetricSpec, Optional[SyntheticSurfaceParams]], Tuple[List[float], bool]]

_EXECUTORS: Dict[str, Executor] = {}


def register_executor(executor_id: str, fn: Executor) -> None:
    _EXECUTORS[executor_id] = fn


def registered_executors() -> List[str]:
    return sorted(_EXECUTORS)


def get_executor(executor_id: str) -> Executor:
    try:
        return _EXECUTORS[executor_id]
    except KeyError:
        raise UnknownExecutorError(f"no executor registered as {executor_id!r} (known: {registered_executors()})")


# ========== DATA ==========
def generate_synthetic_corpus(
    n_docs: int,
    vocab_size: int,
    class_signal_strength: float,
    doc_length: int,
    seed: int,
    case_noise: float = 0.2,
) -> DataPool:
    """Balanced two-class corpus.

    Each token is drawn from its class's half of the vocabulary with probability
    ``class_signal_strength`` and from the whole vocabulary otherwise, then
    capitalised with probability ``case_noise``.
    """
    if n_docs < 2:
        raise SizingError("a two-class corpus needs at least 2 documents")
    if doc_length < 1:
        raise SizingError("documents need at least one token")
    if vocab_size < 2:
        raise SizingError("vocabulary needs at least one signal token per class")
    rng = np.random.default_rng(seed)
    vocab = [f"w{i:04d}" for i in range(vocab_size)]
    half = vocab_size // 2
    # class 0 owns [0, half), class 1 owns [half, vocab_size)
    offsets, widths = (0, half), (half, vocab_size - half)

    instances = []
    for i in range(n_docs):
        label = i % 2
        from_signal = rng.random(doc_length) < class_signal_strength
        signal_tokens = offsets[label] + rng.integers(0, widths[label], size=doc_length)
        any_tokens = rng.integers(0, vocab_size, size=doc_length)
        capitalised = rng.random(doc_length) < case_noise
        words = []
        for use_signal, s_tok, a_tok, cap in zip(from_signal, signal_tokens, any_tokens, capitalised):
            word = vocab[int(s_tok if use_signal else a_tok)]
            words.append(word.capitalize() if cap else word)
        instances.append((" ".join(words), str(label)))
    return DataPool(instances=instances, class_set=["0", "1"])


def _read_jsonl(path: str) -> DataPool:
    instances = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            row = json.loads(line)
            instances.append((str(row["text"]), str(row["label"])))
    if not instances:
        raise SizingError(f"{path} holds no instances")
    return DataPool(instances=instances, class_set=sorted({label for _, label in instances}))


def load_pool(source: DataSourceSpec) -> DataPool:
    if source.kind == DataSourceKind.jsonl:
        if not source.path:
            raise ContractError("jsonl data source needs a path")
        return _read_jsonl(source.path)
    return generate_synthetic_corpus(
        n_docs=source.n_docs,
        vocab_size=source.vocab_size,
        class_signal_strength=source.class_signal_strength,
        doc_length=source.doc_length,
        seed=source.seed,
        case_noise=source.case_noise,
    )


def source_size(source: DataSourceSpec) -> int:
    if source.kind == DataSourceKind.synthetic_corpus:
        return source.n_docs
    return load_pool(source).size


# ========== METRICS ==========
def score(metric: MetricSpec, y_true: List[int], y_pred: List[int]) -> List[float]:
    hits = np.asarray(y_true) == np.asarray(y_pred)
    if metric.metric_id == MetricId.zero_one_agreement:
        return [float(h) for h in hits]
    return [float(not h) for h in hits]


# ========== EXECUTORS ==========
def _text_pipeline(
    armed: ArmedSystem,
    pool: DataPool,
    metric: MetricSpec,
    params: Optional[SyntheticSurfaceParams],
) -> Tuple[List[float], bool]:
    check_pipeline_config(armed.full_values)
    class_index = {label: i for i, label in enumerate(pool.class_set)}
    split = armed.base.split
    documents, labels = pool.documents, [class_index[label] for label in pool.labels]
    train_docs = [documents[i] for i in split.train_indices]
    y_train = [labels[i] for i in split.train_indices]
    test_docs = [documents[i] for i in split.test_indices]
    y_test = [labels[i] for i in split.test_indices]

    degenerate = len(set(y_train)) < 2
    if degenerate:
        majority = int(np.bincount(y_train, minlength=len(pool.class_set)).argmax())
        logger.warning("system %d (%s): single-class training split, predicting majority class",
                       armed.base.system_id, armed.arm.value)
        predictions = [majority] * len(test_docs)
    else:
        predictions = run_text_pipeline(
            armed.full_values, train_docs, y_train, test_docs,
            seed=armed.base.system_seed, n_classes=len(pool.class_set),
        )
    return score(metric, y_test, predictions), degenerate


def run_synthetic(armed: ArmedSystem, params: SyntheticSurfaceParams) -> List[float]:
    """Per-instance losses from an additive response surface.

    Split noise, instance noise and treatment heterogeneity are seeded from the
    split and system seeds only, so both arms of a pair see the same draws.
    """
    split = armed.base.split
    level = params.base_loss + math.fsum(
        params.effects.get(name, {}).get(value, 0.0) for name, value in armed.full_values.items()
    )
    if armed.arm == Arm.treatment:
        level += params.treatment_effect + math.fsum(
            params.interaction_effects.get(name, {}).get(value, 0.0) for name, value in armed.full_values.items()
        )
        if params.treatment_split_sd > 0:
            level += params.treatment_split_sd * rng_for(split.seed, ["treatment-heterogeneity"]).standard_normal()
    noise_split = 0.0
    if params.split_noise_sd > 0:
        noise_split = params.split_noise_sd * rng_for(split.seed, ["split-noise"]).standard_normal()
    m = len(split.test_indices)
    noise_instance = np.zeros(m)
    if params.instance_noise_sd > 0:
        noise_instance = params.instance_noise_sd * rng_for(armed.base.system_seed, ["instance-noise"]).standard_normal(m)
    losses = level + noise_split + noise_instance
    if params.clip:
        losses = np.clip(losses, 0.0, 1.0)
    return [float(v) for v in losses]


def _surface_level(params: SyntheticSurfaceParams, values: Dict[str, str], treated: bool) -> float:
    level = math.fsum(params.effects.get(name, {}).get(value, 0.0) for name, value in values.items())
    if treated:
        level += math.fsum(
            params.interaction_effects.get(name, {}).get(value, 0.0) for name, value in values.items()
        )
    return level


def expected_synthetic_ate(population: PopulationSpec, params: SyntheticSurfaceParams) -> float:
    """Population ATE of the unclipped surface under the declared sampling weights"""
    contrast = population.contrast
    if contrast.kind == ContrastKind.simple:
        name = contrast.variable.name
        arm_gap = (_surface_level(params, {name: contrast.treatment}, True)
                   - _surface_level(params, {name: contrast.control}, False))
    else:
        treated = [_surface_level(params, c, True) for c in expand_broad_method(contrast.treatment_method)]
        controls = [_surface_level(params, c, False) for c in expand_broad_method(contrast.control_method)]
        arm_gap = math.fsum(treated) / len(treated) - math.fsum(controls) / len(controls)
    # nuisance main effects cancel between arms; only their interactions remain
    nuisance_gap = math.fsum(
        w * params.interaction_effects.get(var.name, {}).get(value, 0.0)
        for var in population.nuisance
        for value, w in zip(var.values, var.weights)
    )
    return params.treatment_effect + arm_gap + nuisance_gap


def _synthetic_surface(
    armed: ArmedSystem,
    pool: DataPool,
    metric: MetricSpec,
    params: Optional[SyntheticSurfaceParams],
) -> Tuple[List[float], bool]:
    if params is None:
        raise ContractError("synthetic_surface executor needs surface parameters")
    return run_synthetic(armed, params), False


register_executor("text_pipeline", _text_pipeline)
register_executor("synthetic_surface", _synthetic_surface)


def execute_system(
    armed: ArmedSystem,
    pool: DataPool,
    executor_id: str,
    metric: MetricSpec,
    params: Optional[SyntheticSurfaceParams] = None,
) -> RunRecord:
    executor = get_executor(executor_id)
    split = armed.base.split
    if not split.test_indices:
        raise ContractError(f"system {armed.base.system_id} has an empty test set")
    if max(split.train_indices + split.test_indices) >= pool.size:
        raise ContractError(f"system {armed.base.system_id} indexes past the pool of {pool.size}")

    started = time.perf_counter()
    losses, degenerate = executor(armed, pool, metric, params)
    return RunRecord(
        system_id=armed.base.system_id,
        arm=armed.arm,
        full_values=armed.full_values,
        split=SplitSummary(
            n_train=len(split.train_indices),
            n_test=len(split.test_indices),
            split_seed=split.seed,
        ),
        per_instance_losses=losses,
        mean_loss=math.fsum(losses) / len(losses),
        executor_id=executor_id,
        wall_time=time.perf_counter() - started,
        degenerate=degenerate,
    )


# ========== FAN-OUT ==========
def _execute_one(armed: ArmedSystem, pool: DataPool, executor_id: str, metric: MetricSpec,
                 params: Optional[SyntheticSurfaceParams]) -> RunRecord:
    return execute_system(armed, pool, executor_id, metric, params)


def execute_all(
    armed_systems: List[ArmedSystem],
    pool: DataPool,
    executor_id: str,
    metric: MetricSpec,
    params: Optional[SyntheticSurfaceParams] = None,
    workers: int = 1,
) -> List[RunRecord]:
    """Run every armed system, in parallel processes when workers > 1.

    Records come back in input order whatever the scheduling.
    """
    get_executor(executor_id)
    records: List[RunRecord] = []
    task = partial(_execute_one, pool=pool, executor_id=executor_id, metric=metric, params=params)
    try:
        if workers <= 1 or len(armed_systems) < 2:
            for armed in armed_systems:
                records.append(task(armed))
        else:
            chunksize = max(1, len(armed_systems) // (workers * 4))
            with ProcessPoolExecutor(max_workers=workers) as pool_executor:
                for record in pool_executor.map(task, armed_systems, chunksize=chunksize):
                    records.append(record)
    except HarnessError as exc:
        failing = armed_systems[len(records)]
        raise RunFailure(
            f"system {failing.base.system_id} ({failing.arm.value}) failed: {exc}",
            completed=[(r.system_id, r.arm.value) for r in records],
            failed=(failing.base.system_id, failing.arm.value),
        ) from exc
    except Exception as exc:
        failing = armed_systems[min(len(records), len(armed_systems) - 1)]
        raise RunFailure(
            f"system {failing.base.system_id} ({failing.arm.value}) crashed: {exc!r}",
            completed=[(r.system_id, r.arm.value) for r in records],
            failed=(failing.base.system_id, failing.arm.value),
        ) from exc
    logger.info("executed %d armed systems with %s", len(records), executor_id)
    return records
