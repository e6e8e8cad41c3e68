# inference.py
import itertools
import math
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import binom

from exceptions import ContractError, SizingError
from schemas import PairedMode, TestId, TestResult

DEFAULT_K = 10_000
DEFAULT_ALPHA = 0.05
# resampled statistics this close to the observed one count as reaching it
TIE_TOLERANCE = 1e-12
# M^M resamples outgrow any usable K well before this
BOOTSTRAP_EXHAUSTIVE_MAX_M = 12
SIGN_FLIP_EXHAUSTIVE_MAX_S = 20
RELABEL_EXHAUSTIVE_MAX = 100_000
_CHUNK_CELLS = 4_000_000


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


def _reaches(stats: np.ndarray, observed: float, two_sided: bool) -> int:
    if two_sided:
        return int(np.count_nonzero(np.abs(stats) >= abs(observed) - TIE_TOLERANCE))
    return int(np.count_nonzero(stats >= observed - TIE_TOLERANCE))


def _row_chunks(rows: int, width: int) -> Iterator[Tuple[int, int]]:
    step = max(1, _CHUNK_CELLS // max(width, 1))
    for start in range(0, rows, step):
        yield start, min(rows, start + step)


def _result(test_id, statistic, hits, total, alpha, seed, two_sided, exhaustive) -> TestResult:
    p_value = hits / total
    return TestResult(
        test_id=test_id,
        statistic=statistic,
        p_value=p_value,
        K=total,
        alpha=alpha,
        reject=p_value < alpha,
        seed=seed,
        two_sided=two_sided,
        exhaustive=exhaustive,
    )


# ========== BOOTSTRAP ==========
def _bootstrap_means(values: np.ndarray, K: int, seed: int, exhaustive: bool) -> np.ndarray:
    n = len(values)
    if exhaustive:
        idx = np.array(list(itertools.product(range(n), repeat=n)), dtype=np.int64)
        return values[idx].mean(axis=1)
    rng = np.random.default_rng(seed)
    means = np.empty(K)
    for start, stop in _row_chunks(K, n):
        means[start:stop] = values[rng.integers(0, n, size=(stop - start, n))].mean(axis=1)
    return means


def _shifted_bootstrap(values: Sequence[float], observed: float, K: int, seed: int,
                       two_sided: bool, exhaustive: Optional[bool]) -> Tuple[int, int, bool]:
    values = np.asarray(values, dtype=float)
    n = len(values)
    if exhaustive is None:
        exhaustive = n <= BOOTSTRAP_EXHAUSTIVE_MAX_M and n ** n <= K
    means = _bootstrap_means(values, K, seed, exhaustive)
    # centre the bootstrap distribution at zero
    shifted = means - means.mean()
    return _reaches(shifted, observed, two_sided), len(shifted), exhaustive


def shifted_bootstrap_test(
    losses_a: Sequence[float],
    losses_b: Sequence[float],
    K: int = DEFAULT_K,
    alpha: float = DEFAULT_ALPHA,
    seed: int = 0,
    two_sided: bool = False,
    exhaustive: Optional[bool] = None,
) -> TestResult:
    """Bootstrap over the instances of one test set, shifted to mean zero.

    This is the single-test-set practice: it ignores that another training set
    would have produced different predictions. With ``exhaustive`` left unset
    every one of the M^M resamples is enumerated whenever M^M <= K.
    """
    if len(losses_a) != len(losses_b):
        raise ContractError(f"losses cover {len(losses_a)} and {len(losses_b)} test instances")
    if not losses_a:
        raise SizingError("test set is empty")
    if K < 1:
        raise SizingError("K must be at least 1")
    delta = _mean(losses_a) - _mean(losses_b)
    diffs = [a - b for a, b in zip(losses_a, losses_b)]
    hits, total, exhaustive = _shifted_bootstrap(diffs, delta, K, seed, two_sided, exhaustive)
    return _result(TestId.shifted_bootstrap_test, delta, hits, total, alpha, seed, two_sided, exhaustive)


# ========== SYSTEM-LEVEL TESTS ==========
def _sign_flip(values: np.ndarray, observed: float, K: int, seed: int,
               two_sided: bool, exhaustive: bool) -> Tuple[int, int]:
    n = len(values)
    hits = 0
    if exhaustive:
        total = 2 ** n
        bits = np.arange(n, dtype=np.int64)
        for start, stop in _row_chunks(total, n):
            patterns = np.arange(start, stop, dtype=np.int64)[:, None]
            signs = 1.0 - 2.0 * ((patterns >> bits) & 1)
            hits += _reaches(signs @ values / n, observed, two_sided)
        return hits, total
    rng = np.random.default_rng(seed)
    for start, stop in _row_chunks(K, n):
        signs = rng.choice(np.array([-1.0, 1.0]), size=(stop - start, n))
        hits += _reaches(signs @ values / n, observed, two_sided)
    return hits, K


def paired_system_test(
    ites: Sequence[float],
    K: int = DEFAULT_K,
    alpha: float = DEFAULT_ALPHA,
    seed: int = 0,
    mode: PairedMode = PairedMode.sign_flip_permutation,
    two_sided: bool = True,
    exhaustive: Optional[bool] = None,
) -> TestResult:
    if len(ites) < 2:
        raise SizingError("the paired system test needs at least 2 systems")
    observed = _mean(ites)
    if mode == PairedMode.bootstrap:
        hits, total, exhaustive = _shifted_bootstrap(ites, observed, K, seed, two_sided, exhaustive)
    else:
        if exhaustive is None:
            exhaustive = len(ites) <= SIGN_FLIP_EXHAUSTIVE_MAX_S
        hits, total = _sign_flip(np.asarray(ites, dtype=float), observed, K, seed, two_sided, exhaustive)
    return _result(TestId.paired_system_test, observed, hits, total, alpha, seed, two_sided, exhaustive)


def independent_system_test(
    means_a: Sequence[float],
    means_b: Sequence[float],
    K: int = DEFAULT_K,
    alpha: float = DEFAULT_ALPHA,
    seed: int = 0,
    two_sided: bool = True,
    exhaustive: Optional[bool] = None,
) -> TestResult:
    """Permutation test relabelling systems between the two groups, group sizes fixed"""
    n_a, n_b = len(means_a), len(means_b)
    if n_a < 1 or n_b < 1 or n_a + n_b < 3:
        raise SizingError(f"groups of {n_a} and {n_b} systems are too small to relabel")
    observed = _mean(means_a) - _mean(means_b)
    pooled = np.asarray(list(means_a) + list(means_b), dtype=float)
    n = len(pooled)
    grand = math.fsum(pooled)
    relabelings = math.comb(n, n_a)
    if exhaustive is None:
        exhaustive = relabelings <= RELABEL_EXHAUSTIVE_MAX

    hits = 0
    if exhaustive:
        groups = np.array(list(itertools.combinations(range(n), n_a)), dtype=np.int64)
        sums = pooled[groups].sum(axis=1)
        stats = sums / n_a - (grand - sums) / n_b
        hits, total = _reaches(stats, observed, two_sided), relabelings
    else:
        rng = np.random.default_rng(seed)
        for start, stop in _row_chunks(K, n):
            shuffled = rng.permuted(np.tile(pooled, (stop - start, 1)), axis=1)
            sums = shuffled[:, :n_a].sum(axis=1)
            hits += _reaches(sums / n_a - (grand - sums) / n_b, observed, two_sided)
        total = K
    return _result(TestId.independent_system_test, observed, hits, total, alpha, seed, two_sided, exhaustive)


def binomial_interval(n: int, p: float, level: float = 0.99) -> Tuple[float, float]:
    """Equal-tailed exact binomial interval for a rejection rate, as rates"""
    lo, hi = binom.interval(level, n, p)
    return float(lo) / n, float(hi) / n
