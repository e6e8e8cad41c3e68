# test_inference.py
import itertools

import numpy as np
import pytest

from exceptions import ContractError, SizingError
from inference import (
    _bootstrap_means,
    binomial_interval,
    independent_system_test,
    paired_system_test,
    shifted_bootstrap_test,
)
from schemas import PairedMode


def _bootstrap_oracle(losses_a, losses_b, two_sided=False):
    diffs = [a - b for a, b in zip(losses_a, losses_b)]
    m = len(diffs)
    delta = sum(losses_a) / m - sum(losses_b) / m
    means = [sum(diffs[i] for i in idx) / m for idx in itertools.product(range(m), repeat=m)]
    centre = sum(means) / len(means)
    shifted = [x - centre for x in means]
    if two_sided:
        hits = sum(abs(s) >= abs(delta) - 1e-12 for s in shifted)
    else:
        hits = sum(s >= delta - 1e-12 for s in shifted)
    return hits / len(shifted)


def test_shifted_bootstrap_matches_enumeration_for_three_instances():
    a, b = [1.0, 1.0, 0.0], [0.0, 0.0, 0.0]
    result = shifted_bootstrap_test(a, b)
    assert result.exhaustive and result.K == 27
    assert result.p_value == _bootstrap_oracle(a, b)
    assert result.statistic == pytest.approx(2 / 3)


@pytest.mark.parametrize("a, b", [([1.0, 0.0, 0.0], [0.0, 1.0, 1.0]), ([0.0, 1.0, 1.0, 0.0], [1.0, 1.0, 0.0, 0.0])])
def test_shifted_bootstrap_two_sided_matches_enumeration(a, b):
    result = shifted_bootstrap_test(a, b, K=1000, two_sided=True)
    assert result.exhaustive
    assert result.p_value == _bootstrap_oracle(a, b, two_sided=True)


def test_identical_losses_never_reject():
    losses = [1.0, 0.0, 1.0, 1.0, 0.0]
    result = shifted_bootstrap_test(losses, losses, K=2000, seed=3)
    assert result.statistic == 0.0
    assert result.p_value >= 0.5
    assert not result.reject


def test_bootstrap_shift_centres_at_zero():
    means = _bootstrap_means(np.array([0.3, 0.1, 0.9, 0.4]), K=5000, seed=1, exhaustive=False)
    assert abs((means - means.mean()).mean()) < 1e-12


def test_large_test_sets_resample_instead_of_enumerating():
    rng = np.random.default_rng(0)
    losses_a = rng.integers(0, 2, size=100_000).astype(float).tolist()
    losses_b = rng.integers(0, 2, size=100_000).astype(float).tolist()
    result = shifted_bootstrap_test(losses_a, losses_b, K=50, seed=2)
    assert not result.exhaustive
    assert result.K == 50
    assert shifted_bootstrap_test([0.0, 1.0, 1.0], [1.0, 0.0, 0.0], K=27).exhaustive
    assert not shifted_bootstrap_test([0.0, 1.0, 1.0], [1.0, 0.0, 0.0], K=26).exhaustive


def test_shifted_bootstrap_is_seeded():
    a = [1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0]
    b = [0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0]
    assert shifted_bootstrap_test(a, b, K=500, seed=9) == shifted_bootstrap_test(a, b, K=500, seed=9)
    assert not shifted_bootstrap_test(a, b, K=500, seed=9).exhaustive


def test_shifted_bootstrap_rejects_bad_input():
    with pytest.raises(ContractError):
        shifted_bootstrap_test([1.0], [1.0, 0.0])
    with pytest.raises(SizingError):
        shifted_bootstrap_test([], [])


def test_sign_flip_examples():
    assert paired_system_test([0.0, 0.0, 0.0]).p_value == 1.0
    result = paired_system_test([0.1, 0.2, 0.15])
    assert result.exhaustive and result.K == 8
    assert result.statistic == pytest.approx(0.15)
    assert result.p_value == 0.25
    with pytest.raises(SizingError):
        paired_system_test([0.3])


def test_sign_flip_one_sided():
    result = paired_system_test([0.1, 0.2, 0.15], two_sided=False)
    assert result.p_value == 1 / 8


def test_sign_flip_sampled_agrees_with_exhaustive():
    ites = list(np.random.default_rng(2).normal(0.02, 0.1, size=12))
    exact = paired_system_test(ites)
    sampled = paired_system_test(ites, K=20_000, seed=5, exhaustive=False)
    assert abs(exact.p_value - sampled.p_value) < 0.02


def test_paired_bootstrap_mode():
    result = paired_system_test([0.1, 0.2, 0.15], mode=PairedMode.bootstrap)
    assert result.exhaustive and result.K == 27
    assert 0.0 <= result.p_value <= 1.0


def test_independent_examples():
    assert independent_system_test([0.1, 0.2], [0.2, 0.1]).p_value == 1.0
    result = independent_system_test([1.0, 1.0], [0.0])
    assert result.exhaustive and result.K == 3
    assert result.statistic == 1.0
    assert result.p_value == pytest.approx(1 / 3)
    with pytest.raises(SizingError):
        independent_system_test([1.0], [0.0])


def test_independent_is_invariant_to_order_within_groups():
    a, b = [0.3, 0.1, 0.5, 0.2], [0.4, 0.0, 0.6]
    assert independent_system_test(a, b).p_value == independent_system_test(a[::-1], b[::-1]).p_value


def test_independent_sampled_path():
    rng = np.random.default_rng(1)
    a, b = list(rng.normal(0.3, 0.1, 20)), list(rng.normal(0.2, 0.1, 20))
    result = independent_system_test(a, b, K=3000, seed=4)
    assert not result.exhaustive and result.K == 3000
    assert result == independent_system_test(a, b, K=3000, seed=4)


def test_binomial_interval_brackets_alpha():
    lo, hi = binomial_interval(400, 0.05, 0.99)
    assert lo < 0.05 < hi
    assert 0.0 <= lo and hi <= 1.0
