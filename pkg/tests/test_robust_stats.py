import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robust_stats_helpers import two_point_extremal
from robust_shadows.errors import InvalidArgumentError, InvalidBudgetError
from robust_shadows.robust_stats import (
    DiscreteDistribution,
    empirical_mean,
    median_of_means,
    median_of_means_rows,
    quantile,
    trim_count,
    truncated_mean,
    truncated_mean_rows,
    worst_case_removing_shift,
)

finite = st.floats(-1e6, 1e6, allow_nan=False)


def test_trim_count_rounding():
    assert trim_count(100, 0.07) == 7
    assert trim_count(100, 0.29) == 29  # 0.29 * 100 is 28.999999999999996 in floating point
    with pytest.raises(InvalidBudgetError):
        trim_count(4, 0.5)
    with pytest.raises(InvalidBudgetError):
        trim_count(4, -0.1)


def test_truncated_mean_example():
    x = [100.0, 1, 2, 3, 4, 5, 6, 7, 8, -50]
    assert truncated_mean(x, 0.1) == pytest.approx(4.5)
    assert truncated_mean(x, 0.0) == pytest.approx(np.mean(x))


def test_median_of_means_example():
    x = [1, 1, 5, 5, 9, 9, 100]
    assert median_of_means(x, 2) == pytest.approx(5.0)  # trailing 100 dropped
    assert median_of_means([1, 3, 5, 7], 1) == pytest.approx(4.0)
    with pytest.raises(InvalidArgumentError):
        median_of_means([1.0], 2)


def test_empty_and_nonfinite_rejected():
    with pytest.raises(InvalidArgumentError):
        empirical_mean([])
    with pytest.raises(InvalidArgumentError):
        truncated_mean([1.0, np.nan, 2.0], 0.0)


def test_quantile():
    assert quantile([3, 1, 2, 4], 0.5) == 2
    assert quantile([3, 1, 2, 4], 0.0) == 1
    assert quantile([3, 1, 2, 4], 1.0) == 4


@settings(max_examples=60, deadline=None)
@given(st.lists(finite, min_size=5, max_size=60), st.floats(0, 0.3))
def test_truncated_mean_between_min_and_max(xs, gamma):
    if 2 * math.floor(gamma * len(xs) + 1e-9) >= len(xs):
        return
    t = truncated_mean(xs, gamma)
    assert min(xs) - 1e-6 <= t <= max(xs) + 1e-6


@settings(max_examples=60, deadline=None)
@given(st.lists(finite, min_size=5, max_size=60), st.floats(0, 0.3), finite, st.floats(0.1, 10))
def test_truncated_mean_affine_equivariant(xs, gamma, shift, scale):
    if 2 * math.floor(gamma * len(xs) + 1e-9) >= len(xs):
        return
    lhs = truncated_mean([scale * x + shift for x in xs], gamma)
    rhs = scale * truncated_mean(xs, gamma) + shift
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-3)


@settings(max_examples=40, deadline=None)
@given(st.lists(finite, min_size=4, max_size=40), st.integers(1, 4))
def test_rows_match_scalar(xs, K):
    if K > len(xs):
        return
    arr = np.array([xs, xs[::-1]])
    assert median_of_means_rows(arr, K)[0] == pytest.approx(median_of_means(xs, K))
    assert truncated_mean_rows(arr, 0.1)[1] == pytest.approx(truncated_mean(xs[::-1], 0.1))


@settings(max_examples=40, deadline=None)
@given(st.lists(finite, min_size=5, max_size=40), st.integers(0, 1000))
def test_truncated_mean_permutation_invariant(xs, seed):
    perm = np.random.default_rng(seed).permutation(len(xs))
    assert truncated_mean(np.array(xs)[perm], 0.1) == pytest.approx(truncated_mean(xs, 0.1), abs=1e-6)


def test_truncated_mean_resists_outliers(rng):
    x = rng.standard_normal(10000)
    x[:200] = 1e6
    assert abs(truncated_mean(x, 0.04)) < 0.1
    assert abs(empirical_mean(x)) > 1e3


def test_discrete_distribution():
    dist = DiscreteDistribution([0.0, 1.0], [0.5, 0.5])
    assert dist.mean == 0.5
    assert dist.central_moment(2) == pytest.approx(0.25)
    with pytest.raises(InvalidArgumentError):
        DiscreteDistribution([1.0, 0.0], [0.5, 0.5])
    with pytest.raises(InvalidArgumentError):
        DiscreteDistribution([0.0, 1.0], [0.5, 0.6])


def test_removing_shift_directions():
    dist = DiscreteDistribution([-1.0, 0.0, 1.0], [0.25, 0.5, 0.25])
    up, removed = worst_case_removing_shift(dist, 0.25, "up")
    assert removed == pytest.approx(0.25)
    assert up == pytest.approx(0.25 / 0.75)
    down, _ = worst_case_removing_shift(dist, 0.25, "down")
    assert down == pytest.approx(-up)
    with pytest.raises(InvalidBudgetError):
        worst_case_removing_shift(dist, 0.5)


def _random_normalized(rng, size):
    s = np.sort(rng.standard_normal(size) * rng.exponential(1.0, size))
    s = np.unique(s)
    m = rng.dirichlet(np.ones(s.size))
    return s, m


@pytest.mark.parametrize("h", [2, 3, 4])
def test_removing_shift_spec_bound_random(h):
    # Spec claim, checked on randomly drawn distributions: shift <= h/(h-1) xi^(1-1/h).
    rng = np.random.default_rng(h)
    for _ in range(200):
        s, m = _random_normalized(rng, 8)
        dist = DiscreteDistribution(s, m / m.sum())
        scale = dist.central_moment(h) ** (1 / h)
        dist = DiscreteDistribution((s - dist.mean) / scale, dist.masses)
        xi = rng.uniform(0.01, 0.3)
        for direction in ("up", "down"):
            shifted, _ = worst_case_removing_shift(dist, xi, direction)
            assert abs(shifted - dist.mean) <= h / (h - 1) * xi ** (1 - 1 / h) + 1e-12


@pytest.mark.parametrize("h", [2, 3, 4])
@pytest.mark.parametrize("xi", [0.01, 0.1, 0.3, 0.45])
def test_removing_shift_holder_bound_extremal(h, xi):
    # Provable bound xi^(1-1/h)/(1-xi) holds even on the extremal two-point law.
    dist = two_point_extremal(xi, h)
    shifted, _ = worst_case_removing_shift(dist, xi, "up")
    assert abs(shifted - dist.mean) <= xi ** (1 - 1 / h) / (1 - xi) + 1e-12


@pytest.mark.parametrize("h,xi", [(3, 0.45), (4, 0.3)])
def test_removing_shift_spec_bound_counterexample(h, xi):
    # Documents that the spec's constant h/(h-1) is too small for large xi;
    # see the decision ledger.
    dist = two_point_extremal(xi, h)
    shifted, _ = worst_case_removing_shift(dist, xi, "up")
    assert abs(shifted - dist.mean) > h / (h - 1) * xi ** (1 - 1 / h)
