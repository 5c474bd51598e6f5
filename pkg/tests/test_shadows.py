import numpy as np
import pytest

from robust_shadows.errors import InsufficientCopiesError, InvalidArgumentError, InvalidBudgetError, InvalidDimensionError
from robust_shadows.quantum_core import DensityMatrix, Observable, random_rank_r_state
from robust_shadows.shadows import (
    DirectOutcomes,
    EstimatorKind,
    ShadowSample,
    collect_shadows,
    default_mom_batch_size,
    direct_estimates,
    direct_measurements,
    estimate_observables,
    naive_direct_estimate,
    raw_estimates,
    shadow_snapshot,
)

from conftest import random_hermitian


def test_collect_shadows_shape_and_norm(rng):
    rho = random_rank_r_state(4, 2, rng)
    v = collect_shadows(rho, 1000, rng, chunk=128)
    assert v.shape == (1000, 4)
    np.testing.assert_allclose(np.linalg.norm(v, axis=1), 1.0)


def test_pure_state_in_dimension_one_direction(rng):
    # Measuring |0> can only return vectors with nonzero overlap with |0>.
    v = collect_shadows(DensityMatrix.from_pure([1, 0]), 500, rng)
    assert np.all(np.abs(v[:, 0]) > 0)


def test_snapshot_is_unbiased(rng):
    rho = random_rank_r_state(3, 1, rng)
    v = collect_shadows(rho, 40000, rng)
    avg = np.mean([shadow_snapshot(x) for x in v[:5000]], axis=0)
    assert np.trace(avg).real == pytest.approx(1.0)
    full = 4 * np.einsum("ni,nj->ij", v, v.conj()) / v.shape[0] - np.eye(3)
    assert np.abs(full - rho.matrix).max() < 0.05


def test_raw_estimates_unbiased(rng):
    rho = random_rank_r_state(4, 2, rng)
    o = random_hermitian(4, rng)
    x = raw_estimates(collect_shadows(rho, 100000, rng), o)
    truth = np.trace(o @ rho.matrix).real
    assert abs(x.mean() - truth) < 5 * x.std() / np.sqrt(x.size)


def test_identity_estimates_exactly_one(rng):
    v = collect_shadows(DensityMatrix.maximally_mixed(3), 50, rng)
    np.testing.assert_allclose(raw_estimates(v, np.eye(3)), 1.0)


def test_estimate_observables_matches_raw(rng):
    rho = random_rank_r_state(4, 2, rng)
    v = collect_shadows(rho, 2000, rng)
    obs = [random_hermitian(4, rng) for _ in range(5)] + [Observable.projector([1, 0, 0, 0])]
    for est in (EstimatorKind.empirical_mean(), EstimatorKind.median_of_means(100), EstimatorKind.truncated_mean(0.05)):
        got = estimate_observables(v, obs, est, row_budget=4 * 2000)
        want = est.apply_rows(np.stack([raw_estimates(v, o) for o in obs]))
        np.testing.assert_allclose(got, want, atol=1e-10)


def test_shadow_sample_list_input(rng):
    v = collect_shadows(DensityMatrix.maximally_mixed(2), 10, rng)
    samples = [ShadowSample(x) for x in v]
    np.testing.assert_allclose(raw_estimates(samples, np.eye(2) / 2), raw_estimates(v, np.eye(2) / 2))


def test_dimension_mismatch(rng):
    v = collect_shadows(DensityMatrix.maximally_mixed(2), 10, rng)
    with pytest.raises(InvalidDimensionError):
        estimate_observables(v, [np.eye(3)], EstimatorKind.empirical_mean())


def test_estimator_kind_validation():
    with pytest.raises(InvalidBudgetError):
        EstimatorKind.truncated_mean(0.25)
    with pytest.raises(InvalidArgumentError):
        EstimatorKind.median_of_means(0)
    with pytest.raises(InvalidArgumentError):
        EstimatorKind("mode")
    assert EstimatorKind.truncated_mean(0.02).label == "truncated_mean(gamma=0.02)"


def test_direct_measurements(rng):
    rho = DensityMatrix.from_pure([1, 0])
    obs = [np.diag([1.0, 0.0]), np.diag([0.0, 1.0]), np.eye(2) / 2]
    out = direct_measurements(rho, obs, 30001, rng)
    assert len(out) == 30000
    est = direct_estimates(out)
    assert est[0] == 1.0 and est[1] == 0.0
    assert est[2] == pytest.approx(0.5, abs=0.02)
    with pytest.raises(InsufficientCopiesError):
        direct_measurements(rho, obs, 2, rng)
    with pytest.raises(InvalidArgumentError):
        direct_measurements(rho, [2 * np.eye(2)], 10, rng)


def test_direct_outcomes_validation():
    with pytest.raises(InvalidArgumentError):
        DirectOutcomes(np.array([0, 1]), np.array([0, 2]), 2)
    with pytest.raises(InvalidArgumentError):
        DirectOutcomes(np.array([0, 3]), np.array([0, 1]), 2)


def test_naive_with_adversary(rng):
    rho = DensityMatrix.maximally_mixed(2)
    obs = [np.diag([1.0, 0.0])]
    flipped = lambda o: (o.with_bits(np.ones_like(o.bits)), None)  # noqa: E731
    assert naive_direct_estimate(rho, obs, 100, rng, flipped)[0] == 1.0


def test_default_mom_batch_size():
    assert default_mom_batch_size(10000) == 2000


@pytest.mark.parametrize("d,r", [(2, 1), (3, 2), (5, 3)])
def test_outcome_law_matches_literal_protocol(d, r):
    from scipy import stats

    rng = np.random.default_rng(d * 10 + r)
    rho = random_rank_r_state(d, r, rng)
    o = random_hermitian(d, rng)
    a = raw_estimates(collect_shadows(rho, 40000, rng, method="unitary"), o)
    b = raw_estimates(collect_shadows(rho, 40000, rng, method="outcome_law"), o)
    assert stats.ks_2samp(a, b).pvalue > 1e-3
    # second moments of the snapshot entries agree too
    va = collect_shadows(rho, 40000, rng, method="unitary")
    vb = collect_shadows(rho, 40000, rng, method="outcome_law")
    ma = np.einsum("ni,nj->ij", va, va.conj()) / va.shape[0]
    mb = np.einsum("ni,nj->ij", vb, vb.conj()) / vb.shape[0]
    assert np.abs(ma - mb).max() < 0.02


def test_unknown_shadow_method(rng):
    with pytest.raises(InvalidArgumentError):
        collect_shadows(DensityMatrix.maximally_mixed(2), 10, rng, method="magic")
