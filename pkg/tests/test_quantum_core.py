import numpy as np
import pytest

from robust_shadows.errors import InvalidDimensionError, InvalidStateError, NumericIntegrityError
from robust_shadows.quantum_core import (
    DensityMatrix,
    Observable,
    born_probabilities,
    check_unitary,
    fidelity,
    haar_pure_states,
    haar_unitaries,
    measure_computational_basis,
    random_rank_r_state,
    sample_born,
    trace_distance,
)

from conftest import random_hermitian


def test_density_matrix_validation():
    with pytest.raises(InvalidStateError):
        DensityMatrix(np.diag([0.5, 0.6]))
    with pytest.raises(InvalidStateError):
        DensityMatrix(np.array([[0.5, 1.0], [0.0, 0.5]]))
    with pytest.raises(InvalidStateError):
        DensityMatrix(np.diag([1.5, -0.5]))
    rho = DensityMatrix(np.diag([0.25, 0.75]))
    assert rho.dim == 2 and rho.rank() == 2
    with pytest.raises(ValueError):
        rho.matrix[0, 0] = 1.0


def test_observable_norms():
    o = Observable(np.diag([3.0, -4.0]))
    assert o.trace == pytest.approx(-1.0)
    assert o.hs_norm == pytest.approx(5.0)
    assert o.op_norm == pytest.approx(4.0)
    with pytest.raises(InvalidStateError):
        Observable(np.array([[0, 1], [0, 0]]))


def test_haar_unitaries_are_unitary(rng):
    us = haar_unitaries(5, 20, rng)
    for u in us:
        check_unitary(u)


def test_haar_first_moment(rng):
    # E[U_00] = 0 and E|U_00|^2 = 1/d
    us = haar_unitaries(3, 20000, rng)
    assert abs(us[:, 0, 0].mean()) < 0.02
    assert np.mean(np.abs(us[:, 0, 0]) ** 2) == pytest.approx(1 / 3, abs=0.01)


def test_haar_states_equal_unitary_columns_in_law(rng):
    v = haar_pure_states(4, 50000, rng)
    np.testing.assert_allclose(np.linalg.norm(v, axis=1), 1.0)
    # second moment: E|v_0|^4 = 2/(d(d+1))
    assert np.mean(np.abs(v[:, 0]) ** 4) == pytest.approx(2 / 20, rel=0.03)


def test_random_rank_state(rng):
    rho = random_rank_r_state(6, 3, rng)
    assert rho.rank() == 3
    assert np.trace(rho.matrix).real == pytest.approx(1.0)


def test_trace_distance_and_fidelity():
    a = DensityMatrix.from_pure([1, 0])
    b = DensityMatrix.from_pure([0, 1])
    assert trace_distance(a, b) == pytest.approx(1.0)
    assert trace_distance(a, a) == pytest.approx(0.0)
    assert fidelity(a, np.array([1, 1]) / np.sqrt(2)) == pytest.approx(0.5)
    with pytest.raises(InvalidDimensionError):
        trace_distance(a, DensityMatrix.maximally_mixed(3))


def test_born_probabilities(rng):
    rho = random_rank_r_state(4, 2, rng)
    u = haar_unitaries(4, 1, rng)[0]
    p = born_probabilities(rho.matrix, u)
    assert p.sum() == pytest.approx(1.0)
    with pytest.raises(NumericIntegrityError):
        born_probabilities(rho.matrix, 2 * u)


def test_sample_born_frequencies(rng):
    p = np.tile([0.2, 0.5, 0.3], (100000, 1))
    counts = np.bincount(sample_born(p, rng), minlength=3) / 1e5
    np.testing.assert_allclose(counts, [0.2, 0.5, 0.3], atol=0.01)


def test_measure_computational_basis_deterministic(rng):
    rho = DensityMatrix.from_pure([0, 1, 0])
    assert all(measure_computational_basis(rho, np.eye(3), rng) == 1 for _ in range(10))


def test_random_hermitian_helper(rng):
    h = random_hermitian(3, rng)
    np.testing.assert_allclose(h, h.conj().T)
