"""Dense complex linear algebra for states, observables and measurements.

State vectors and unitaries are plain complex ``numpy`` arrays. Density
matrices and observables are wrapped in small immutable containers that
validate on construction; every function accepting them also accepts a raw
array.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import (
    InvalidArgumentError,
    InvalidDimensionError,
    InvalidStateError,
    NumericIntegrityError,
)

__all__ = [
    "CONSTRUCTION_TOL",
    "DERIVED_TOL",
    "DensityMatrix",
    "Observable",
    "as_matrix",
    "as_density",
    "as_observable",
    "check_pure_state",
    "check_unitary",
    "haar_unitary",
    "haar_unitaries",
    "haar_pure_state",
    "haar_pure_states",
    "random_rank_r_state",
    "trace_distance",
    "fidelity",
    "born_probabilities",
    "sample_born",
    "measure_computational_basis",
]

CONSTRUCTION_TOL = 1e-10
DERIVED_TOL = 1e-9


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.complex128, copy=True)
    a.flags.writeable = False
    return a


def _hermitian_defect(a: np.ndarray) -> float:
    return float(np.max(np.abs(a - a.conj().T))) if a.size else 0.0


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Unit-trace positive semidefinite Hermitian matrix.

    Eigenvalues in ``(-DERIVED_TOL, 0)`` are accepted as round-off; anything
    more negative is rejected.
    """

    matrix: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.matrix, dtype=np.complex128)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise InvalidDimensionError(f"density matrix must be square and non-empty, got {a.shape}")
        if _hermitian_defect(a) > CONSTRUCTION_TOL:
            raise InvalidStateError("density matrix is not Hermitian")
        a = 0.5 * (a + a.conj().T)
        tr = np.trace(a).real
        if abs(tr - 1.0) > CONSTRUCTION_TOL:
            raise InvalidStateError(f"density matrix trace is {tr!r}, expected 1")
        w = np.linalg.eigvalsh(a)
        if w[0] < -DERIVED_TOL:
            raise InvalidStateError(f"density matrix has negative eigenvalue {w[0]:.3e}")
        object.__setattr__(self, "matrix", _readonly(a))

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        """Ascending eigenvalues, round-off negatives clamped to zero."""
        return np.clip(np.linalg.eigvalsh(self.matrix), 0.0, None)

    def rank(self, tol: float = DERIVED_TOL) -> int:
        return int(np.sum(self.eigenvalues > tol))

    @classmethod
    def from_pure(cls, psi) -> "DensityMatrix":
        psi = check_pure_state(psi)
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def maximally_mixed(cls, d: int) -> "DensityMatrix":
        if d < 1:
            raise InvalidDimensionError("d must be positive")
        return cls(np.eye(d, dtype=np.complex128) / d)


@dataclass(frozen=True, eq=False)
class Observable:
    """Hermitian matrix with cached trace and Hilbert-Schmidt norm."""

    matrix: np.ndarray
    trace: float = field(init=False)
    hs_norm: float = field(init=False)

    def __post_init__(self):
        a = np.asarray(self.matrix, dtype=np.complex128)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise InvalidDimensionError(f"observable must be square and non-empty, got {a.shape}")
        if _hermitian_defect(a) > CONSTRUCTION_TOL:
            raise InvalidStateError("observable is not Hermitian")
        a = _readonly(0.5 * (a + a.conj().T))
        object.__setattr__(self, "matrix", a)
        object.__setattr__(self, "trace", float(np.trace(a).real))
        object.__setattr__(self, "hs_norm", float(np.linalg.norm(a)))

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.linalg.eigh(self.matrix)

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.eigh[0]

    @property
    def op_norm(self) -> float:
        return float(np.max(np.abs(self.eigenvalues)))

    def expectation(self, rho) -> float:
        """Tr[O rho]."""
        r = as_matrix(rho)
        _check_same_dim(self.matrix, r)
        return float(np.einsum("ij,ji->", self.matrix, r).real)

    @classmethod
    def projector(cls, psi) -> "Observable":
        psi = check_pure_state(psi)
        return cls(np.outer(psi, psi.conj()))


def as_matrix(x) -> np.ndarray:
    if isinstance(x, (DensityMatrix, Observable)):
        return x.matrix
    return np.asarray(x, dtype=np.complex128)


def as_density(x) -> DensityMatrix:
    return x if isinstance(x, DensityMatrix) else DensityMatrix(x)


def as_observable(x) -> Observable:
    return x if isinstance(x, Observable) else Observable(x)


def _check_same_dim(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[0] != b.shape[0]:
        raise InvalidDimensionError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")


def check_pure_state(psi, tol: float = CONSTRUCTION_TOL) -> np.ndarray:
    psi = np.asarray(psi, dtype=np.complex128)
    if psi.ndim != 1 or psi.size == 0:
        raise InvalidDimensionError(f"pure state must be a non-empty vector, got shape {psi.shape}")
    if abs(np.vdot(psi, psi).real - 1.0) > tol:
        raise InvalidStateError("pure state is not normalized")
    return psi


def check_unitary(u, tol: float = DERIVED_TOL) -> np.ndarray:
    u = np.asarray(u, dtype=np.complex128)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise InvalidDimensionError("unitary must be square")
    if np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) > tol:
        raise InvalidStateError("matrix is not unitary")
    return u


# ---------------------------------------------------------------------------
# Haar sampling
# ---------------------------------------------------------------------------


def _ginibre(shape, rng: np.random.Generator) -> np.ndarray:
    # Interleaved real/imaginary normals viewed as complex: one draw, no copy.
    z = rng.standard_normal((*shape, 2)).view(np.complex128)[..., 0]
    z *= np.sqrt(0.5)
    return z


def _phase_fixed_qr(z: np.ndarray) -> np.ndarray:
    # Works on (..., d, d) stacks.
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r, axis1=-2, axis2=-1)
    mag = np.abs(diag)
    phase = np.where(mag > 0, diag / np.where(mag > 0, mag, 1.0), 1.0)
    return q * phase[..., None, :]


def haar_unitaries(d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Stack of ``n`` independent Haar unitaries, shape ``(n, d, d)``."""
    if d < 1:
        raise InvalidDimensionError("d must be positive")
    return _phase_fixed_qr(_ginibre((n, d, d), rng))


def haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Sample a unitary from the Haar measure on U(d).

    QR-factorise a complex Ginibre matrix and rotate each column of Q by the
    phase of the matching diagonal entry of R, which removes the bias of
    the LAPACK sign convention.
    """
    return haar_unitaries(d, 1, rng)[0]


def haar_pure_states(d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` Haar-random unit vectors as rows of an ``(n, d)`` array.

    The first column of the phase-fixed QR factor of a Ginibre matrix ``Z``
    is exactly ``Z[:, 0] / |Z[:, 0]|``, so only that column is drawn.
    """
    if d < 1:
        raise InvalidDimensionError("d must be positive")
    z = _ginibre((n, d), rng)
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def haar_pure_state(d: int, rng: np.random.Generator) -> np.ndarray:
    return haar_pure_states(d, 1, rng)[0]


def random_rank_r_state(d: int, r: int, rng: np.random.Generator) -> DensityMatrix:
    """Random rank-``r`` state with Haar eigenvectors and flat-Dirichlet spectrum."""
    if d < 1:
        raise InvalidDimensionError("d must be positive")
    if not 1 <= r <= d:
        raise InvalidArgumentError(f"rank must lie in [1, {d}], got {r}")
    u = haar_unitary(d, rng)[:, :r]
    lam = rng.dirichlet(np.ones(r)) if r > 1 else np.ones(1)
    rho = (u * lam) @ u.conj().T
    rho /= np.trace(rho).real
    return DensityMatrix(rho)


# ---------------------------------------------------------------------------
# Distances
# ---------------------------------------------------------------------------


def trace_distance(rho, sigma) -> float:
    """Half the trace norm of ``rho - sigma``."""
    a, b = as_matrix(rho), as_matrix(sigma)
    _check_same_dim(a, b)
    diff = a - b
    w = np.linalg.eigvalsh(0.5 * (diff + diff.conj().T))
    return float(min(1.0, 0.5 * np.sum(np.abs(w))))


def fidelity(rho, psi) -> float:
    """<psi|rho|psi> for a pure reference state."""
    a = as_matrix(rho)
    psi = check_pure_state(psi)
    _check_same_dim(a, psi[:, None])
    val = np.vdot(psi, a @ psi).real
    return float(min(1.0, max(0.0, val)))


# ---------------------------------------------------------------------------
# Born-rule measurement
# ---------------------------------------------------------------------------


def born_probabilities(rho, basis: np.ndarray) -> np.ndarray:
    """Outcome probabilities ``<w_b|rho|w_b>`` for basis vectors in the columns.

    ``basis`` may be a single ``(d, d)`` matrix or a stack ``(n, d, d)``.
    """
    a = as_matrix(rho)
    w = np.asarray(basis)
    p = np.einsum("...ib,ij,...jb->...b", w.conj(), a, w, optimize=True).real
    total = p.sum(axis=-1)
    if np.any(np.abs(total - 1.0) > 1e-8):
        bad = float(np.max(np.abs(total - 1.0)))
        raise NumericIntegrityError(f"Born probabilities sum to 1 +/- {bad:.3e}")
    return np.clip(p, 0.0, None)


def sample_born(p: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draw of one outcome per row of a probability table."""
    p = np.atleast_2d(p)
    cdf = np.cumsum(p, axis=1)
    u = rng.random(p.shape[0]) * cdf[:, -1]
    idx = (u[:, None] >= cdf).sum(axis=1)
    return np.minimum(idx, p.shape[1] - 1)


def measure_computational_basis(rho, u, rng: np.random.Generator) -> int:
    """Apply ``u`` to ``rho`` and measure in the computational basis.

    Outcome ``b`` has probability ``<b|U rho U^dag|b>``; the measurement
    vectors ``U^dag|b>`` are the conjugated rows of ``u``.
    """
    a = as_matrix(rho)
    u = np.asarray(u, dtype=np.complex128)
    _check_same_dim(a, u)
    p = born_probabilities(a, u.conj().T)
    return int(sample_born(p, rng)[0])
