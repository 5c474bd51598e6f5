"""Uniform-POVM classical shadows and the direct-measurement baseline.

A batch of shadow samples is an ``(n, d)`` complex array whose rows are the
measured unit vectors ``|v_i> = U_i^dag |b_i>``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import robust_stats
from .errors import (
    InsufficientCopiesError,
    InvalidArgumentError,
    InvalidBudgetError,
    InvalidDimensionError,
    NumericIntegrityError,
)
from .quantum_core import (
    Observable,
    as_density,
    as_observable,
    born_probabilities,
    check_pure_state,
    haar_pure_states,
    haar_unitaries,
    sample_born,
)

__all__ = [
    "ShadowSample",
    "EstimatorKind",
    "DirectOutcomes",
    "collect_shadows",
    "shadow_snapshot",
    "raw_estimates",
    "estimate_observables",
    "direct_measurements",
    "direct_estimates",
    "naive_direct_estimate",
    "default_mom_batch_size",
]

CHUNK = 1024


@dataclass(frozen=True)
class ShadowSample:
    vector: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vector", check_pure_state(self.vector))


@dataclass(frozen=True)
class EstimatorKind:
    """Scalar estimator applied to the per-sample raw estimates.

    ``truncated_mean`` carries the corruption budget ``gamma``; the estimator
    trims ``2 * gamma`` from each end.
    """

    tag: str
    batch_size: int | None = None
    gamma: float | None = None

    def __post_init__(self):
        if self.tag == "median_of_means":
            if self.batch_size is None or self.batch_size < 1:
                raise InvalidArgumentError("median_of_means needs a batch size K >= 1")
        elif self.tag == "truncated_mean":
            if self.gamma is None or not 0.0 <= 2 * self.gamma < 0.5:
                raise InvalidBudgetError("truncated_mean needs 0 <= 2*gamma < 0.5")
        elif self.tag != "empirical_mean":
            raise InvalidArgumentError(f"unknown estimator {self.tag!r}")

    @classmethod
    def empirical_mean(cls) -> "EstimatorKind":
        return cls("empirical_mean")

    @classmethod
    def median_of_means(cls, K: int) -> "EstimatorKind":
        return cls("median_of_means", batch_size=int(K))

    @classmethod
    def truncated_mean(cls, gamma: float) -> "EstimatorKind":
        return cls("truncated_mean", gamma=float(gamma))

    @property
    def label(self) -> str:
        if self.tag == "median_of_means":
            return f"median_of_means(K={self.batch_size})"
        if self.tag == "truncated_mean":
            return f"truncated_mean(gamma={self.gamma:g})"
        return self.tag

    def apply_rows(self, values: np.ndarray) -> np.ndarray:
        if self.tag == "empirical_mean":
            return values.mean(axis=1)
        if self.tag == "median_of_means":
            return robust_stats.median_of_means_rows(values, self.batch_size)
        return robust_stats.truncated_mean_rows(values, 2 * self.gamma)


SHADOW_METHODS = ("outcome_law", "unitary")


def collect_shadows(
    rho, n: int, rng: np.random.Generator, chunk: int = CHUNK, method: str = "unitary"
) -> np.ndarray:
    """Measure ``n`` copies of ``rho`` with a Haar-random basis each.

    ``method="unitary"`` (default) follows the protocol literally: for every copy a
    Haar unitary ``U`` is drawn, ``U rho U^dag`` is measured in the
    computational basis giving ``b``, and ``U^dag|b>`` is recorded.

    ``method="outcome_law"`` draws the recorded vector directly
    from its law, which has density ``d <v|rho|v>`` with respect to the Haar
    measure on pure states. Writing ``rho = sum_k lambda_k |w_k><w_k|``, that
    is a mixture over ``k`` in which ``|<v|w_k>|^2 ~ Beta(2, d - 1)``, the
    phase is uniform and the orthogonal part is Haar on the complement of
    ``w_k``. It costs O(d) per copy instead of a d x d QR factorisation.
    """
    rho = as_density(rho)
    d = rho.dim
    if n < 0:
        raise InvalidArgumentError("n must be non-negative")
    if method not in SHADOW_METHODS:
        raise InvalidArgumentError(f"unknown shadow method {method!r}; choose from {SHADOW_METHODS}")
    out = np.empty((n, d), dtype=np.complex128)
    lam, w = np.linalg.eigh(rho.matrix)
    lam = np.clip(lam, 0.0, None)
    lam /= lam.sum()
    # rho = F F^dag with F of width rank(rho), so p_b = ||(U F)_b||^2.
    keep = lam > 0
    factor = w[:, keep] * np.sqrt(lam[keep])
    for start in range(0, n, chunk):
        m = min(chunk, n - start)
        if method == "unitary":
            u = haar_unitaries(d, m, rng)
            amp = u @ factor
            p = np.einsum("nbk,nbk->nb", amp.conj(), amp).real
            _check_probabilities(p)
            b = sample_born(p, rng)
            out[start : start + m] = u[np.arange(m), b, :].conj()  # U^dag|b> = conj(row b)
        else:
            out[start : start + m] = _outcome_law_chunk(lam, w, m, rng)
    return out


def _check_probabilities(p: np.ndarray) -> None:
    dev = np.abs(p.sum(axis=-1) - 1.0)
    if np.any(dev > 1e-8):
        raise NumericIntegrityError(f"Born probabilities sum to 1 +/- {float(dev.max()):.3e}")


def _outcome_law_chunk(lam: np.ndarray, w: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    d = w.shape[0]
    k = sample_born(np.broadcast_to(lam, (m, d)), rng)
    anchor = w[:, k].T  # (m, d) eigenvectors selected per copy
    if d == 1:
        return anchor * np.exp(2j * np.pi * rng.random(m))[:, None]
    t = rng.beta(2.0, d - 1.0, size=m)
    phase = np.exp(2j * np.pi * rng.random(m))
    g = haar_pure_states(d, m, rng)
    g -= np.einsum("ni,ni->n", anchor.conj(), g)[:, None] * anchor
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    v = (np.sqrt(t) * phase)[:, None] * anchor + np.sqrt(1.0 - t)[:, None] * g
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _vectors(samples) -> np.ndarray:
    if isinstance(samples, ShadowSample):
        return samples.vector[None, :]
    if len(samples) and isinstance(samples[0], ShadowSample):
        return np.stack([s.vector for s in samples])
    v = np.asarray(samples, dtype=np.complex128)
    return v[None, :] if v.ndim == 1 else v


def shadow_snapshot(sample) -> np.ndarray:
    """(d+1)|v><v| - I."""
    v = sample.vector if isinstance(sample, ShadowSample) else check_pure_state(sample)
    d = v.size
    return (d + 1) * np.outer(v, v.conj()) - np.eye(d)


def _quadratic_forms(v: np.ndarray, O: np.ndarray) -> np.ndarray:
    return np.einsum("ni,ni->n", v.conj() @ O, v).real


def raw_estimates(samples, O) -> np.ndarray:
    """Per-sample ``(d+1)<v|O|v> - Tr O``, each unbiased for ``Tr[O rho]``."""
    v = _vectors(samples)
    obs = as_observable(O)
    if v.shape[0] == 0:
        raise InvalidArgumentError("no samples")
    if v.shape[1] != obs.dim:
        raise InvalidDimensionError(f"sample dimension {v.shape[1]} != observable dimension {obs.dim}")
    return (obs.dim + 1) * _quadratic_forms(v, obs.matrix) - obs.trace


def _spectral_factors(obs: Observable) -> tuple[np.ndarray, np.ndarray]:
    w, vecs = obs.eigh
    keep = np.abs(w) > 1e-12 * max(1.0, float(np.max(np.abs(w))))
    return w[keep], vecs[:, keep]


def _block_quadratic_forms(v: np.ndarray, block: list[Observable]) -> np.ndarray:
    """``<v|O|v>`` for every observable in ``block``, shape ``(len(block), n)``.

    Each observable is expanded in its eigenbasis so the whole block costs a
    single ``(n, d) @ (d, total_rank)`` product.
    """
    factors = [_spectral_factors(o) for o in block]
    ranks = np.array([f[0].size for f in factors])
    out = np.zeros((len(block), v.shape[0]))
    live = np.flatnonzero(ranks)
    if live.size == 0:
        return out
    cols = np.concatenate([factors[i][1] for i in live], axis=1)
    weights = np.concatenate([factors[i][0] for i in live])
    amp = cols.conj().T @ v.T
    q = amp.real**2
    q += amp.imag**2
    q *= weights[:, None]
    if np.all(ranks[live] == 1):
        out[live] = q
    else:
        starts = np.concatenate([[0], np.cumsum(ranks[live])[:-1]])
        out[live] = np.add.reduceat(q, starts, axis=0)
    return out


def estimate_observables(
    samples, observables: Sequence, estimator: EstimatorKind, *, row_budget: int = 2**23
) -> np.ndarray:
    """Estimate ``Tr[O_j rho]`` for every observable with one scalar estimator."""
    v = _vectors(samples)
    obs = [as_observable(o) for o in observables]
    if not obs:
        raise InvalidArgumentError("no observables")
    n, d = v.shape
    if n == 0:
        raise InvalidArgumentError("no samples")
    for o in obs:
        if o.dim != d:
            raise InvalidDimensionError(f"sample dimension {d} != observable dimension {o.dim}")
    out = np.empty(len(obs))
    start = 0
    while start < len(obs):
        stop, width = start, 0
        while stop < len(obs) and (stop == start or (width + d) * n <= row_budget):
            width += d
            stop += 1
        block = obs[start:stop]
        q = _block_quadratic_forms(v, block)
        traces = np.array([o.trace for o in block])
        out[start:stop] = estimator.apply_rows((d + 1) * q - traces[:, None])
        start = stop
    return out


# ---------------------------------------------------------------------------
# Direct measurement of each observable on its own group of copies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DirectOutcomes:
    """Binary outcomes of two-outcome measurements ``{O_i, I - O_i}``.

    ``bits[t]`` is the outcome of copy ``t`` measured with observable
    ``observable_index[t]``.
    """

    observable_index: np.ndarray
    bits: np.ndarray
    n_observables: int

    def __post_init__(self):
        idx = np.asarray(self.observable_index, dtype=np.int64)
        bits = np.asarray(self.bits, dtype=np.int8)
        if idx.shape != bits.shape or idx.ndim != 1:
            raise InvalidArgumentError("index and bit arrays must be equal-length vectors")
        if idx.size and (idx.min() < 0 or idx.max() >= self.n_observables):
            raise InvalidArgumentError("observable index out of range")
        if np.any((bits != 0) & (bits != 1)):
            raise InvalidArgumentError("bits must be 0 or 1")
        object.__setattr__(self, "observable_index", idx)
        object.__setattr__(self, "bits", bits)

    def __len__(self) -> int:
        return self.bits.size

    def with_bits(self, bits: np.ndarray) -> "DirectOutcomes":
        return DirectOutcomes(self.observable_index, bits, self.n_observables)


def _check_effect(obs: Observable, tol: float = 1e-9) -> None:
    w = obs.eigenvalues
    if w[0] < -tol or w[-1] > 1 + tol:
        raise InvalidArgumentError("direct measurement needs 0 <= O <= I")


def direct_measurements(rho, observables: Sequence, n: int, rng: np.random.Generator) -> DirectOutcomes:
    """Split ``n`` copies into equal groups and measure group ``i`` with ``{O_i, I-O_i}``.

    Each copy is measured in the eigenbasis of ``O_i``; eigen-outcome ``j``
    reports bit 1 with probability ``lambda_j`` (deterministic for projectors).
    The ``n mod M`` leftover copies are not used.
    """
    rho = as_density(rho)
    obs = [as_observable(o) for o in observables]
    M = len(obs)
    if M == 0:
        raise InvalidArgumentError("no observables")
    if n < M:
        raise InsufficientCopiesError(f"{n} copies cannot cover {M} observables")
    g = n // M
    idx = np.repeat(np.arange(M), g)
    bits = np.empty(M * g, dtype=np.int8)
    for i, o in enumerate(obs):
        if o.dim != rho.dim:
            raise InvalidDimensionError("observable and state dimensions differ")
        _check_effect(o)
        lam, vecs = o.eigh
        p = born_probabilities(rho.matrix, vecs)
        j = rng.choice(o.dim, size=g, p=p / p.sum())
        bits[i * g : (i + 1) * g] = rng.random(g) < np.clip(lam[j], 0.0, 1.0)
    return DirectOutcomes(idx, bits, M)


def direct_estimates(outcomes: DirectOutcomes) -> np.ndarray:
    counts = np.bincount(outcomes.observable_index, minlength=outcomes.n_observables)
    ones = np.bincount(outcomes.observable_index, weights=outcomes.bits, minlength=outcomes.n_observables)
    with np.errstate(invalid="ignore", divide="ignore"):
        return ones / counts


def naive_direct_estimate(
    rho,
    observables: Sequence,
    n: int,
    rng: np.random.Generator,
    adversary: Callable[[DirectOutcomes], tuple[DirectOutcomes, object]] | None = None,
) -> np.ndarray:
    """Empirical-mean estimates from direct measurement, optionally corrupted.

    ``adversary`` receives the pooled outcome stream and returns the
    corrupted stream plus a report, e.g. ``functools.partial(flip_attack, ...)``.
    """
    outcomes = direct_measurements(rho, observables, n, rng)
    if adversary is not None:
        outcomes, _ = adversary(outcomes)
    return direct_estimates(outcomes)


def default_mom_batch_size(n: int, delta: float = 0.01) -> int:
    """``K = n / ceil(log(1/delta))``, the usual median-of-means batch size."""
    return max(1, n // math.ceil(math.log(1.0 / delta)))
