"""Corruption strategies against shadow and direct-measurement pipelines.

Every attack works on its own copy of the data and returns a
:class:`CorruptionReport` with the number of outcomes actually changed.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    ConfigurationError,
    InvalidArgumentError,
    InvalidBudgetError,
    UnsupportedMeasurementError,
)
from .quantum_core import (
    DensityMatrix,
    Observable,
    as_density,
    as_matrix,
    check_pure_state,
    haar_unitaries,
    sample_born,
)
from .shadows import DirectOutcomes

__all__ = [
    "AdversarySpec",
    "CorruptionReport",
    "fidelity_attack",
    "flip_attack",
    "total_variation",
    "tv_optimal_coupling",
    "couple_outcomes",
    "hard_instance",
    "pauli_instance",
    "binary_effects",
    "outcome_distributions",
    "coupling_attack",
    "apply_adversary",
]

_EXCESS_FLOOR = 1e-15


@dataclass(frozen=True)
class CorruptionReport:
    n_total: int
    n_changed: int
    detail: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not 0 <= self.n_changed <= self.n_total:
            raise InvalidArgumentError("n_changed must lie in [0, n_total]")

    @property
    def realized_fraction(self) -> float:
        return self.n_changed / self.n_total if self.n_total else 0.0


@dataclass(frozen=True)
class AdversarySpec:
    """Declarative description of an attack.

    ``kind`` is ``fidelity_replace`` (needs ``target`` and ``mode``),
    ``bit_flip`` (needs ``target_observable`` and ``direction``) or
    ``coupling`` (needs ``alternatives``).
    """

    kind: str
    budget: float
    target: np.ndarray | None = None
    mode: str = "iid_prob"
    batch_size: int | None = None
    target_observable: int = 0
    direction: str = "up"
    alternatives: tuple = ()

    def __post_init__(self):
        if not 0.0 <= self.budget <= 1.0:
            raise InvalidBudgetError(f"budget must lie in [0, 1], got {self.budget}")
        if self.kind == "fidelity_replace":
            if self.target is None:
                raise ConfigurationError("fidelity_replace needs a target state")
            object.__setattr__(self, "target", check_pure_state(self.target))
        elif self.kind == "coupling":
            if not self.alternatives:
                raise ConfigurationError("coupling needs at least one alternative state")
        elif self.kind != "bit_flip":
            raise ConfigurationError(f"unknown adversary kind {self.kind!r}")


def _check_budget(gamma: float) -> None:
    if not 0.0 <= gamma <= 1.0:
        raise InvalidBudgetError(f"corruption budget must lie in [0, 1], got {gamma}")


def fidelity_attack(
    samples: np.ndarray,
    psi0,
    gamma: float,
    mode: str = "iid_prob",
    rng: np.random.Generator | None = None,
    batch_size: int | None = None,
) -> tuple[np.ndarray, CorruptionReport]:
    """Replace shadow vectors by ``psi0``.

    ``iid_prob`` replaces each sample independently with probability
    ``gamma``. ``per_batch_worst`` replaces, inside every consecutive batch of
    ``batch_size`` samples, the ``floor(gamma K)`` vectors with the smallest
    overlap ``|<v|psi0>|^2``.
    """
    _check_budget(gamma)
    psi0 = check_pure_state(psi0)
    v = np.array(samples, dtype=np.complex128, copy=True)
    n = v.shape[0]
    if mode == "iid_prob":
        if rng is None:
            raise ConfigurationError("iid_prob mode needs a random generator")
        mask = rng.random(n) < gamma
    elif mode == "per_batch_worst":
        if batch_size is None or batch_size < 1:
            raise ConfigurationError("per_batch_worst mode needs the batch size K")
        overlap = np.abs(v.conj() @ psi0) ** 2
        mask = np.zeros(n, dtype=bool)
        for start in range(0, n, batch_size):
            stop = min(start + batch_size, n)
            c = int(np.floor(gamma * (stop - start) + 1e-9))
            if c:
                worst = np.argsort(overlap[start:stop], kind="stable")[:c]
                mask[start + worst] = True
    else:
        raise ConfigurationError(f"unknown fidelity attack mode {mode!r}")
    v[mask] = psi0
    return v, CorruptionReport(n, int(mask.sum()), {"mode": mode})


def flip_attack(
    outcomes: DirectOutcomes, target: int, gamma: float, direction: str = "up"
) -> tuple[DirectOutcomes, CorruptionReport]:
    """Spend the whole ``floor(gamma n)`` flip budget on one observable's group.

    Flipping stops early when the group has no bits left that move its mean
    in ``direction``.
    """
    _check_budget(gamma)
    if not 0 <= target < outcomes.n_observables:
        raise InvalidArgumentError("target observable out of range")
    if direction not in ("up", "down"):
        raise InvalidArgumentError("direction must be 'up' or 'down'")
    n = len(outcomes)
    budget = int(np.floor(gamma * n + 1e-9))
    src = 0 if direction == "up" else 1
    cand = np.flatnonzero((outcomes.observable_index == target) & (outcomes.bits == src))
    chosen = cand[:budget]
    bits = outcomes.bits.copy()
    bits[chosen] = 1 - src
    return outcomes.with_bits(bits), CorruptionReport(n, chosen.size, {"budget": budget})


# ---------------------------------------------------------------------------
# Couplings
# ---------------------------------------------------------------------------


def total_variation(p, q):
    """Half the L1 distance; row-wise for 2-D inputs."""
    tv = 0.5 * np.abs(np.asarray(p, dtype=float) - np.asarray(q, dtype=float)).sum(axis=-1)
    return float(tv) if np.ndim(tv) == 0 else tv


def couple_outcomes(P: np.ndarray, Q: np.ndarray, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Vectorised maximal coupling, one draw per row.

    Row ``t`` of ``P`` and ``Q`` holds the source and target laws for outcome
    ``x[t]``; ``x[t]`` is kept with probability ``min(1, Q/P)`` and otherwise
    replaced by a draw from the normalised excess ``(Q - P)_+``.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    x = np.asarray(x, dtype=np.int64)
    rows = np.arange(x.size)
    px, qx = P[rows, x], Q[rows, x]
    if np.any(px <= 0):
        raise InvalidArgumentError("outcome outside the support of the source distribution")
    keep = rng.random(x.size) < np.minimum(1.0, qx / px)
    excess = np.clip(Q - P, 0.0, None)
    mass = excess.sum(axis=1, keepdims=True)
    excess = excess / np.maximum(mass, _EXCESS_FLOOR)
    y = x.copy()
    move = ~keep
    if np.any(move):
        y[move] = sample_born(excess[move], rng)
    return y


def tv_optimal_coupling(p, q, x: int, rng: np.random.Generator) -> int:
    """Map ``x ~ p`` to ``y ~ q`` with ``Pr[y != x] = TV(p, q)``."""
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    if p.shape != q.shape or p.ndim != 1:
        raise InvalidArgumentError("p and q must share one finite support")
    if not 0 <= x < p.size:
        raise InvalidArgumentError("outcome outside the support of p")
    return int(couple_outcomes(p[None, :], q[None, :], np.array([x]), rng)[0])


# ---------------------------------------------------------------------------
# Hard instances
# ---------------------------------------------------------------------------


def hard_instance(d: int, M: int, eps: float, rng: np.random.Generator):
    """Random +-1 observables ``U_i^dag Z U_i`` and alternatives ``(I + 3 eps O_i)/d``."""
    if d < 2 or d % 2:
        raise InvalidArgumentError("hard instance needs an even dimension")
    if not 0 <= eps <= 1 / 3:
        raise InvalidArgumentError("eps above 1/3 makes the alternatives non-PSD")
    z = np.diag(np.r_[np.ones(d // 2), -np.ones(d // 2)]).astype(np.complex128)
    us = haar_unitaries(d, M, rng)
    obs, alts = [], []
    for u in us:
        o = u.conj().T @ z @ u
        obs.append(Observable(o))
        alts.append(DensityMatrix((np.eye(d) + 3 * eps * o) / d))
    return obs, alts


_PAULI = {
    "I": np.eye(2, dtype=np.complex128),
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "Z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}


def pauli_string(label: str) -> np.ndarray:
    out = np.ones((1, 1), dtype=np.complex128)
    for ch in label:
        out = np.kron(out, _PAULI[ch])
    return out


def pauli_instance(n_qubits: int, M: int, eps: float):
    """Deterministic variant of :func:`hard_instance` with orthogonal Pauli strings.

    Orthogonality makes measurement ``j`` blind to alternative ``i != j``,
    so the outcome laws differ only when ``i == j``.
    """
    if not 0 <= eps <= 1 / 3:
        raise InvalidArgumentError("eps above 1/3 makes the alternatives non-PSD")
    labels = ["".join(t) for t in itertools.product("IXYZ", repeat=n_qubits)][1:]
    if M > len(labels):
        raise InvalidArgumentError(f"only {len(labels)} non-identity Pauli strings on {n_qubits} qubits")
    d = 2**n_qubits
    obs = [Observable(pauli_string(lab)) for lab in labels[:M]]
    alts = [DensityMatrix((np.eye(d) + 3 * eps * o.matrix) / d) for o in obs]
    return obs, alts


def binary_effects(O) -> np.ndarray:
    """POVM ``[I - O, O]`` so outcome 1 means the ``O`` effect fired."""
    o = as_matrix(O)
    return np.stack([np.eye(o.shape[0]) - o, o])


def outcome_distributions(measurements: Sequence, state) -> list[np.ndarray]:
    """Born-rule outcome law of every finite measurement on ``state``."""
    r = as_matrix(state)
    laws = []
    for effects in measurements:
        if isinstance(effects, str) or np.asarray(effects).ndim != 3:
            raise UnsupportedMeasurementError(
                "coupling attacks need finite-outcome measurements given as effect stacks"
            )
        e = np.asarray(effects, dtype=np.complex128)
        p = np.einsum("kij,ji->k", e, r).real
        laws.append(np.clip(p, 0.0, None) / p.sum())
    return laws


def coupling_attack(
    outcomes: np.ndarray,
    measurement_index: np.ndarray,
    measurements: Sequence,
    alternatives: Sequence,
    rng: np.random.Generator,
    null_state=None,
    gamma: float | None = None,
) -> tuple[np.ndarray, CorruptionReport]:
    """Make outcomes of the null state look like those of a random alternative.

    One alternative ``sigma_i`` is drawn uniformly; each copy's outcome is
    then pushed through the maximal coupling between its null law and its
    law under ``sigma_i``. If ``gamma`` is given, changes stop once
    ``floor(gamma n)`` outcomes have been altered.
    """
    outcomes = np.asarray(outcomes, dtype=np.int64)
    midx = np.asarray(measurement_index, dtype=np.int64)
    if outcomes.shape != midx.shape:
        raise InvalidArgumentError("one measurement index per outcome is required")
    if not alternatives:
        raise InvalidArgumentError("no alternatives")
    d = as_matrix(alternatives[0]).shape[0]
    null = DensityMatrix.maximally_mixed(d) if null_state is None else as_density(null_state)
    i = int(rng.integers(len(alternatives)))
    p_laws = np.array(outcome_distributions(measurements, null))
    q_laws = np.array(outcome_distributions(measurements, alternatives[i]))
    y = couple_outcomes(p_laws[midx], q_laws[midx], outcomes, rng)
    changed = np.flatnonzero(y != outcomes)
    if gamma is not None:
        _check_budget(gamma)
        cap = int(np.floor(gamma * outcomes.size + 1e-9))
        y[changed[cap:]] = outcomes[changed[cap:]]
        changed = changed[:cap]
    expected = float(np.mean(total_variation(p_laws[midx], q_laws[midx]))) if outcomes.size else 0.0
    report = CorruptionReport(
        outcomes.size, changed.size, {"alternative_index": i, "expected_fraction": expected}
    )
    return y, report


def apply_adversary(spec: AdversarySpec, data, rng: np.random.Generator, **context):
    """Dispatch ``spec`` onto shadow samples or direct outcomes.

    ``coupling`` attacks take ``measurement_index`` and ``measurements`` in
    ``context``.
    """
    if spec.kind == "fidelity_replace":
        return fidelity_attack(
            data, spec.target, spec.budget, spec.mode, rng, spec.batch_size or context.get("batch_size")
        )
    if spec.kind == "bit_flip":
        return flip_attack(data, spec.target_observable, spec.budget, spec.direction)
    if "measurements" not in context:
        raise UnsupportedMeasurementError(
            "coupling attacks are only defined for finite-outcome measurements"
        )
    return coupling_attack(
        data,
        context["measurement_index"],
        context["measurements"],
        list(spec.alternatives),
        rng,
        null_state=context.get("null_state"),
        gamma=spec.budget,
    )
