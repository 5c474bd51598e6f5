"""Closed-form Haar moments of quadratic forms <u|O|u>.

Used as ground truth for the samplers and for the shadow estimator.
"""

from __future__ import annotations

import math
from collections import Counter

import numpy as np

from .errors import InvalidArgumentError, UnsupportedOrderError
from .quantum_core import as_matrix, as_observable, _check_same_dim

__all__ = [
    "MAX_ORDER",
    "CENTRAL_MOMENT_CONSTANT",
    "integer_partitions",
    "enumerate_permutation_cycle_types",
    "power_traces",
    "exact_moment",
    "shadow_mean",
    "central_moment_bound",
]

MAX_ORDER = 8
# Test ceiling only; the true universal constant is not known.
CENTRAL_MOMENT_CONSTANT = 8.0


def integer_partitions(k: int, largest: int | None = None):
    """Yield partitions of ``k`` as non-increasing tuples."""
    if largest is None:
        largest = k
    if k == 0:
        yield ()
        return
    for first in range(min(k, largest), 0, -1):
        for rest in integer_partitions(k - first, first):
            yield (first,) + rest


def enumerate_permutation_cycle_types(k: int) -> list[tuple[tuple[int, ...], int]]:
    """Cycle types of S_k with the number of permutations of each type.

    Returns ``[(cycle_lengths, count), ...]`` ordered from the identity
    ``(1, ..., 1)`` to the full cycle ``(k,)``.
    """
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise InvalidArgumentError(f"k must be a positive integer, got {k!r}")
    if k > MAX_ORDER:
        raise UnsupportedOrderError(f"k={k} exceeds supported order {MAX_ORDER}")
    out = []
    for part in integer_partitions(int(k)):
        denom = 1
        for length, mult in Counter(part).items():
            denom *= length**mult * math.factorial(mult)
        out.append((part, math.factorial(k) // denom))
    out.sort(key=lambda item: (-len(item[0]), item[0]))
    return out


def power_traces(O, max_power: int) -> np.ndarray:
    """``[Tr O^1, ..., Tr O^max_power]`` via the spectrum."""
    w = np.linalg.eigvalsh(as_matrix(O))
    return np.array([np.sum(w**m) for m in range(1, max_power + 1)])


def exact_moment(O, k: int) -> float:
    """E_{u ~ Haar}[<u|O|u>^k] for Hermitian ``O``."""
    types = enumerate_permutation_cycle_types(k)
    a = as_matrix(O)
    d = a.shape[0]
    tr = power_traces(a, k)
    total = 0.0
    for cycles, count in types:
        total += count * math.prod(tr[c - 1] for c in cycles)
    return float(total / math.factorial(k) / math.comb(d + k - 1, k))


def shadow_mean(O, rho) -> float:
    """E_{v ~ D(rho)}[<v|O|v>] = (Tr O + Tr O rho) / (d + 1)."""
    obs = as_observable(O)
    r = as_matrix(rho)
    _check_same_dim(obs.matrix, r)
    d = obs.dim
    return (obs.trace + obs.expectation(r)) / (d + 1)


def central_moment_bound(O, h: int, constant: float = CENTRAL_MOMENT_CONSTANT) -> float:
    """Ceiling ``(C h ||O||_HS / (d + 1))^h`` on the h-th central moment."""
    if h < 2:
        raise InvalidArgumentError("h must be at least 2")
    obs = as_observable(O)
    return float((constant * h * obs.hs_norm / (obs.dim + 1)) ** h)
