"""Scalar robust mean estimators and the mass-removal oracle.

All estimators accept a one-dimensional batch; the ``*_rows`` variants
apply the same estimator independently to every row of a 2-D array and are
what the shadow pipeline uses when estimating many observables at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, InvalidBudgetError

__all__ = [
    "as_batch",
    "DiscreteDistribution",
    "quantile",
    "trim_count",
    "truncated_mean",
    "truncated_mean_rows",
    "median_of_means",
    "median_of_means_rows",
    "empirical_mean",
    "worst_case_removing_shift",
]

_ROUND_SLACK = 1e-9


def as_batch(values) -> np.ndarray:
    x = np.asarray(values, dtype=float)
    if x.ndim != 1:
        x = x.ravel()
    if x.size == 0:
        raise InvalidArgumentError("sample batch is empty")
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError("sample batch contains non-finite values")
    return x


@dataclass(frozen=True)
class DiscreteDistribution:
    support: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.support, dtype=float)
        m = np.asarray(self.masses, dtype=float)
        if s.ndim != 1 or s.shape != m.shape or s.size == 0:
            raise InvalidArgumentError("support and masses must be equal-length non-empty vectors")
        if np.any(np.diff(s) <= 0):
            raise InvalidArgumentError("support must be strictly increasing")
        if np.any(m < 0) or abs(m.sum() - 1.0) > 1e-12:
            raise InvalidArgumentError("masses must be non-negative and sum to 1")
        object.__setattr__(self, "support", s)
        object.__setattr__(self, "masses", m)

    @property
    def mean(self) -> float:
        return float(self.support @ self.masses)

    def central_moment(self, h: float) -> float:
        """E|X - mu|^h."""
        return float(self.masses @ np.abs(self.support - self.mean) ** h)


def quantile(batch, q: float) -> float:
    """Smallest sample value whose empirical CDF reaches ``q``."""
    x = np.sort(as_batch(batch))
    if not 0.0 <= q <= 1.0:
        raise InvalidArgumentError("q must lie in [0, 1]")
    idx = max(math.ceil(q * x.size - _ROUND_SLACK) - 1, 0)
    return float(x[idx])


def trim_count(n: int, gamma: float) -> int:
    """Number of samples dropped from each end: floor(gamma * n)."""
    if not 0.0 <= gamma < 0.5:
        raise InvalidBudgetError(f"trimming fraction must lie in [0, 0.5), got {gamma}")
    k = math.floor(gamma * n + _ROUND_SLACK)
    if 2 * k >= n:
        raise InvalidBudgetError(f"trimming {k} from each end of {n} samples leaves nothing")
    return k


def truncated_mean(batch, gamma: float) -> float:
    """Drop the ``floor(gamma n)`` largest and smallest samples and average the rest."""
    x = as_batch(batch)
    k = trim_count(x.size, gamma)
    if k == 0:
        return float(x.mean())
    return float(np.sort(x)[k : x.size - k].mean())


def truncated_mean_rows(values: np.ndarray, gamma: float) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    n = values.shape[1]
    k = trim_count(n, gamma)
    if k == 0:
        return values.mean(axis=1)
    part = np.partition(values, (k, n - k - 1), axis=1)
    return part[:, k : n - k].mean(axis=1)


def median_of_means(batch, K: int) -> float:
    """Median of the means of consecutive batches of size ``K``.

    The trailing ``n mod K`` samples are discarded.
    """
    x = as_batch(batch)
    return float(median_of_means_rows(x[None, :], K)[0])


def median_of_means_rows(values: np.ndarray, K: int) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    n = values.shape[1]
    if K < 1:
        raise InvalidArgumentError("batch size must be positive")
    if K > n:
        raise InvalidArgumentError(f"batch size {K} exceeds sample count {n}")
    nb = n // K
    means = values[:, : nb * K].reshape(values.shape[0], nb, K).mean(axis=2)
    return np.median(means, axis=1)


def empirical_mean(batch) -> float:
    return float(as_batch(batch).mean())


def worst_case_removing_shift(
    dist: DiscreteDistribution, xi: float, direction: str = "up"
) -> tuple[float, float]:
    """Remove mass ``xi`` from one tail to push the mean as far as possible.

    Shifting ``up`` removes mass from the smallest support points, ``down``
    from the largest; the remainder is renormalised by ``1 / (1 - xi)``.

    Returns
    -------
    shifted_mean, removed_mass
    """
    if not 0.0 <= xi < 0.5:
        raise InvalidBudgetError(f"removal mass must lie in [0, 0.5), got {xi}")
    if direction not in ("up", "down"):
        raise InvalidArgumentError("direction must be 'up' or 'down'")
    s, m = dist.support, dist.masses.copy()
    order = np.arange(s.size) if direction == "up" else np.arange(s.size)[::-1]
    left = xi
    for i in order:
        if left <= 0:
            break
        take = min(m[i], left)
        m[i] -= take
        left -= take
    removed = xi - max(left, 0.0)
    return float(s @ m / (1.0 - removed)), float(removed)
