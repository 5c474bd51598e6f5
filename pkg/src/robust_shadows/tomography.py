"""Full-state tomography by minimum-distance selection over a covering net.

The net of rank-``r`` states is built from a net of pure states and a grid of
mixture weights. For every ordered pair of net members the Helstrom
projector is estimated from the (possibly corrupted) shadows, and the member
whose predicted expectations best match the estimates is returned.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import (
    InvalidArgumentError,
    InvalidDimensionError,
    SizeOverflowError,
)
from .quantum_core import (
    DERIVED_TOL,
    DensityMatrix,
    Observable,
    as_matrix,
    haar_pure_states,
    random_rank_r_state,
)
from .shadows import EstimatorKind, estimate_observables

__all__ = [
    "CoveringNet",
    "HHObservablePair",
    "build_pure_net",
    "build_covering_net",
    "holevo_helstrom",
    "helstrom_projectors",
    "yatracos_select",
    "robust_tomography",
    "pilot_estimate",
    "probe_coverage",
    "net_to_json",
    "net_from_json",
    "estimates_to_json",
    "estimates_from_json",
]

DEFAULT_CAP = 100_000
ZERO_EIG_TOL = 1e-9


# ---------------------------------------------------------------------------
# Nets
# ---------------------------------------------------------------------------


def _state_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # l2 distance minimised over the global phase: sqrt(2 - 2|<a|b>|).
    ov = np.abs(a.conj() @ b.T)
    return np.sqrt(np.clip(2.0 - 2.0 * ov, 0.0, None))


def _bloch_grid(spacing: float) -> np.ndarray:
    # Neighbouring grid states are ``spacing`` apart in phase-minimised l2,
    # i.e. 4*arcsin(spacing/2) apart on the Bloch sphere.
    step = 4.0 * math.asin(min(1.0, spacing / 2.0))
    n_theta = max(1, math.ceil(math.pi / step))
    vecs = []
    for k in range(n_theta + 1):
        theta = math.pi * k / n_theta
        n_phi = max(1, math.ceil(2.0 * math.pi * math.sin(theta) / step))
        phi = 2.0 * math.pi * np.arange(n_phi) / n_phi
        a = np.full(n_phi, math.cos(theta / 2.0), dtype=np.complex128)
        b = np.exp(1j * phi) * math.sin(theta / 2.0)
        vecs.append(np.stack([a, b], axis=1))
    return np.concatenate(vecs)


def build_pure_net(
    d: int,
    eps_net: float,
    rng: np.random.Generator | None = None,
    max_size: int = DEFAULT_CAP,
) -> np.ndarray:
    """Unit vectors covering the pure states of C^d, rows of a ``(L, d)`` array.

    ``d = 2`` uses a Bloch-sphere grid with neighbour spacing ``eps_net/8``.
    Larger ``d`` uses greedy random packing at separation ``eps_net/8`` that
    stops after ``10 d / eps_net`` consecutive rejected candidates or at
    ``max_size`` points.
    """
    if not 0 < eps_net <= 1:
        raise InvalidArgumentError("eps_net must lie in (0, 1]")
    if d < 1:
        raise InvalidDimensionError("d must be positive")
    if d == 1:
        return np.ones((1, 1), dtype=np.complex128)
    if d == 2:
        return _bloch_grid(eps_net / 8.0)
    rng = np.random.default_rng(0) if rng is None else rng
    sep = eps_net / 8.0
    patience = math.ceil(10 * d / eps_net)
    kept = np.empty((max_size, d), dtype=np.complex128)
    kept[0] = haar_pure_states(d, 1, rng)[0]
    size, misses = 1, 0
    while misses < patience and size < max_size:
        cand = haar_pure_states(d, 256, rng)
        for v in cand:
            if np.min(_state_distance(kept[:size], v[None, :])) > sep:
                kept[size] = v
                size += 1
                misses = 0
                if size == max_size:
                    break
            else:
                misses += 1
                if misses >= patience:
                    break
    return kept[:size].copy()


@dataclass(frozen=True, eq=False)
class CoveringNet:
    """Candidate states stacked in a ``(L, d, d)`` array.

    ``construction`` is ``grid`` for the exact enumeration and
    ``random_subsample`` when the enumeration exceeded the size cap.
    """

    states: np.ndarray
    epsilon: float
    rank: int
    construction: str = "grid"
    coverage: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def state(self, i: int) -> DensityMatrix:
        return DensityMatrix(self.states[i])


def _weight_grid(r: int, eps: float) -> list[tuple[float, ...]]:
    step = eps / (4 * r)
    n_max = math.floor(1.0 / step + 1e-9)
    lo = 1.0 - eps / 4.0
    out = []
    for combo in itertools.product(range(n_max + 1), repeat=r):
        if combo != tuple(sorted(combo, reverse=True)):
            continue
        s = sum(combo) * step
        if lo - 1e-12 <= s <= 1.0 + 1e-12 and combo[0] > 0:
            out.append(tuple(c * step for c in combo))
    return out


def _mixture(vecs: np.ndarray, lam) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    rho = np.einsum("k,ki,kj->ij", lam, vecs, vecs.conj())
    return rho / lam.sum()


def build_covering_net(
    d: int,
    r: int,
    eps: float,
    *,
    cap: int = DEFAULT_CAP,
    allow_subsample: bool = True,
    rng: np.random.Generator | None = None,
    probes: int = 0,
) -> CoveringNet:
    """Net of rank-``<= r`` states: normalised mixtures of pure-net vectors.

    Weights come from the grid ``(eps/4r) Z`` in ``[0, 1]`` with total weight
    between ``1 - eps/4`` and ``1``. If the enumeration has more than ``cap``
    states, ``cap`` uniformly drawn combinations are returned instead (or
    :class:`SizeOverflowError` is raised when ``allow_subsample`` is false).
    """
    if not 1 <= r <= d:
        raise InvalidArgumentError(f"rank must lie in [1, {d}]")
    if not 0 < eps <= 1:
        raise InvalidArgumentError("eps must lie in (0, 1]")
    rng = np.random.default_rng(0) if rng is None else rng
    pure = build_pure_net(d, eps, rng, max_size=cap)
    L = pure.shape[0]
    if r == 1:
        states = np.einsum("ki,kj->kij", pure, pure.conj())
        net = CoveringNet(states, eps, 1, "grid")
    else:
        weights = _weight_grid(r, eps)
        # Ordered index tuples paired with sorted weights cover every multiset.
        total = len(weights) * L**r
        if total <= cap:
            states = np.array(
                [
                    _mixture(pure[list(idx)], lam)
                    for lam in weights
                    for idx in itertools.product(range(L), repeat=r)
                ]
            )
            net = CoveringNet(states, eps, r, "grid")
        elif not allow_subsample:
            raise SizeOverflowError(f"exact net has {total} states, cap is {cap}")
        else:
            states = np.empty((cap, d, d), dtype=np.complex128)
            w_idx = rng.integers(len(weights), size=cap)
            v_idx = rng.integers(L, size=(cap, r))
            for t in range(cap):
                states[t] = _mixture(pure[v_idx[t]], weights[w_idx[t]])
            net = CoveringNet(states, eps, r, "random_subsample")
    if probes:
        object.__setattr__(net, "coverage", probe_coverage(net, probes, rng))
    return net


def _trace_distances(states: np.ndarray, rho: np.ndarray) -> np.ndarray:
    diff = states - rho[None]
    w = np.linalg.eigvalsh(0.5 * (diff + np.conj(np.swapaxes(diff, 1, 2))))
    return 0.5 * np.abs(w).sum(axis=1)


def probe_coverage(net: CoveringNet, n_probes: int, rng: np.random.Generator) -> dict:
    """Distance from random rank-``r`` states to their nearest net member."""
    dists = np.empty(n_probes)
    for t in range(n_probes):
        rho = random_rank_r_state(net.dim, net.rank, rng).matrix
        dists[t] = _trace_distances(net.states, rho).min()
    return {
        "probes": n_probes,
        "max_distance": float(dists.max()),
        "mean_distance": float(dists.mean()),
        "within_epsilon": float(np.mean(dists <= net.epsilon)),
    }


# ---------------------------------------------------------------------------
# Helstrom projectors and minimum-distance selection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HHObservablePair:
    i: int
    j: int
    observable: Observable
    value: float


def helstrom_projectors(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Projectors onto the positive eigenspace of ``a - b`` for stacked pairs.

    Eigenvalues within ``ZERO_EIG_TOL`` of zero are left out of the projector.
    Returns ``(projectors, values)`` with ``values = Tr[P (a - b)]``.
    """
    diff = np.asarray(a) - np.asarray(b)
    diff = 0.5 * (diff + np.conj(np.swapaxes(diff, -1, -2)))
    w, v = np.linalg.eigh(diff)
    keep = (w > ZERO_EIG_TOL).astype(float)
    proj = np.einsum("...ik,...k,...jk->...ij", v, keep, v.conj())
    return proj, (w * keep).sum(axis=-1)


def holevo_helstrom(rho_i, rho_j, i: int = 0, j: int = 1) -> HHObservablePair:
    a, b = as_matrix(rho_i), as_matrix(rho_j)
    if a.shape != b.shape:
        raise InvalidDimensionError(f"dimension mismatch: {a.shape} vs {b.shape}")
    proj, value = helstrom_projectors(a, b)
    return HHObservablePair(i, j, Observable(proj), float(value))


def _pair_tables(states: np.ndarray):
    """Helstrom projectors O[i, l] and predictions Tr[O[i, l] rho_l] for i != l."""
    L, d = states.shape[0], states.shape[1]
    ii, ll = np.nonzero(~np.eye(L, dtype=bool))
    proj, _ = helstrom_projectors(states[ii], states[ll])
    pred = np.full((L, L), np.nan)
    pred[ii, ll] = np.einsum("pij,pji->p", proj, states[ll]).real
    return ii, ll, proj, pred


def yatracos_select(estimates, net, predicted=None) -> int:
    """Index ``l`` minimising ``max_i |Tr[O_{i,l} rho_l] - E[i, l]|``.

    ``estimates[i, l]`` estimates ``Tr[O_{i,l} rho]``; the diagonal is
    ignored. Ties go to the smallest index.
    """
    states = net.states if isinstance(net, CoveringNet) else np.asarray(net)
    L = states.shape[0]
    if L == 0:
        raise InvalidArgumentError("empty net")
    if L == 1:
        return 0
    E = np.asarray(estimates, dtype=float)
    if E.shape != (L, L):
        raise InvalidArgumentError(f"estimate table must be {L}x{L}")
    if predicted is None:
        predicted = _pair_tables(states)[3]
    off = ~np.eye(L, dtype=bool)
    defect = np.where(off, np.abs(predicted - E), -np.inf).max(axis=0)
    return int(np.argmin(defect))


def _hermitian_basis(d: int) -> np.ndarray:
    # Traceless generalised Gell-Mann matrices, orthonormal in Hilbert-Schmidt.
    mats = []
    for j in range(d):
        for k in range(j + 1, d):
            m = np.zeros((d, d), dtype=np.complex128)
            m[j, k] = m[k, j] = 1 / math.sqrt(2)
            mats.append(m)
            m = np.zeros((d, d), dtype=np.complex128)
            m[j, k], m[k, j] = -1j / math.sqrt(2), 1j / math.sqrt(2)
            mats.append(m)
    for l in range(1, d):
        diag = np.r_[np.ones(l), -l, np.zeros(d - l - 1)] / math.sqrt(l * (l + 1))
        mats.append(np.diag(diag).astype(np.complex128))
    return np.array(mats)


def _project_to_states(h: np.ndarray, r: int) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (h + h.conj().T))
    w = w[::-1].copy()
    w[r:] = 0.0
    # Euclidean projection of the spectrum onto the probability simplex.
    u = np.sort(w)[::-1]
    css = np.cumsum(u)
    k = np.nonzero(u * np.arange(1, u.size + 1) > css - 1)[0][-1]
    w = np.clip(w - (css[k] - 1) / (k + 1), 0.0, None)
    v = v[:, ::-1]
    return (v * w) @ v.conj().T


def pilot_estimate(samples, d: int, r: int, gamma: float) -> np.ndarray:
    """Robust linear-inversion estimate projected onto rank-``r`` states."""
    basis = _hermitian_basis(d)
    coeff = estimate_observables(samples, basis, EstimatorKind.truncated_mean(gamma))
    h = np.eye(d) / d + np.einsum("k,kij->ij", coeff, basis)
    return _project_to_states(h, r)


@lru_cache(maxsize=8)
def _cached_net(d: int, r: int, eps: float) -> CoveringNet:
    return build_covering_net(d, r, eps)


@dataclass(frozen=True)
class TomographyResult:
    state: DensityMatrix
    net_index: int
    candidates: np.ndarray
    defects: np.ndarray
    pilot: np.ndarray


def robust_tomography(
    samples,
    d: int,
    r: int,
    eps: float,
    gamma: float,
    *,
    net: CoveringNet | None = None,
    candidates: int | None = 24,
    return_details: bool = False,
):
    """Select a net member from corrupted shadows.

    The net is built at ``eps/5``. Helstrom projectors for ordered pairs are
    estimated with the truncated mean at ``2 gamma`` and the minimum-distance
    rule picks the output. With ``candidates`` set, both the selected member
    and its competitors are restricted to the ``candidates`` net members
    nearest to a robust pilot estimate; ``None`` uses every pair.
    """
    samples = np.asarray(samples)
    if samples.ndim != 2 or samples.shape[1] != d:
        raise InvalidDimensionError("samples must be an (n, d) array of vectors")
    if net is None:
        net = _cached_net(d, r, round(eps / 5.0, 12))
    pilot = pilot_estimate(samples, d, r, gamma)
    if candidates is None or candidates >= len(net):
        cand = np.arange(len(net))
    else:
        dist = _trace_distances(net.states, pilot)
        cand = np.sort(np.argsort(dist, kind="stable")[:candidates])
    states = net.states[cand]
    ii, ll, proj, pred = _pair_tables(states)
    E = np.full_like(pred, np.nan)
    if proj.shape[0]:
        E[ii, ll] = estimate_observables(samples, proj, EstimatorKind.truncated_mean(gamma))
    local = yatracos_select(E, states, predicted=pred)
    off = ~np.eye(len(cand), dtype=bool)
    defects = np.where(off, np.abs(pred - E), -np.inf).max(axis=0) if len(cand) > 1 else np.zeros(1)
    chosen = DensityMatrix(states[local])
    if return_details:
        return TomographyResult(chosen, int(cand[local]), cand, defects, pilot)
    return chosen


# ---------------------------------------------------------------------------
# JSON layout
# ---------------------------------------------------------------------------

NET_FORMAT = "robust_shadows.covering_net/1"
ESTIMATES_FORMAT = "robust_shadows.estimates/1"


def _encode_matrix(m: np.ndarray) -> list:
    flat = np.asarray(m).reshape(-1)
    return [[float(z.real), float(z.imag)] for z in flat]


def _decode_matrix(pairs: list, d: int) -> np.ndarray:
    arr = np.asarray(pairs, dtype=float)
    return (arr[:, 0] + 1j * arr[:, 1]).reshape(d, d)


def net_to_json(net: CoveringNet) -> str:
    """Serialise a net; each state is a row-major list of ``[re, im]`` pairs."""
    doc = {
        "format": NET_FORMAT,
        "dimension": net.dim,
        "rank": net.rank,
        "epsilon": net.epsilon,
        "construction": net.construction,
        "size": len(net),
        "coverage": net.coverage,
        "states": [_encode_matrix(s) for s in net.states],
    }
    return json.dumps(doc)


def net_from_json(text: str) -> CoveringNet:
    doc = json.loads(text)
    if doc.get("format") != NET_FORMAT:
        raise InvalidArgumentError(f"not a covering-net document: {doc.get('format')!r}")
    d = int(doc["dimension"])
    states = np.array([_decode_matrix(s, d) for s in doc["states"]]).reshape(-1, d, d)
    for s in states:
        if np.linalg.eigvalsh(s)[0] < -DERIVED_TOL:
            raise InvalidArgumentError("net state is not PSD")
    return CoveringNet(states, float(doc["epsilon"]), int(doc["rank"]), doc["construction"], doc.get("coverage", {}))


def estimates_to_json(estimates: np.ndarray) -> str:
    """Square table; diagonal and missing entries are ``null``."""
    E = np.asarray(estimates, dtype=float)
    rows = [[None if not np.isfinite(x) else float(x) for x in row] for row in E]
    return json.dumps({"format": ESTIMATES_FORMAT, "size": E.shape[0], "entries": rows})


def estimates_from_json(text: str) -> np.ndarray:
    doc = json.loads(text)
    if doc.get("format") != ESTIMATES_FORMAT:
        raise InvalidArgumentError(f"not an estimate table: {doc.get('format')!r}")
    return np.array([[np.nan if x is None else x for x in row] for row in doc["entries"]], dtype=float)
