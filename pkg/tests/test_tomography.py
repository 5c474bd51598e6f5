import numpy as np
import pytest

from robust_shadows.errors import InvalidArgumentError, SizeOverflowError
from robust_shadows.quantum_core import DensityMatrix, random_rank_r_state, trace_distance
from robust_shadows.shadows import collect_shadows
from robust_shadows.tomography import (
    CoveringNet,
    build_covering_net,
    build_pure_net,
    estimates_from_json,
    estimates_to_json,
    helstrom_projectors,
    holevo_helstrom,
    net_from_json,
    net_to_json,
    pilot_estimate,
    probe_coverage,
    robust_tomography,
    yatracos_select,
)


def test_helstrom_identity(rng):
    for _ in range(50):
        a = random_rank_r_state(4, 2, rng)
        b = random_rank_r_state(4, 3, rng)
        pair = holevo_helstrom(a, b)
        gap = np.trace(pair.observable.matrix @ (a.matrix - b.matrix)).real
        assert gap == pytest.approx(trace_distance(a, b), abs=1e-9)
        assert pair.value == pytest.approx(gap, abs=1e-9)
        w = pair.observable.eigenvalues
        assert np.all((np.abs(w) < 1e-9) | (np.abs(w - 1) < 1e-9))


def test_helstrom_equal_states_gives_zero_projector(rng):
    a = random_rank_r_state(3, 1, rng).matrix
    proj, val = helstrom_projectors(a, a)
    assert np.abs(proj).max() < 1e-12 and abs(val) < 1e-12


def test_bloch_net_size_and_coverage(rng):
    net = build_covering_net(2, 1, 1.0, probes=200, rng=rng)
    assert len(net) <= 1024
    assert net.coverage["within_epsilon"] == 1.0
    assert net.coverage["max_distance"] <= 1.0 / 8 + 1e-9


def test_pure_net_d3_separation():
    v = build_pure_net(3, 1.0, np.random.default_rng(1), max_size=500)
    ov = np.abs(v.conj() @ v.T)
    np.fill_diagonal(ov, 0)
    assert np.all(np.sqrt(np.clip(2 - 2 * ov, 0, None)) > 1 / 8 - 1e-12)


def test_mixed_net_and_cap(rng):
    net = build_covering_net(2, 2, 1.0, cap=200, rng=rng)
    assert len(net) == 200 and net.construction == "random_subsample"
    for i in range(0, 200, 37):
        s = net.state(i)
        assert isinstance(s, DensityMatrix) and s.rank() <= 2
    with pytest.raises(SizeOverflowError):
        build_covering_net(2, 2, 1.0, cap=200, allow_subsample=False)
    with pytest.raises(InvalidArgumentError):
        build_covering_net(2, 3, 0.5)


def test_yatracos_recovers_exact_member(rng):
    net = build_covering_net(2, 1, 1.0)
    states = net.states[::40]
    target = 5
    ii, ll = np.nonzero(~np.eye(len(states), dtype=bool))
    proj, _ = helstrom_projectors(states[ii], states[ll])
    E = np.full((len(states),) * 2, np.nan)
    E[ii, ll] = np.einsum("pij,ji->p", proj, states[target]).real
    assert yatracos_select(E, states) == target
    assert yatracos_select(np.zeros((1, 1)), states[:1]) == 0
    with pytest.raises(InvalidArgumentError):
        yatracos_select(np.zeros((2, 2)), states)


def test_pilot_estimate(rng):
    rho = random_rank_r_state(2, 1, rng)
    v = collect_shadows(rho, 20000, rng)
    assert trace_distance(pilot_estimate(v, 2, 1, 0.0), rho) < 0.05


def test_robust_tomography_d2(rng):
    rho = random_rank_r_state(2, 1, rng)
    v = collect_shadows(rho, 20000, rng)
    res = robust_tomography(v, 2, 1, 0.3, 0.0, return_details=True)
    assert trace_distance(res.state, rho) <= 0.3
    assert res.net_index in res.candidates


def test_net_json_round_trip(rng):
    net = build_covering_net(2, 1, 1.0, probes=10, rng=rng)
    back = net_from_json(net_to_json(net))
    np.testing.assert_array_equal(back.states, net.states)
    assert back.epsilon == net.epsilon and back.rank == net.rank and back.coverage == net.coverage
    with pytest.raises(InvalidArgumentError):
        net_from_json('{"format": "other"}')


def test_estimates_json_round_trip():
    E = np.array([[np.nan, 0.25], [1 / 3, np.nan]])
    np.testing.assert_array_equal(estimates_from_json(estimates_to_json(E)), E)


def test_probe_coverage_keys(rng):
    net = CoveringNet(np.array([np.eye(2) / 2]), 1.0, 1, "manual")
    cov = probe_coverage(net, 5, rng)
    assert cov["probes"] == 5 and 0 <= cov["max_distance"] <= 1
