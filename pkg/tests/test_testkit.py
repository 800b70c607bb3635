import itertools

import numpy as np
import pytest

from redmoment.errors import ParameterError
from redmoment.invariants import compute_invariants
from redmoment.moments import build_m_raw, build_mbar
from redmoment.protocol import UnitarySetting, classify_triple, sample_haar_unitary
from redmoment.states import DensityMatrix, max_entangled, maximally_mixed, partial_transpose, spectrum
from redmoment.testkit import (
    StateGenerator,
    brute_force_op_norm,
    clifford_average_y,
    clifford_group_1q,
    enumerate_y,
    random_mixed_state,
    random_separable_state,
)


@pytest.mark.parametrize("kind", ["haar_pure", "mixed_ginibre", "separable_mixture"])
@pytest.mark.parametrize("dims", [(2, 2), (2, 3), (3, 3)])
def test_generators_valid_and_reproducible(kind, dims):
    a = StateGenerator(kind, *dims, seed=4).take(5)
    b = StateGenerator(kind, *dims, seed=4).take(5)
    for r1, r2 in zip(a, b):
        DensityMatrix(r1.d_a, r1.d_b, r1.data)
        assert np.array_equal(r1.data, r2.data)
    assert not np.array_equal(a[0].data, a[1].data)


def test_mixed_state_rank():
    rho = random_mixed_state(2, 3, rank=2, seed=1)
    assert np.sum(spectrum(rho) > 1e-12) == 2


@pytest.mark.parametrize("dims", [(2, 2), (2, 3), (3, 3)])
def test_separable_sampler_passes_necessary_checks(dims):
    for seed in range(20):
        rho = random_separable_state(*dims, seed=seed)
        x = compute_invariants(rho)
        assert spectrum(partial_transpose(rho))[0] >= -1e-12
        assert build_mbar(x, rho.d_b).lambda_min() >= -1e-9
        assert build_m_raw(x, x.tr_rho3, rho.d_b).lambda_min() >= -1e-9


def test_enumerate_uniform_counting_fractions():
    dims = (2, 3)
    setting = UnitarySetting(sample_haar_unitary(2, 1), sample_haar_unitary(3, 2))
    y = enumerate_y(maximally_mixed(*dims), setting).y
    outcomes = list(itertools.product(range(2), range(3)))
    counts = np.zeros(10)
    for t in itertools.product(outcomes, repeat=3):
        counts[int(classify_triple(t))] += 1
    assert np.allclose(y, counts / 6**3, atol=1e-15)
    assert abs(y.sum() - 1) < 1e-14


def test_enumerate_size_guard():
    with pytest.raises(ParameterError):
        enumerate_y(maximally_mixed(10, 11), UnitarySetting(np.eye(10), np.eye(11)))


def test_clifford_group():
    group = clifford_group_1q()
    assert len(group) == 24
    for g in group:
        assert np.allclose(g.conj().T @ g, np.eye(2), atol=1e-12)
    # closed under products up to a global phase
    for g, h in itertools.product(group[:6], group):
        gh = g @ h
        assert any(abs(np.trace(gh.conj().T @ k)) > 2 - 1e-9 for k in group)


def test_clifford_frame_potential_three_design():
    group = clifford_group_1q()
    pot = np.mean([abs(np.trace(g.conj().T @ h)) ** 6 for g in group for h in group])
    # Haar value of E|Tr U|^6 on U(2) is the Catalan number 5
    assert abs(pot - 5) < 1e-9


def test_clifford_average_properties():
    y_phi = clifford_average_y(max_entangled(2)).y
    y_mix = clifford_average_y(maximally_mixed(2, 2)).y
    assert abs(y_phi.sum() - 1) < 1e-12
    assert abs(y_mix.sum() - 1) < 1e-12
    assert np.max(np.abs(y_phi - y_mix)) > 1e-2


def test_clifford_average_guard():
    with pytest.raises(ParameterError):
        clifford_average_y(maximally_mixed(2, 3))


def test_brute_force_op_norm():
    rng = np.random.default_rng(0)
    m = rng.standard_normal((10, 10))
    exact = np.linalg.norm(m, 2)
    probe = brute_force_op_norm(m, refine=0)
    assert 0.8 * exact < probe <= exact + 1e-12
    assert abs(brute_force_op_norm(m) / exact - 1) <= 1e-9
