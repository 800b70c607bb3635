import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import redmoment.inversion as inv
from redmoment.errors import ConstructionError, ParameterError
from redmoment.invariants import InvariantVector, compute_invariants
from redmoment.inversion import (
    SVEC_INDEX,
    build_a_b,
    build_bd,
    build_ld,
    build_maps,
    build_w,
    estimate_witness,
    estimated_mbar,
    exact_mbar_svec,
    get_maps,
    qubit_constraints,
    reconstruct_invariants,
    smat,
    svec,
)
from redmoment.moments import build_mbar, witness
from redmoment.protocol import CorrelatorVector, ProtocolConfig, expected_correlators, run_protocol
from redmoment.states import isotropic, max_entangled, maximally_mixed
from redmoment.testkit import StateGenerator, random_mixed_state, random_pure_state

DIMS = [(2, 2), (2, 3), (3, 2), (3, 3)]


@pytest.fixture(scope="module")
def maps():
    return {d: get_maps(*d) for d in DIMS}


def held_out(d_a, d_b, n, seed=987):
    kinds = ["haar_pure", "mixed_ginibre", "separable_mixture"]
    per = -(-n // 3)
    states = []
    for k, kind in enumerate(kinds):
        states += StateGenerator(kind, d_a, d_b, seed=seed + k).take(per)
    return states[:n]


# ---------------------------------------------------------------- svec, A, b

def test_svec_order():
    assert SVEC_INDEX[:4] == ((0, 0), (0, 1), (0, 2), (0, 3))
    assert len(SVEC_INDEX) == 10


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_svec_isometry(seed):
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((4, 4))
    x = g + g.T
    assert abs(np.linalg.norm(svec(x)) - np.linalg.norm(x, "fro")) <= 1e-14 * max(1, np.linalg.norm(x))
    assert np.allclose(smat(svec(x)), x, atol=1e-14)


@pytest.mark.parametrize("d_b", [2, 3, 4])
def test_a_b_reproduce_mbar(d_b):
    a, b = build_a_b(d_b)
    rng = np.random.default_rng(d_b)
    for _ in range(100):
        x = rng.random(9)
        m = build_mbar(InvariantVector.from_array(x), d_b).entries
        assert np.max(np.abs(svec(m) - (a @ x + b))) <= 1e-14


@pytest.mark.parametrize("d_b", [2, 3, 4])
def test_a_b_structure(d_b):
    a, b = build_a_b(d_b)
    assert a.shape == (10, 9)
    assert np.flatnonzero(b).tolist() == [0, 2]
    assert b[0] == d_b - 1 and b[2] == math.sqrt(2)
    assert np.flatnonzero(a[:, 4]).tolist() == [3]
    assert a[3, 4] == -math.sqrt(2)
    assert a[1, 2] == math.sqrt(2) * (d_b - 1)


def test_a_b_range():
    with pytest.raises(ParameterError):
        build_a_b(1)


# ---------------------------------------------------------------- W

def test_w_consistency_held_out(maps):
    m = maps[(2, 2)]
    for rho in held_out(2, 2, 50):
        pred = m.w @ compute_invariants(rho).as_array() + m.w0
        assert np.max(np.abs(pred - expected_correlators(rho).y)) <= 1e-9


@pytest.mark.parametrize("dims", DIMS)
def test_w_simplex_and_residual(maps, dims):
    m = maps[dims]
    assert np.max(np.abs(m.w.sum(axis=0))) <= 1e-12
    assert abs(m.w0.sum() - 1) <= 1e-12
    assert m.oracle_residual <= 1e-9


@pytest.mark.parametrize("dims", DIMS)
def test_w_impossible_rows(maps, dims):
    m = maps[dims]
    rows = []
    if dims[0] == 2:
        rows += [7, 8, 9]
    if dims[1] == 2:
        rows += [2, 6, 9]
    for r in rows:
        assert np.max(np.abs(m.w[r])) <= 1e-12 and abs(m.w0[r]) <= 1e-12


def test_w_rejects_nonaffine(monkeypatch):
    real = inv.expected_correlators

    def bent(rho):
        y = real(rho).y.copy()
        x5 = compute_invariants(rho).x5
        y[1] += 0.01 * x5**2
        y[0] -= 0.01 * x5**2
        return CorrelatorVector(y)

    monkeypatch.setattr(inv, "expected_correlators", bent)
    with pytest.raises(ConstructionError):
        build_w(2, 3)


def test_w_argument_guards():
    with pytest.raises(ParameterError):
        build_w(7, 2)
    with pytest.raises(ParameterError):
        build_w(2, 2, n_states=10)


# ---------------------------------------------------------------- qubit identities

@pytest.mark.parametrize("dims", [(2, 2), (2, 3), (3, 2)])
def test_qubit_identities_hold(dims):
    c, rhs = qubit_constraints(*dims)
    for rho in held_out(*dims, 30, seed=5):
        assert np.max(np.abs(c @ compute_invariants(rho).as_array() - rhs)) <= 1e-12


def test_no_constraints_without_qubits():
    c, rhs = qubit_constraints(3, 3)
    assert c.shape == (0, 9) and rhs.shape == (0,)


# ---------------------------------------------------------------- L_d

@pytest.mark.parametrize("dims, rank", [((2, 2), 4), ((2, 3), 6), ((3, 2), 6), ((3, 3), 9)])
def test_reported_rank(maps, dims, rank):
    assert maps[dims].rank == rank


@pytest.mark.parametrize("dims", DIMS)
def test_round_trip(maps, dims):
    m = maps[dims]
    for rho in held_out(*dims, 20, seed=321):
        x = compute_invariants(rho).as_array()
        y = m.w @ x + m.w0
        assert np.max(np.abs(m.l @ y - x)) <= 1e-8
        assert np.max(np.abs(m.a @ (m.l @ y) + m.b - exact_mbar_svec(rho))) <= 1e-8


@pytest.mark.parametrize("dims", DIMS)
def test_l_is_linear_on_simplex(maps, dims):
    # the affine offset is folded in through sum(y) = 1
    m = maps[dims]
    y = np.full(10, 0.1)
    assert np.allclose(reconstruct_invariants(y, m).as_array(), m.l @ y, atol=0)


def test_ld_rank_collapse():
    w, w0, _ = build_w(3, 3)
    w = w.copy()
    w[:, 8] = 0.0
    with pytest.raises(ConstructionError):
        build_ld(w, w0, 3, 3)


# ---------------------------------------------------------------- B_d

@pytest.mark.parametrize("dims", DIMS)
def test_op_norm(maps, dims):
    from redmoment.testkit import brute_force_op_norm

    m = maps[dims]
    assert m.op_norm > 0
    assert abs(brute_force_op_norm(m.b_d) / m.op_norm - 1) <= 1e-6
    b_d, nrm = build_bd(m.a, m.l)
    assert np.array_equal(b_d, m.b_d) and nrm == m.op_norm


def test_normalisation_sign_and_scaling(maps):
    m = maps[(3, 3)]
    for p in np.linspace(0, 1, 21):
        mb = build_mbar(compute_invariants(isotropic(3, p)), 3).entries
        lam = np.linalg.eigvalsh(mb)[0]
        lam_n = np.linalg.eigvalsh(mb / m.op_norm)[0]
        assert abs(lam_n - lam / m.op_norm) <= 1e-12
        if abs(lam) > 1e-12:
            assert np.sign(lam) == np.sign(lam_n)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.sampled_from(DIMS))
def test_error_contraction(maps, seed, k):
    m = maps[k]
    dy = np.random.default_rng(seed).standard_normal(10)
    assert np.linalg.norm(m.b_d @ dy) / m.op_norm <= np.linalg.norm(dy) * (1 + 1e-12)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(1e-6, 1.0))
def test_weyl_step(seed, scale):
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((4, 4))
    e = rng.standard_normal((4, 4)) * scale
    m, pert = g + g.T, e + e.T
    gap = abs(np.linalg.eigvalsh(m + pert)[0] - np.linalg.eigvalsh(m)[0])
    assert gap <= np.linalg.norm(pert, "fro") + 1e-12


# ---------------------------------------------------------------- estimation path

@pytest.mark.parametrize("dims", DIMS)
def test_exact_y_reproduces_witness(maps, dims):
    m = maps[dims]
    for rho in held_out(*dims, 10, seed=11) + [max_entangled(dims[0])] * (dims[0] == dims[1]):
        est = estimate_witness(expected_correlators(rho), m)
        ref = witness(rho, maps=m)
        assert abs(est.e4 - ref.e4) <= 1e-8
        assert abs(est.e4_tilde - ref.e4_tilde) <= 1e-8


def test_phi2_exact_normalised_value(maps):
    w = estimate_witness(expected_correlators(max_entangled(2)), maps[(2, 2)])
    assert abs(w.e4_tilde - w.e4 / maps[(2, 2)].op_norm) < 1e-15
    assert w.e4_tilde < 0


def batch_estimates(rho, m, n_u, seed, n_batch=20):
    res = run_protocol(ProtocolConfig(n_u, 3, seed, rho))
    full = estimate_witness(res.y_hat, m).e4
    batches = np.array_split(res.per_setting, n_batch)
    e = np.array([estimate_witness(b.mean(axis=0), m).e4 for b in batches])
    # sd of the full estimate from the spread of batch estimates
    return full, e.std(ddof=1) / math.sqrt(n_batch)


def test_phi2_protocol_estimate(maps):
    e_hat, sd = batch_estimates(max_entangled(2), maps[(2, 2)], 100_000, seed=2718)
    assert abs(e_hat - (-0.329926)) <= 3 * sd


def test_maximally_mixed_estimate_near_zero(maps):
    e_small, _ = batch_estimates(maximally_mixed(2, 2), maps[(2, 2)], 5_000, seed=1)
    e_big, sd = batch_estimates(maximally_mixed(2, 2), maps[(2, 2)], 100_000, seed=2)
    assert abs(e_big) <= 5 * sd + 1e-3
    assert abs(e_big) < abs(e_small)


def test_estimate_dimension_mismatch(maps):
    y = expected_correlators(max_entangled(2))
    with pytest.raises(ParameterError):
        estimate_witness(y, maps[(2, 2)], d_a=3, d_b=2)
    with pytest.raises(ParameterError):
        estimate_witness(np.zeros(9), maps[(2, 2)])


def test_estimated_mbar_matches_exact(maps):
    rho = random_mixed_state(2, 3, seed=9)
    est = estimated_mbar(expected_correlators(rho), maps[(2, 3)]).entries
    assert np.max(np.abs(est - build_mbar(compute_invariants(rho), 3).entries)) <= 1e-8


# ---------------------------------------------------------------- cache

def test_memo_returns_same_object(maps):
    assert get_maps(2, 2) is maps[(2, 2)]


def test_disk_cache_roundtrip_and_hash(tmp_path, monkeypatch):
    monkeypatch.setenv("REDMOMENT_CACHE_DIR", str(tmp_path))
    monkeypatch.setattr(inv, "_memo", {})
    first = get_maps(2, 2)
    path = tmp_path / "maps_2x2_v1.json"
    blob = json.loads(path.read_text())
    assert blob["sha256"] == first.content_hash()
    assert set(blob["maps"]) == {"d_a", "d_b", "w", "w0", "l", "a", "b", "b_d", "op_norm",
                                 "rank", "oracle_residual", "builder_version"}
    monkeypatch.setattr(inv, "_memo", {})
    again = get_maps(2, 2)
    assert again.content_hash() == first.content_hash()

    # a tampered file is rebuilt
    blob["maps"]["op_norm"] = 1.0
    path.write_text(json.dumps(blob))
    monkeypatch.setattr(inv, "_memo", {})
    rebuilt = get_maps(2, 2)
    assert rebuilt.op_norm == first.op_norm
    assert json.loads(path.read_text())["maps"]["op_norm"] == first.op_norm


def test_maps_json_roundtrip(maps):
    m = maps[(2, 3)]
    back = inv.InversionMaps.from_json(json.loads(json.dumps(m.to_json())))
    assert back.content_hash() == m.content_hash()
    assert np.array_equal(back.b_d, m.b_d)


def test_build_is_deterministic():
    a, b = build_maps(2, 2), build_maps(2, 2)
    assert a.content_hash() == b.content_hash()
