"""Random-state generators and brute-force oracles used by the test-suite."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ParameterError
from .protocol import N_CLASSES, CorrelatorVector, UnitarySetting, classify_indices, outcome_distribution
from .states import DensityMatrix


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def random_pure_vector(dim, seed=None):
    rng = _rng(seed)
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def random_pure_state(d_a, d_b, seed=None) -> DensityMatrix:
    v = random_pure_vector(d_a * d_b, seed)
    return DensityMatrix(d_a, d_b, np.outer(v, v.conj()))


def random_mixed_state(d_a, d_b, rank=None, seed=None) -> DensityMatrix:
    """Ginibre-induced mixed state G G^dag / Tr(G G^dag) of the given rank."""
    rng = _rng(seed)
    n = d_a * d_b
    k = n if rank is None else rank
    g = rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))
    rho = g @ g.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(d_a, d_b, rho / np.trace(rho).real)


def random_separable_state(d_a, d_b, n_terms=None, seed=None) -> DensityMatrix:
    """Dirichlet mixture of at most d_a*d_b Haar-random product pure states."""
    rng = _rng(seed)
    k = int(n_terms or rng.integers(1, d_a * d_b + 1))
    weights = rng.dirichlet(np.ones(k))
    rho = np.zeros((d_a * d_b, d_a * d_b), dtype=complex)
    for w in weights:
        v = np.kron(random_pure_vector(d_a, rng), random_pure_vector(d_b, rng))
        rho += w * np.outer(v, v.conj())
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(d_a, d_b, rho / np.trace(rho).real)


@dataclass(frozen=True)
class StateGenerator:
    kind: str  # "haar_pure" | "mixed_ginibre" | "separable_mixture"
    d_a: int
    d_b: int
    seed: int = 0

    def __iter__(self):
        rng = np.random.default_rng(self.seed)
        make = {
            "haar_pure": lambda: random_pure_state(self.d_a, self.d_b, rng),
            "mixed_ginibre": lambda: random_mixed_state(
                self.d_a, self.d_b, rank=int(rng.integers(1, self.d_a * self.d_b + 1)), seed=rng),
            "separable_mixture": lambda: random_separable_state(self.d_a, self.d_b, seed=rng),
        }[self.kind]
        while True:
            yield make()

    def take(self, n):
        return list(itertools.islice(iter(self), n))


# --------------------------------------------------------------------------
# exact correlators by enumeration


@lru_cache(maxsize=None)
def _all_triples(d_a, d_b):
    dim = d_a * d_b
    idx = np.array(list(itertools.product(range(dim), repeat=3)))
    a, b = np.divmod(idx, d_b)
    return idx, classify_indices(a, b)


def enumerate_y(rho: DensityMatrix, setting: UnitarySetting) -> CorrelatorVector:
    """y(U) by summing p(I1)p(I2)p(I3) over every ordered outcome triple."""
    dim = rho.d_a * rho.d_b
    if dim**3 > 10**6:
        raise ParameterError("enumeration limited to (d_A d_B)^3 <= 1e6")
    p = outcome_distribution(rho, setting).ravel()
    idx, cls = _all_triples(rho.d_a, rho.d_b)
    w = p[idx[:, 0]] * p[idx[:, 1]] * p[idx[:, 2]]
    return CorrelatorVector(np.bincount(cls, weights=w, minlength=N_CLASSES))


@lru_cache(maxsize=1)
def clifford_group_1q():
    """The 24 single-qubit Cliffords modulo global phase, generated from H and S."""
    h = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
    s = np.diag([1, 1j])

    def known(u, group):
        # equal up to global phase iff |Tr(u^dag g)| = 2
        return any(abs(np.trace(u.conj().T @ g)) > 2 - 1e-9 for g in group)

    group = [np.eye(2, dtype=complex)]
    frontier = list(group)
    while frontier:
        nxt = []
        for g in frontier:
            for gen in (h, s):
                u = gen @ g
                if not known(u, group):
                    group.append(u)
                    nxt.append(u)
        frontier = nxt
    return tuple(group)


def clifford_average_y(rho: DensityMatrix) -> CorrelatorVector:
    """Exact E_U[y] for two qubits by averaging over Clifford x Clifford."""
    if (rho.d_a, rho.d_b) != (2, 2):
        raise ParameterError("Clifford oracle is for d_A = d_B = 2 only")
    cliffs = clifford_group_1q()
    acc = np.zeros(N_CLASSES)
    for ua in cliffs:
        for ub in cliffs:
            acc += enumerate_y(rho, UnitarySetting(ua, ub)).y
    return CorrelatorVector(acc / len(cliffs) ** 2)


def brute_force_op_norm(mat, n_probe=10_000, seed=0, refine=2000):
    """max ||B v|| over random unit vectors, then power iteration from the best probe.

    Without refinement (``refine=0``) this is only a lower bound: in ten
    dimensions the best of 1e4 random probes typically lands near 0.9 of
    the top singular value.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((n_probe, mat.shape[1]))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    norms = np.linalg.norm(v @ mat.T, axis=1)
    best = v[np.argmax(norms)]
    gram = mat.T @ mat
    for _ in range(refine):
        best = gram @ best
        best /= np.linalg.norm(best)
    return float(max(norms.max(), np.linalg.norm(mat @ best)))


def moment_matrix_oracle(data, d_a, d_b):
    """M_ij = Tr({V_i, V_j}/2 (rho_A x I - rho)) with V = (I, rho_A x I, I x rho_B, rho).

    Works on any Hermitian unit-trace operator, e.g. a partial transpose.
    """
    data = np.asarray(data)
    t = data.reshape(d_a, d_b, d_a, d_b)
    ra = np.einsum("ikjk->ij", t)
    rb = np.einsum("kikj->ij", t)
    vs = [np.eye(d_a * d_b), np.kron(ra, np.eye(d_b)), np.kron(np.eye(d_a), rb), data]
    red = np.kron(ra, np.eye(d_b)) - data
    m = np.empty((4, 4))
    for i in range(4):
        for j in range(4):
            m[i, j] = np.trace((vs[i] @ vs[j] + vs[j] @ vs[i]) / 2 @ red).real
    return m
