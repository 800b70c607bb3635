"""Simulated local randomized measurements and third-order correlators.

A setting applies U = U_A (x) U_B and measures in the computational basis.
Outcome probabilities use the rotated-state convention

    p(i, j | U) = <i j| U^dag rho U |i j>,

which is the same number as Tr(M_i rho) for the rotated projectors
M_i = U|i><i|U^dag. Every ordered outcome triple falls into one of ten reduced
equality-pattern classes::

    C0 ([1^3],[1^3])   C1 ([1^3],[21])    C2 ([1^3],[123])
    C3 ([21],[1^3])    C4 ([21],[21])par  C5 ([21],[21])cross
    C6 ([21],[123])    C7 ([123],[1^3])   C8 ([123],[21])
    C9 ([123],[123])

where "par" means the equal pair sits at the same positions on both sides.
"""
from __future__ import annotations

import enum
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ParameterError, ValidationError
from .states import DensityMatrix

N_CLASSES = 10
MAX_TWIRL_DIM = 6
NEGATIVE_PROB_ATOL = 1e-12
CHUNK = 2048


class PatternClass(enum.IntEnum):
    C0 = 0
    C1 = 1
    C2 = 2
    C3 = 3
    C4 = 4
    C5 = 5
    C6 = 6
    C7 = 7
    C8 = 8
    C9 = 9


# per-subsystem fine patterns of a triple (u1, u2, u3)
ALL_EQUAL, PAIR_12, PAIR_23, PAIR_13, ALL_DISTINCT = range(5)
_COARSE = {ALL_EQUAL: 0, PAIR_12: 1, PAIR_23: 1, PAIR_13: 1, ALL_DISTINCT: 2}


def _class_of(pa, pb):
    ca, cb = _COARSE[pa], _COARSE[pb]
    if ca == 1 and cb == 1:
        return 4 if pa == pb else 5
    # coarse (A, B) -> class, skipping the (21, 21) split
    return {(0, 0): 0, (0, 1): 1, (0, 2): 2, (1, 0): 3, (1, 2): 6,
            (2, 0): 7, (2, 1): 8, (2, 2): 9}[(ca, cb)]


CLASS_TABLE = np.array([[_class_of(pa, pb) for pb in range(5)] for pa in range(5)], dtype=np.int64)


def side_pattern(u1, u2, u3):
    """Fine equality pattern of one subsystem's three indices (vectorized)."""
    e12, e23, e13 = np.equal(u1, u2), np.equal(u2, u3), np.equal(u1, u3)
    out = np.full(np.shape(e12), ALL_DISTINCT, dtype=np.int64)
    out[e13 & ~e12] = PAIR_13
    out[e23 & ~e12] = PAIR_23
    out[e12 & ~e23] = PAIR_12
    out[e12 & e23] = ALL_EQUAL
    return out


def classify_indices(a, b):
    """Class ids for triples given as arrays ``a[..., 3]`` and ``b[..., 3]``."""
    a, b = np.asarray(a), np.asarray(b)
    pa = side_pattern(a[..., 0], a[..., 1], a[..., 2])
    pb = side_pattern(b[..., 0], b[..., 1], b[..., 2])
    return CLASS_TABLE[pa, pb]


def classify_triple(triple) -> PatternClass:
    """Class of an outcome triple ``((a1, b1), (a2, b2), (a3, b3))``."""
    (a1, b1), (a2, b2), (a3, b3) = triple
    return PatternClass(int(classify_indices([a1, a2, a3], [b1, b2, b3])))


# --------------------------------------------------------------------------
# data types


@dataclass(frozen=True, eq=False)
class CorrelatorVector:
    y: np.ndarray
    n_u: int = 1
    n_s: int = 0

    def __post_init__(self):
        y = np.array(self.y, dtype=float)
        if y.shape != (N_CLASSES,):
            raise ValidationError("bad_shape", f"correlator vector needs 10 entries, got {y.shape}")
        y.flags.writeable = False
        object.__setattr__(self, "y", y)

    def __getitem__(self, mu):
        return self.y[mu]


@dataclass(frozen=True, eq=False)
class UnitarySetting:
    u_a: np.ndarray
    u_b: np.ndarray
    setting_seed: int | None = None

    def __post_init__(self):
        for u in (self.u_a, self.u_b):
            if np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) > 1e-10:
                raise ValidationError("not_unitary")

    @classmethod
    def from_seed(cls, d_a, d_b, seed):
        rng = setting_rng(seed)
        return cls(_haar(_ginibre(d_a, rng)), _haar(_ginibre(d_b, rng)), int(seed))


@dataclass(frozen=True)
class ProtocolConfig:
    n_u: int
    n_s: int
    master_seed: int
    state: DensityMatrix = field(repr=False)

    def __post_init__(self):
        if self.n_s < 3:
            raise ParameterError(f"n_s={self.n_s}: the triple estimator needs at least 3 shots per setting")
        if self.n_u < 1:
            raise ParameterError("n_u must be >= 1")

    @property
    def n_tot(self):
        return self.n_u * self.n_s


@dataclass(frozen=True, eq=False)
class ProtocolResult:
    y_hat: CorrelatorVector
    per_setting: np.ndarray  # (n_u, 10)
    setting_seeds: np.ndarray  # (n_u,) uint64

    def records(self):
        for k in range(len(self.setting_seeds)):
            yield {
                "setting_index": k,
                "setting_seed": int(self.setting_seeds[k]),
                "y_hat": self.per_setting[k].tolist(),
            }

    def write_jsonl(self, path):
        with open(path, "w") as fh:
            for rec in self.records():
                fh.write(json.dumps(rec) + "\n")


# --------------------------------------------------------------------------
# randomness


_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)


def _splitmix64(x):
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = x + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def derive_setting_seeds(master_seed, indices):
    """Counter-based per-setting seeds: depend only on (master_seed, index)."""
    master = np.uint64(int(master_seed) & 0xFFFFFFFFFFFFFFFF)
    return _splitmix64(_splitmix64(np.array([master]))[0] ^ np.asarray(indices, dtype=np.uint64))


def setting_rng(seed):
    return np.random.Generator(np.random.Philox(key=int(seed)))


def _ginibre(d, rng):
    z = rng.standard_normal((2, d, d))
    return (z[0] + 1j * z[1]) / np.sqrt(2.0)


def _haar(z):
    # QR with the phases of diag(R) moved into Q; works on stacks
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r, axis1=-2, axis2=-1)
    return q * (diag / np.abs(diag))[..., None, :]


def sample_haar_unitary(d, seed=None):
    """Haar-random d x d unitary; ``seed`` may be an int or a Generator."""
    if d < 1:
        raise ParameterError("d must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return _haar(_ginibre(d, rng))


# --------------------------------------------------------------------------
# outcome statistics


def _rotation(u_a, u_b):
    # kron over the trailing two axes, broadcasting over leading ones
    da, db = u_a.shape[-1], u_b.shape[-1]
    v = np.einsum("...ai,...bj->...abij", u_a, u_b)
    return v.reshape(v.shape[:-4] + (da * db, da * db))


def _probabilities(rho_data, u_a, u_b):
    v = _rotation(u_a, u_b)
    p = np.einsum("...ki,kl,...li->...i", v.conj(), rho_data, v).real
    if np.any(p < -NEGATIVE_PROB_ATOL):
        raise ValidationError("negative_probability", f"probability {p.min():.3e} < 0")
    p = np.clip(p, 0.0, None)
    return p / p.sum(axis=-1, keepdims=True)


def outcome_distribution(rho: DensityMatrix, setting: UnitarySetting) -> np.ndarray:
    """Probability table ``p[i_A, i_B]`` for one setting."""
    return _probabilities(rho.data, setting.u_a, setting.u_b).reshape(rho.d_a, rho.d_b)


def _draw(p_flat, uniforms):
    # inverse CDF; p_flat (..., D), uniforms (..., n)
    cdf = np.cumsum(p_flat, axis=-1)
    idx = (uniforms[..., :, None] >= cdf[..., None, :]).sum(axis=-1)
    return np.minimum(idx, p_flat.shape[-1] - 1)


@lru_cache(maxsize=None)
def _triples(n_s):
    return np.array(list(itertools.combinations(range(n_s), 3)), dtype=np.int64)


def triple_counts(a, b):
    """Per-row class counts over all unordered triples of shots.

    ``a`` and ``b`` have shape (n_settings, n_s) and hold local outcomes.
    """
    a, b = np.atleast_2d(a), np.atleast_2d(b)
    n, n_s = a.shape
    combos = _triples(n_s)
    cls = classify_indices(a[:, combos], b[:, combos])
    flat = (np.arange(n)[:, None] * N_CLASSES + cls).ravel()
    return np.bincount(flat, minlength=n * N_CLASSES).reshape(n, N_CLASSES)


def u_statistic(a, b):
    """Class frequencies over the C(n_s, 3) unordered shot triples, per row."""
    n_s = np.shape(a)[-1]
    return triple_counts(a, b) / math.comb(n_s, 3)


def estimate_setting(rho: DensityMatrix, setting: UnitarySetting, n_s: int, seed=None) -> CorrelatorVector:
    """Single-setting estimate from ``n_s`` simulated shots."""
    if n_s < 3:
        raise ParameterError(f"n_s={n_s}: the triple estimator needs at least 3 shots")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    p = _probabilities(rho.data, setting.u_a, setting.u_b)
    idx = _draw(p, rng.random(n_s))
    a, b = np.divmod(idx, rho.d_b)
    return CorrelatorVector(u_statistic(a[None], b[None])[0], n_u=1, n_s=n_s)


def _run_chunk(rho, n_s, seeds):
    d_a, d_b = rho.d_a, rho.d_b
    n = len(seeds)
    za = np.empty((n, d_a, d_a), dtype=complex)
    zb = np.empty((n, d_b, d_b), dtype=complex)
    uni = np.empty((n, n_s))
    for k, s in enumerate(seeds):
        rng = setting_rng(s)
        za[k] = _ginibre(d_a, rng)
        zb[k] = _ginibre(d_b, rng)
        uni[k] = rng.random(n_s)
    p = _probabilities(rho.data, _haar(za), _haar(zb))
    a, b = np.divmod(_draw(p, uni), d_b)
    return u_statistic(a, b)


def run_protocol(cfg: ProtocolConfig, threads: int = 1) -> ProtocolResult:
    """Average single-setting estimates over ``n_u`` independently seeded settings.

    Results depend only on ``cfg``; ``threads`` changes scheduling, not output.
    """
    seeds = derive_setting_seeds(cfg.master_seed, np.arange(cfg.n_u))
    chunks = [seeds[i:i + CHUNK] for i in range(0, cfg.n_u, CHUNK)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda c: _run_chunk(cfg.state, cfg.n_s, c), chunks))
    else:
        parts = [_run_chunk(cfg.state, cfg.n_s, c) for c in chunks]
    per_setting = np.concatenate(parts, axis=0)
    y_hat = CorrelatorVector(per_setting.mean(axis=0), n_u=cfg.n_u, n_s=cfg.n_s)
    return ProtocolResult(y_hat, per_setting, seeds)


# --------------------------------------------------------------------------
# exact Haar average via the third-moment twirl

# permutations of three tensor factors as images (pi(0), pi(1), pi(2))
PERMS = ((0, 1, 2), (1, 0, 2), (2, 1, 0), (0, 2, 1), (1, 2, 0), (2, 0, 1))
_FINE_REPS = {ALL_EQUAL: (0, 0, 0), PAIR_12: (0, 0, 1), PAIR_23: (1, 0, 0),
              PAIR_13: (0, 1, 0), ALL_DISTINCT: (0, 1, 2)}


def _inverse(p):
    inv = [0, 0, 0]
    for k, v in enumerate(p):
        inv[v] = k
    return tuple(inv)


def _compose(p, q):
    return tuple(p[q[k]] for k in range(3))


def _n_cycles(p):
    seen, n = set(), 0
    for k in range(3):
        if k not in seen:
            n += 1
            while k not in seen:
                seen.add(k)
                k = p[k]
    return n


def _fine_count(pattern, d):
    if pattern == ALL_EQUAL:
        return d
    if pattern == ALL_DISTINCT:
        return d * (d - 1) * (d - 2)
    return d * (d - 1)


def _compatible(pattern, perm):
    # <u|W_perm|u> = 1 iff u is constant on the cycles of perm
    rep = _FINE_REPS[pattern]
    return all(rep[k] == rep[perm[k]] for k in range(3))


@lru_cache(maxsize=None)
def _gram_pinv(d):
    g = np.array([[float(d) ** _n_cycles(_compose(_inverse(s), p)) for p in PERMS] for s in PERMS])
    return np.linalg.pinv(g, rcond=1e-12, hermitian=True)


@lru_cache(maxsize=None)
def _class_weights(d_a, d_b):
    """n[mu, sigma_A, sigma_B]: ordered triples in class mu fixed by W_sigmaA (x) W_sigmaB."""
    n = np.zeros((N_CLASSES, 6, 6))
    for pa in range(5):
        for pb in range(5):
            mu = CLASS_TABLE[pa, pb]
            cnt = _fine_count(pa, d_a) * _fine_count(pb, d_b)
            if cnt == 0:
                continue
            for i, sa in enumerate(PERMS):
                if not _compatible(pa, sa):
                    continue
                for j, sb in enumerate(PERMS):
                    if _compatible(pb, sb):
                        n[mu, i, j] += cnt
    return n


def permutation_traces(rho: DensityMatrix) -> np.ndarray:
    """T[i, j] = Tr[(W_{PERMS[i]} (x) W_{PERMS[j]}) rho^{(x)3}] over the 36 pairs."""
    t = rho.tensor()
    out = np.empty((6, 6), dtype=complex)
    for i, pa in enumerate(PERMS):
        ia = _inverse(pa)
        for j, pb in enumerate(PERMS):
            ib = _inverse(pb)
            ops = []
            for k in range(3):
                # labels: a_k -> k, b_k -> 3 + k
                ops += [t, [k, 3 + k, ia[k], 3 + ib[k]]]
            out[i, j] = np.einsum(*ops, [], optimize=True)
    return out


def expected_correlators(rho: DensityMatrix) -> CorrelatorVector:
    """Exact E_U[y(U)] for independent Haar U_A, U_B."""
    if max(rho.d_a, rho.d_b) > MAX_TWIRL_DIM:
        raise ParameterError(f"twirl limited to local dimension <= {MAX_TWIRL_DIM}")
    tr = permutation_traces(rho)
    inv_idx = [PERMS.index(_inverse(p)) for p in PERMS]
    # Hilbert-Schmidt pairing uses W^dag = W_{pi^-1}
    pairing = tr[np.ix_(inv_idx, inv_idx)]
    coeff = _gram_pinv(rho.d_a) @ pairing @ _gram_pinv(rho.d_b)
    y = np.einsum("mij,ij->m", _class_weights(rho.d_a, rho.d_b), coeff).real
    return CorrelatorVector(y, n_u=0, n_s=0)


def class_sizes(d_a, d_b):
    """Number of ordered triples in each class, |C_mu|."""
    return _class_weights(d_a, d_b)[:, 0, 0].copy()
