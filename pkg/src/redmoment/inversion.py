"""Linear maps between correlators, invariants and the vectorized moment matrix.

Forward model: E_U[y] = W x + w0, fitted against the exact twirl. The
reconstruction x = L_d y is strictly linear on the probability simplex: the
affine offset of the inverse is folded into L_d through sum(y) = 1.

When a subsystem is a qubit, three-copy antisymmetrizers vanish and the
invariants obey linear identities (e.g. Tr s^3 = (3 Tr s^2 - 1)/2). Those
identities are imposed exactly during reconstruction; without them the
qubit correlators cannot determine every invariant.
"""
from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from filelock import FileLock

from .errors import ConstructionError, ParameterError
from .invariants import InvariantVector, compute_invariants
from .moments import MatrixKind, MomentMatrix, WitnessValue, build_mbar, verdict_for
from .protocol import N_CLASSES, MAX_TWIRL_DIM, CorrelatorVector, expected_correlators
from .testkit import random_mixed_state, random_pure_state, random_separable_state

BUILDER_VERSION = "1"
FIT_RESIDUAL_MAX = 1e-8
RANK_TOL = 1e-10
SQRT2 = np.sqrt(2.0)

# upper-triangular positions of a 4x4 symmetric matrix, row-major
SVEC_INDEX = tuple((i, j) for i in range(4) for j in range(i, 4))


def svec(mat):
    mat = np.asarray(mat, dtype=float)
    return np.array([mat[i, j] * (1.0 if i == j else SQRT2) for i, j in SVEC_INDEX])


def smat(vec):
    out = np.zeros((4, 4))
    for v, (i, j) in zip(vec, SVEC_INDEX):
        if i == j:
            out[i, i] = v
        else:
            out[i, j] = out[j, i] = v / SQRT2
    return out


def build_a_b(d_b: int):
    """A (10x9) and b (10,) with svec(Mbar(x)) = A x + b."""
    if d_b < 2:
        raise ParameterError("d_b must be >= 2")
    c, r = d_b - 1.0, SQRT2
    x1, x2, x3, x4, x5, x6, x7, x8, xs = range(9)
    a = np.zeros((10, 9))
    b = np.zeros(10)
    b[0] = c                                 # (0,0)
    a[1, x3] = r * c                         # (0,1)
    b[2], a[2, x1] = r, -r                   # (0,2)
    a[3, x3], a[3, x5] = r, -r               # (0,3)
    a[4, x7] = c                             # (1,1)
    a[5, x3], a[5, x4] = r, -r               # (1,2)
    a[6, x7], a[6, x8] = r, -r               # (1,3)
    a[7, x1], a[7, x2] = 1.0, -1.0           # (2,2)
    a[8, x4], a[8, x6] = r, -r               # (2,3)
    a[9, x8], a[9, xs] = 1.0, -1.0           # (3,3)
    return a, b


def qubit_constraints(d_a: int, d_b: int):
    """Affine identities C x = c holding for every state when a side is a qubit."""
    rows, rhs = [], []
    if d_b == 2:
        rows += [[-1.5, 1, 0, 0, 0, 0, 0, 0, 0],   # x2 = (3 x1 - 1)/2
                 [0, 0, 1, -2, -1, 2, 0, 0, 0],     # x3 - 2 x4 - x5 + 2 x6 = 0
                 [0, 0, 0, 0, 0, 0, 1, -3, 2]]      # x7 - 3 x8 + 2 xS = 0
        rhs += [-0.5, 0.0, 0.0]
    if d_a == 2:
        rows += [[0, 0, -1.5, 0, 0, 0, 1, 0, 0],   # x7 = (3 x3 - 1)/2
                 [1, 0, 0, -2, -1, 0, 0, 2, 0],     # x1 - 2 x4 - x5 + 2 x8 = 0
                 [0, 1, 0, 0, 0, -3, 0, 0, 2]]      # x2 - 3 x6 + 2 xS = 0
        rhs += [-0.5, 0.0, 0.0]
    return np.array(rows, dtype=float).reshape(-1, 9), np.array(rhs, dtype=float)


def _training_states(d_a, d_b, n_states, seed):
    rng = np.random.default_rng(seed)
    dim = d_a * d_b
    out = []
    for k in range(n_states):
        kind = k % 3
        if kind == 0:
            out.append(random_mixed_state(d_a, d_b, rank=int(rng.integers(1, dim + 1)), seed=rng))
        elif kind == 1:
            out.append(random_pure_state(d_a, d_b, seed=rng))
        else:
            out.append(random_separable_state(d_a, d_b, seed=rng))
    return out


def build_w(d_a: int, d_b: int, n_states: int = 90, seed: int = 20240611):
    """Fit E_U[y] = W x + w0 over random states; returns (W, w0, residual).

    Class 0 is fixed by the simplex identity, so the columns of W sum to 0 and
    w0 sums to 1 exactly. The maximal fit residual certifies affineness.
    """
    if not (2 <= d_a <= MAX_TWIRL_DIM and 2 <= d_b <= MAX_TWIRL_DIM):
        raise ParameterError(f"map construction needs 2 <= d <= {MAX_TWIRL_DIM}")
    if n_states < 60:
        raise ParameterError("use at least 60 training states")
    states = _training_states(d_a, d_b, n_states, seed)
    x = np.array([compute_invariants(s).as_array() for s in states])
    y = np.array([expected_correlators(s).y for s in states])
    design = np.column_stack([x, np.ones(len(x))])
    coef, *_ = np.linalg.lstsq(design, y[:, 1:], rcond=None)
    w = np.zeros((N_CLASSES, 9))
    w0 = np.zeros(N_CLASSES)
    w[1:], w0[1:] = coef[:9].T, coef[9]
    w[0] = -w[1:].sum(axis=0)
    w0[0] = 1.0 - w0[1:].sum()
    residual = float(np.abs(x @ w.T + w0 - y).max())
    if residual > FIT_RESIDUAL_MAX:
        raise ConstructionError(f"affine fit residual {residual:.3e} exceeds {FIT_RESIDUAL_MAX:.0e}")
    return w, w0, residual


def _null_space(c):
    if c.shape[0] == 0:
        return np.eye(9)
    _, s, vt = np.linalg.svd(c)
    r = int((s > RANK_TOL * s[0]).sum())
    return vt[r:].T


def build_ld(w, w0, d_a: int, d_b: int):
    """Reconstruction map L_d (9x10) with x = L_d y on the simplex; returns (L_d, rank).

    ``rank`` is the dimension of the identifiable invariant subspace reached
    by the correlators once the qubit identities are imposed.
    """
    c_mat, c_rhs = qubit_constraints(d_a, d_b)
    basis = _null_space(c_mat)
    x_p = np.linalg.lstsq(c_mat, c_rhs, rcond=None)[0] if len(c_rhs) else np.zeros(9)
    k = w @ basis
    s = np.linalg.svd(k, compute_uv=False)
    rank = int((s > RANK_TOL).sum())
    if rank < basis.shape[1]:
        raise ConstructionError(
            f"correlators identify only {rank} of {basis.shape[1]} free invariant directions "
            f"for ({d_a}, {d_b}); the moment matrix is not recoverable"
        )
    lin = basis @ np.linalg.pinv(k, rcond=RANK_TOL)
    offset = x_p - lin @ (w0 + w @ x_p)
    return lin + np.outer(offset, np.ones(N_CLASSES)), rank


def build_bd(a, l_d):
    b_d = a @ l_d
    return b_d, float(np.linalg.norm(b_d, 2))


@dataclass(frozen=True, eq=False)
class InversionMaps:
    d_a: int
    d_b: int
    w: np.ndarray
    w0: np.ndarray
    l: np.ndarray
    a: np.ndarray
    b: np.ndarray
    b_d: np.ndarray
    op_norm: float
    rank: int
    oracle_residual: float
    builder_version: str = BUILDER_VERSION

    def to_json(self):
        out = {}
        for k, v in asdict(self).items():
            out[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return out

    @classmethod
    def from_json(cls, obj):
        arrays = {"w", "w0", "l", "a", "b", "b_d"}
        kw = {k: (np.asarray(v, dtype=float) if k in arrays else v) for k, v in obj.items()}
        return cls(**kw)

    def content_hash(self):
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def build_maps(d_a: int, d_b: int, n_states: int = 90, seed: int = 20240611) -> InversionMaps:
    w, w0, residual = build_w(d_a, d_b, n_states=n_states, seed=seed)
    l_d, rank = build_ld(w, w0, d_a, d_b)
    a, b = build_a_b(d_b)
    b_d, op_norm = build_bd(a, l_d)
    return InversionMaps(d_a, d_b, w, w0, l_d, a, b, b_d, op_norm, rank, residual)


# --------------------------------------------------------------------------
# cache

_memo: dict = {}
_memo_locks: dict = {}
_memo_guard = threading.Lock()


def cache_dir():
    env = os.environ.get("REDMOMENT_CACHE_DIR")
    return Path(env) if env else Path.home() / ".cache" / "redmoment"


def get_maps(d_a: int, d_b: int, use_disk: bool = True) -> InversionMaps:
    """Maps for (d_a, d_b), built at most once per process and cached on disk.

    The cache file carries a SHA-256 of its payload; a mismatching or
    outdated file is rebuilt.
    """
    key = (int(d_a), int(d_b))
    with _memo_guard:
        lock = _memo_locks.setdefault(key, threading.Lock())
    with lock:
        if key in _memo:
            return _memo[key]
        maps = _load_or_build(*key) if use_disk else build_maps(*key)
        _memo[key] = maps
        return maps


def _load_or_build(d_a, d_b):
    root = cache_dir()
    root.mkdir(parents=True, exist_ok=True)
    path = root / f"maps_{d_a}x{d_b}_v{BUILDER_VERSION}.json"
    with FileLock(str(path) + ".lock"):
        if path.exists():
            try:
                blob = json.loads(path.read_text())
                maps = InversionMaps.from_json(blob["maps"])
                if maps.content_hash() == blob["sha256"] and maps.builder_version == BUILDER_VERSION:
                    return maps
            except (json.JSONDecodeError, KeyError, TypeError):
                pass
        maps = build_maps(d_a, d_b)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps({"sha256": maps.content_hash(), "maps": maps.to_json()}))
        tmp.replace(path)
        return maps


# --------------------------------------------------------------------------
# estimation path


def reconstruct_invariants(y, maps: InversionMaps) -> InvariantVector:
    y = y.y if isinstance(y, CorrelatorVector) else np.asarray(y, dtype=float)
    return InvariantVector.from_array(maps.l @ y)


def estimated_mbar(y, maps: InversionMaps) -> MomentMatrix:
    y = y.y if isinstance(y, CorrelatorVector) else np.asarray(y, dtype=float)
    return MomentMatrix(smat(maps.b_d @ y + maps.b), MatrixKind.SYMMETRIZED, maps.d_b)


def estimate_witness(y, maps: InversionMaps, d_a=None, d_b=None) -> WitnessValue:
    """E4 and its normalized form from a correlator vector (exact or estimated)."""
    if (d_a is not None and d_a != maps.d_a) or (d_b is not None and d_b != maps.d_b):
        raise ParameterError(f"maps are for ({maps.d_a}, {maps.d_b}), data for ({d_a}, {d_b})")
    yv = y.y if isinstance(y, CorrelatorVector) else np.asarray(y, dtype=float)
    if yv.shape != (N_CLASSES,):
        raise ParameterError("correlator vector must have 10 entries")
    e4 = estimated_mbar(yv, maps).lambda_min()
    return WitnessValue(e4, e4 / maps.op_norm, verdict_for(e4))


def exact_mbar_svec(rho):
    return svec(build_mbar(compute_invariants(rho), rho.d_b).entries)
