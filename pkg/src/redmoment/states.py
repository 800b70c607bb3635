"""Bipartite density matrices, partial operations and benchmark state families.

Basis ordering is fixed everywhere in the package: the joint index of
``|i_A, i_B>`` is ``i_A * d_B + i_B``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParameterError, ValidationError

ATOL = 1e-10
HERMITIAN_SPECTRUM_ATOL = 1e-8


def _freeze(arr):
    arr = np.array(arr, dtype=complex, copy=True)
    arr.flags.writeable = False
    return arr


def _check_square(data, dim):
    if data.ndim != 2 or data.shape != (dim, dim):
        raise ValidationError("bad_shape", f"expected shape {(dim, dim)}, got {data.shape}")


def _check_hermitian_unit_trace(data, atol=ATOL):
    if not np.all(np.isfinite(data)):
        raise ValidationError("not_finite")
    if np.max(np.abs(data - data.conj().T), initial=0.0) > atol:
        raise ValidationError("not_hermitian")
    if abs(np.trace(data) - 1.0) > atol:
        raise ValidationError("bad_trace", f"trace = {np.trace(data).real:.3e}")


def _check_psd(data, atol=ATOL):
    lam = np.linalg.eigvalsh(data)[0]
    if lam < -atol:
        raise ValidationError("not_psd", f"minimum eigenvalue {lam:.3e}")


@dataclass(frozen=True)
class DensityMatrix:
    """A bipartite operator on C^d_A (x) C^d_B.

    Validation checks Hermiticity, unit trace and (unless ``check_psd`` is
    false) positivity, all at 1e-10. Partially transposed operators are
    stored in this type with ``psd_checked=False``.
    """

    d_a: int
    d_b: int
    data: np.ndarray
    psd_checked: bool = field(default=True, compare=False)

    def __init__(self, d_a, d_b, data, check_psd=True):
        if int(d_a) < 1 or int(d_b) < 1:
            raise ValidationError("bad_dims", "local dimensions must be positive")
        data = _freeze(data)
        _check_square(data, int(d_a) * int(d_b))
        _check_hermitian_unit_trace(data)
        if check_psd:
            _check_psd(data)
        object.__setattr__(self, "d_a", int(d_a))
        object.__setattr__(self, "d_b", int(d_b))
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "psd_checked", bool(check_psd))

    @classmethod
    def _trusted(cls, d_a, d_b, data, psd=True):
        # analytic families: PSD by construction, skip the eigensolve
        obj = cls.__new__(cls)
        object.__setattr__(obj, "d_a", int(d_a))
        object.__setattr__(obj, "d_b", int(d_b))
        object.__setattr__(obj, "data", _freeze(data))
        object.__setattr__(obj, "psd_checked", psd)
        return obj

    @property
    def dim(self):
        return self.d_a * self.d_b

    def tensor(self):
        """View as a rank-4 tensor ``t[a, b, a', b']``."""
        return self.data.reshape(self.d_a, self.d_b, self.d_a, self.d_b)

    def __hash__(self):
        return hash((self.d_a, self.d_b, self.data.tobytes()))

    def __eq__(self, other):
        if not isinstance(other, DensityMatrix):
            return NotImplemented
        return (self.d_a, self.d_b) == (other.d_a, other.d_b) and np.array_equal(self.data, other.data)


@dataclass(frozen=True, eq=False)
class LocalState:
    dim: int
    data: np.ndarray

    def __init__(self, dim, data, check_psd=True):
        data = _freeze(data)
        _check_square(data, int(dim))
        _check_hermitian_unit_trace(data)
        if check_psd:
            _check_psd(data)
        object.__setattr__(self, "dim", int(dim))
        object.__setattr__(self, "data", data)


# --------------------------------------------------------------------------
# families

FAMILY_KINDS = ("max_entangled", "isotropic", "biased_two_qubit", "maximally_mixed", "product_pure", "custom")


@dataclass(frozen=True)
class FamilyParams:
    """Parameters of a named benchmark family.

    Only the fields relevant to ``kind`` are read:

    * ``max_entangled``: ``d``
    * ``isotropic``: ``d``, ``p``
    * ``biased_two_qubit``: ``x``, ``p`` (always 2 x 2)
    * ``maximally_mixed``: ``d_a``, ``d_b`` (``d_b`` defaults to ``d_a``)
    * ``product_pure``: ``d_a``, ``d_b``; the state ``|00>``
    * ``custom``: ``state`` holds an explicit :class:`DensityMatrix`
    """

    kind: str
    d: int = 2
    p: float = 1.0
    x: float = 0.5
    d_a: int = 2
    d_b: int | None = None
    state: DensityMatrix | None = None

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise ParameterError(f"unknown family {self.kind!r}")
        if self.kind in ("max_entangled", "isotropic") and int(self.d) < 2:
            raise ParameterError("d must be >= 2")
        if self.kind in ("isotropic", "biased_two_qubit") and not 0.0 <= self.p <= 1.0:
            raise ParameterError(f"p={self.p} outside [0, 1]")
        if self.kind == "biased_two_qubit" and not 0.0 <= self.x <= 1.0:
            raise ParameterError(f"x={self.x} outside [0, 1]")
        if self.kind in ("maximally_mixed", "product_pure"):
            if int(self.d_a) < 1 or (self.d_b is not None and int(self.d_b) < 1):
                raise ParameterError("local dimensions must be positive")
        if self.kind == "custom" and not isinstance(self.state, DensityMatrix):
            raise ParameterError("custom family needs an explicit state")

    @property
    def dims(self):
        if self.kind in ("max_entangled", "isotropic"):
            return int(self.d), int(self.d)
        if self.kind == "biased_two_qubit":
            return 2, 2
        if self.kind == "custom":
            return self.state.d_a, self.state.d_b
        return int(self.d_a), int(self.d_a if self.d_b is None else self.d_b)


def max_entangled_vector(d):
    """|Phi_d> = sum_j |jj> / sqrt(d)."""
    v = np.zeros(d * d, dtype=complex)
    v[np.arange(d) * (d + 1)] = 1.0 / np.sqrt(d)
    return v


def max_entangled_projector(d):
    """|Phi_d><Phi_d| with entries exactly 1/d (no rounding through 1/sqrt(d))."""
    diag = np.arange(d) * (d + 1)
    out = np.zeros((d * d, d * d), dtype=complex)
    out[np.ix_(diag, diag)] = 1.0 / d
    return out


def swap_operator(d):
    """The swap F|i,j> = |j,i> on C^d (x) C^d."""
    f = np.zeros((d * d, d * d))
    i, j = np.divmod(np.arange(d * d), d)
    f[j * d + i, i * d + j] = 1.0
    return f


def make_state(params: FamilyParams) -> DensityMatrix:
    kind = params.kind
    d_a, d_b = params.dims
    if kind == "custom":
        return params.state
    if kind == "max_entangled":
        return DensityMatrix._trusted(d_a, d_b, max_entangled_projector(d_a))
    if kind == "isotropic":
        d, p = d_a, float(params.p)
        rho = p * max_entangled_projector(d) + (1.0 - p) * np.eye(d * d) / d**2
        return DensityMatrix._trusted(d, d, rho)
    if kind == "biased_two_qubit":
        x, p = float(params.x), float(params.p)
        psi = np.zeros(4, dtype=complex)
        psi[1], psi[2] = np.sqrt(x), np.sqrt(1.0 - x)
        rho = p * np.outer(psi, psi.conj())
        rho[0, 0] += 1.0 - p
        return DensityMatrix._trusted(2, 2, rho)
    if kind == "maximally_mixed":
        n = d_a * d_b
        return DensityMatrix._trusted(d_a, d_b, np.eye(n) / n)
    # product_pure
    rho = np.zeros((d_a * d_b, d_a * d_b), dtype=complex)
    rho[0, 0] = 1.0
    return DensityMatrix._trusted(d_a, d_b, rho)


def max_entangled(d):
    return make_state(FamilyParams("max_entangled", d=d))


def isotropic(d, p):
    return make_state(FamilyParams("isotropic", d=d, p=p))


def biased_two_qubit(x, p):
    return make_state(FamilyParams("biased_two_qubit", x=x, p=p))


def maximally_mixed(d_a, d_b=None):
    return make_state(FamilyParams("maximally_mixed", d_a=d_a, d_b=d_b))


def product_pure(d_a=2, d_b=None):
    return make_state(FamilyParams("product_pure", d_a=d_a, d_b=d_b))


def product_state(rho_a, rho_b) -> DensityMatrix:
    rho_a, rho_b = np.asarray(rho_a), np.asarray(rho_b)
    return DensityMatrix(rho_a.shape[0], rho_b.shape[0], np.kron(rho_a, rho_b))


# --------------------------------------------------------------------------
# partial operations


def partial_trace(rho: DensityMatrix, over: str) -> LocalState:
    """Trace out subsystem ``over`` ("A" or "B") and return the other marginal."""
    t = rho.tensor()
    if over == "B":
        return LocalState(rho.d_a, np.einsum("ikjk->ij", t), check_psd=rho.psd_checked)
    if over == "A":
        return LocalState(rho.d_b, np.einsum("kikj->ij", t), check_psd=rho.psd_checked)
    raise ParameterError(f"over must be 'A' or 'B', got {over!r}")


def partial_transpose(rho: DensityMatrix) -> DensityMatrix:
    """Transpose the A indices. The result need not be PSD and is not checked."""
    t = rho.tensor().transpose(2, 1, 0, 3).reshape(rho.dim, rho.dim)
    return DensityMatrix._trusted(rho.d_a, rho.d_b, t, psd=False)


def swap_subsystems(rho: DensityMatrix) -> DensityMatrix:
    """Exchange the roles of A and B."""
    t = rho.tensor().transpose(1, 0, 3, 2).reshape(rho.dim, rho.dim)
    return DensityMatrix._trusted(rho.d_b, rho.d_a, t, psd=rho.psd_checked)


def spectrum(h) -> np.ndarray:
    """Ascending eigenvalues of a Hermitian matrix (array or DensityMatrix)."""
    if isinstance(h, (DensityMatrix, LocalState)):
        h = h.data
    h = np.asarray(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValidationError("bad_shape")
    if np.max(np.abs(h - h.conj().T), initial=0.0) > HERMITIAN_SPECTRUM_ATOL:
        raise ValidationError("not_hermitian")
    return np.linalg.eigvalsh(0.5 * (h + h.conj().T))


# --------------------------------------------------------------------------
# JSON I/O


def state_to_json(rho: DensityMatrix) -> dict:
    return {
        "d_a": rho.d_a,
        "d_b": rho.d_b,
        "re": rho.data.real.tolist(),
        "im": rho.data.imag.tolist(),
    }


def state_from_json(obj) -> DensityMatrix:
    """Parse the ``{"d_a", "d_b", "re", "im"}`` format, raising ValidationError."""
    if not isinstance(obj, dict):
        raise ValidationError("malformed", "state file must hold a JSON object")
    missing = [k for k in ("d_a", "d_b", "re") if k not in obj]
    if missing:
        raise ValidationError("missing_field", f"missing fields: {missing}")
    try:
        d_a, d_b = int(obj["d_a"]), int(obj["d_b"])
        re = np.asarray(obj["re"], dtype=float)
        im = np.asarray(obj.get("im", np.zeros_like(re)), dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError("malformed", str(exc)) from exc
    if re.shape != im.shape:
        raise ValidationError("bad_shape", "re and im shapes differ")
    return DensityMatrix(d_a, d_b, re + 1j * im)


def load_state(path) -> DensityMatrix:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError("malformed", f"invalid JSON: {exc}") from exc
    return state_from_json(obj)


def save_state(rho: DensityMatrix, path):
    Path(path).write_text(json.dumps(state_to_json(rho)))
