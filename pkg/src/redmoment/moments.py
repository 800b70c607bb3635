"""Reduction-moment matrices, the witness E4 and benchmark thresholds."""
from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, UnavailableError
from .invariants import InvariantVector, compute_invariants
from .states import DensityMatrix, FamilyParams, make_state

DECISION_TOLERANCE = 1e-12


class MatrixKind(enum.Enum):
    RAW = "raw"
    PARTIAL_TRANSPOSED = "partial_transposed"
    SYMMETRIZED = "symmetrized"
    HOMOGENEOUS = "homogeneous"


class Verdict(enum.Enum):
    ENTANGLEMENT_CERTIFIED = "entanglement_certified"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True, eq=False)
class MomentMatrix:
    entries: np.ndarray
    kind: MatrixKind
    d_b: int

    def lambda_min(self):
        return float(np.linalg.eigvalsh(self.entries)[0])

    def eigenvalues(self):
        return np.linalg.eigvalsh(self.entries)


@dataclass(frozen=True)
class WitnessValue:
    e4: float
    e4_tilde: float | None
    verdict: Verdict


def _assemble(x: InvariantVector, corner: float, d_b: int) -> np.ndarray:
    c = d_b - 1.0
    upper = np.array([
        [c, c * x.x3, 1.0 - x.x1, x.x3 - x.x5],
        [0.0, c * x.x7, x.x3 - x.x4, x.x7 - x.x8],
        [0.0, 0.0, x.x1 - x.x2, x.x4 - x.x6],
        [0.0, 0.0, 0.0, corner],
    ])
    m = upper + np.triu(upper, 1).T
    m.flags.writeable = False
    return m


def build_mbar(x: InvariantVector, d_b: int) -> MomentMatrix:
    """The PT-symmetrized 4x4 matrix in the basis {I, rho_A x I, I x rho_B, rho}."""
    if d_b < 2:
        raise ParameterError("d_b must be >= 2")
    return MomentMatrix(_assemble(x, x.x8 - x.xS, d_b), MatrixKind.SYMMETRIZED, d_b)


def build_m_raw(x: InvariantVector, tr_rho3: float | None, d_b: int) -> MomentMatrix:
    """Unsymmetrized matrix; needs the non-measurable Tr(rho^3)."""
    if tr_rho3 is None:
        raise UnavailableError("Tr(rho^3) is not available on the protocol path")
    if d_b < 2:
        raise ParameterError("d_b must be >= 2")
    return MomentMatrix(_assemble(x, x.x8 - tr_rho3, d_b), MatrixKind.RAW, d_b)


def build_m_partial_transposed(x: InvariantVector, tr_pt3: float, d_b: int) -> MomentMatrix:
    return MomentMatrix(_assemble(x, x.x8 - tr_pt3, d_b), MatrixKind.PARTIAL_TRANSPOSED, d_b)


def homogeneous_block(m: MomentMatrix) -> MomentMatrix:
    if m.entries.shape != (4, 4):
        raise ParameterError("homogeneous block needs a 4x4 matrix")
    block = np.array(m.entries[1:, 1:])
    block.flags.writeable = False
    return MomentMatrix(block, MatrixKind.HOMOGENEOUS, m.d_b)


def verdict_for(e4, tol=DECISION_TOLERANCE):
    return Verdict.ENTANGLEMENT_CERTIFIED if e4 < -tol else Verdict.INCONCLUSIVE


def witness(rho: DensityMatrix, maps=None, tol=DECISION_TOLERANCE) -> WitnessValue:
    """Exact E4 = lambda_min(Mbar(rho)); normalized by ``maps.op_norm`` when given."""
    e4 = build_mbar(compute_invariants(rho), rho.d_b).lambda_min()
    e4_tilde = e4 / maps.op_norm if maps is not None else None
    return WitnessValue(e4, e4_tilde, verdict_for(e4, tol))


# --------------------------------------------------------------------------
# closed forms


def _check_d(d):
    if d < 2:
        raise ParameterError("d must be >= 2")


def mes_lambda_min(d: int) -> float:
    """lambda_min of Mbar for the maximally entangled state on d x d."""
    _check_d(d)
    s = 4 * d**4 + 4 * d**3 + 29 * d**2 + 6 * d + 41
    return (d - 1) * (2 * d**2 - d + 5 - math.sqrt(s)) / (4 * d**2)


def isotropic_threshold_3rd(d: int) -> float:
    _check_d(d)
    return (4 - d**2 + d * math.sqrt(d**2 + 8)) / (4 * (d + 1))


def purity_threshold(d: int) -> float:
    _check_d(d)
    return 1.0 / math.sqrt(d + 1)


def ppt_threshold(d: int) -> float:
    _check_d(d)
    return 1.0 / (d + 1)


def isotropic_psd_quadratic(d, p):
    """2(d+1)p^2 + (d^2-4)p - 2(d-1); Mbar of the isotropic state is PSD iff <= 0."""
    return 2 * (d + 1) * p**2 + (d**2 - 4) * p - 2 * (d - 1)


# --------------------------------------------------------------------------
# threshold scans


class Variant(enum.Enum):
    AFFINE4 = "affine4"
    HOMOGENEOUS3 = "homogeneous3"


def family_lambda_min(params: FamilyParams, variant=Variant.AFFINE4) -> float:
    rho = make_state(params)
    m = build_mbar(compute_invariants(rho), rho.d_b)
    if Variant(variant) is Variant.HOMOGENEOUS3:
        m = homogeneous_block(m)
    return m.lambda_min()


def threshold_scan(
    family: FamilyParams,
    variant=Variant.AFFINE4,
    tol=DECISION_TOLERANCE,
    grid=401,
    xtol=1e-9,
    max_iter=60,
    transform=None,
):
    """Smallest p in [0, 1] at which lambda_min of the chosen variant drops below -tol.

    ``family`` supplies everything but ``p``. A coarse grid locates the first
    negative point, then bisection refines the bracket. ``transform`` is an
    optional map applied to each state before evaluation (e.g. a subsystem
    swap). Returns ``None`` when no sign change exists in [0, 1].
    """
    if family.kind not in ("isotropic", "biased_two_qubit"):
        raise ParameterError(f"family {family.kind!r} has no sweep parameter")
    variant = Variant(variant)

    def lam(p):
        rho = make_state(dataclasses.replace(family, p=float(p)))
        if transform is not None:
            rho = transform(rho)
        m = build_mbar(compute_invariants(rho), rho.d_b)
        if variant is Variant.HOMOGENEOUS3:
            m = homogeneous_block(m)
        return m.lambda_min()

    ps = np.linspace(0.0, 1.0, grid)
    hit = None
    for k, p in enumerate(ps):
        if lam(p) < -tol:
            hit = k
            break
    if hit is None:
        return None
    if hit == 0:
        return 0.0
    lo, hi = ps[hit - 1], ps[hit]
    for _ in range(max_iter):
        if hi - lo <= xtol:
            break
        mid = 0.5 * (lo + hi)
        if lam(mid) < -tol:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)
