"""Second- and third-order local-unitary invariants of a bipartite state."""
from __future__ import annotations

import csv
from dataclasses import astuple, dataclass, fields

import numpy as np

from .errors import ParameterError
from .states import DensityMatrix, partial_transpose

INVARIANT_NAMES = ("x1", "x2", "x3", "x4", "x5", "x6", "x7", "x8", "xS")


@dataclass(frozen=True)
class InvariantVector:
    """The measurable invariants plus, on the exact path, Tr(rho^3).

    x1 = Tr rho_B^2          x2 = Tr rho_B^3         x3 = Tr rho_A^2
    x4 = Tr[(rho_A x rho_B) rho]                      x5 = Tr rho^2
    x6 = Tr[rho_B Tr_A(rho^2)]  x7 = Tr rho_A^3       x8 = Tr[rho_A Tr_B(rho^2)]
    xS = (Tr rho^3 + Tr (rho^{T_A})^3) / 2

    ``tr_rho3`` is not accessible to local randomized measurements; it is
    ``None`` for invariants reconstructed from data.
    """

    x1: float
    x2: float
    x3: float
    x4: float
    x5: float
    x6: float
    x7: float
    x8: float
    xS: float
    tr_rho3: float | None = None

    def as_array(self):
        return np.array(astuple(self)[:9], dtype=float)

    @classmethod
    def from_array(cls, values, tr_rho3=None):
        values = np.asarray(values, dtype=float)
        if values.shape != (9,):
            raise ParameterError(f"expected 9 invariants, got shape {values.shape}")
        return cls(*map(float, values), tr_rho3=tr_rho3)


def _tr(m):
    return float(np.trace(m).real)


def compute_invariants(rho: DensityMatrix) -> InvariantVector:
    t = rho.tensor()
    rho_a = np.einsum("ikjk->ij", t)
    rho_b = np.einsum("kikj->ij", t)
    r = rho.data
    r2 = r @ r
    t2 = r2.reshape(t.shape)
    r2_a = np.einsum("ikjk->ij", t2)
    r2_b = np.einsum("kikj->ij", t2)
    pt = partial_transpose(rho).data
    tr_rho3 = _tr(r2 @ r)
    return InvariantVector(
        x1=_tr(rho_b @ rho_b),
        x2=_tr(rho_b @ rho_b @ rho_b),
        x3=_tr(rho_a @ rho_a),
        x4=_tr(np.kron(rho_a, rho_b) @ r),
        x5=_tr(r2),
        x6=_tr(rho_b @ r2_b),
        x7=_tr(rho_a @ rho_a @ rho_a),
        x8=_tr(rho_a @ r2_a),
        xS=0.5 * (tr_rho3 + _tr(pt @ pt @ pt)),
        tr_rho3=tr_rho3,
    )


def isotropic_invariants(d: int, p: float) -> InvariantVector:
    """Closed-form invariants of p |Phi_d><Phi_d| + (1 - p) I / d^2."""
    if d < 2:
        raise ParameterError("d must be >= 2")
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"p={p} outside [0, 1]")
    x5 = p**2 + (1.0 - p**2) / d**2
    q = 1.0 - p
    tr3 = (p + q / d**2) ** 3 + (d**2 - 1) * (q / d**2) ** 3
    xs = p**3 * (d**4 - 5 * d**2 + 4) / (2 * d**4) + 3 * p**2 * (d**2 - 1) / d**4 + 1.0 / d**4
    return InvariantVector(
        x1=1.0 / d, x2=1.0 / d**2, x3=1.0 / d, x4=1.0 / d**2, x5=x5,
        x6=x5 / d, x7=1.0 / d**2, x8=x5 / d, xS=xs, tr_rho3=tr3,
    )


def write_invariants_csv(rows, path, labels=None):
    """Write one row per InvariantVector with 17 significant digits."""
    names = [f.name for f in fields(InvariantVector)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow((["label"] if labels is not None else []) + names)
        for i, inv in enumerate(rows):
            vals = ["" if v is None else f"{v:.17g}" for v in astuple(inv)]
            w.writerow(([labels[i]] if labels is not None else []) + vals)
