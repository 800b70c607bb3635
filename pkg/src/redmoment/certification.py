"""Finite-sample certification of the normalized witness.

The chain used here: |E - E_hat| <= ||M - M_hat||_F <= ||y - y_hat||_2 for
the op-norm-normalized quantities, and Chebyshev on ||y - y_hat||_2 with
Tr Cov(y_hat) <= (10 / (4 N_U)) (1/C(N_S, 3) + 1). At N_S = 3 this gives
Pr(|E_hat - E| > eps) <= 15 / (N_tot eps^2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import InsufficientBudgetError, ParameterError
from .inversion import InversionMaps, estimate_witness
from .protocol import CorrelatorVector

CHEBYSHEV_CONSTANT = 15
SHOTS_PER_SETTING = 3


def _exact(v):
    # treat a float as the decimal it prints as, so 0.1 means 1/10
    return Fraction(repr(float(v)))


@dataclass(frozen=True)
class CertificationPlan:
    epsilon: float
    delta: float
    n_tot: int
    n_u: int
    n_s: int = SHOTS_PER_SETTING


def plan(epsilon: float, delta: float) -> CertificationPlan:
    """Smallest budget with 15 / (N_tot eps^2) <= delta, at three shots per setting."""
    if not epsilon > 0:
        raise ParameterError(f"epsilon={epsilon} must be positive")
    if not 0 < delta < 1:
        raise ParameterError(f"delta={delta} must lie in (0, 1)")
    n_tot = math.ceil(CHEBYSHEV_CONSTANT / (_exact(delta) * _exact(epsilon) ** 2))
    n_u = math.ceil(n_tot / SHOTS_PER_SETTING)
    return CertificationPlan(float(epsilon), float(delta), n_tot, n_u)


def covariance_bound(n_u: int, n_s: int) -> float:
    return 10.0 / (4.0 * n_u) * (1.0 / math.comb(n_s, 3) + 1.0)


def achieved_delta(n_u: int, n_s: int, epsilon: float) -> float:
    """Chebyshev failure probability actually guaranteed by a budget."""
    return covariance_bound(n_u, n_s) / epsilon**2


@dataclass(frozen=True)
class CovarianceReport:
    n_u: int
    n_s: int
    trace_cov: float
    bound: float

    @property
    def ratio(self):
        return self.trace_cov / self.bound


def covariance_report(per_setting, n_s: int) -> CovarianceReport:
    """Empirical Tr Cov of the global estimator from per-setting vectors.

    Per-setting estimates are i.i.d., so Cov(mean) = Cov(single) / N_U.
    """
    arr = np.asarray(per_setting, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 2:
        raise ParameterError("need at least two settings to estimate a covariance")
    n_u = arr.shape[0]
    trace = float(np.var(arr, axis=0, ddof=1).sum()) / n_u
    return CovarianceReport(n_u, n_s, trace, covariance_bound(n_u, n_s))


@dataclass(frozen=True)
class CertificationResult:
    e4_tilde_hat: float
    epsilon: float
    delta: float
    delta_achieved: float
    n_tot: int
    certified: bool

    @property
    def margin(self):
        return -self.e4_tilde_hat - self.epsilon

    def to_json(self):
        return {
            "e4_tilde_hat": self.e4_tilde_hat,
            "epsilon": self.epsilon,
            "delta_requested": self.delta,
            "delta_achieved": self.delta_achieved,
            "n_tot": self.n_tot,
            "certified": self.certified,
            "margin": self.margin,
        }


def certify(y_hat: CorrelatorVector, maps: InversionMaps, cert_plan: CertificationPlan):
    """Certify entanglement iff the whole eps-interval around E_hat lies below 0.

    The budget is read from ``y_hat`` (N_U settings of N_S shots); a budget
    below the plan is refused.
    """
    n_tot = y_hat.n_u * y_hat.n_s
    if n_tot < cert_plan.n_tot:
        raise InsufficientBudgetError(cert_plan.n_tot, n_tot)
    e_hat = estimate_witness(y_hat, maps).e4_tilde
    return CertificationResult(
        e4_tilde_hat=float(e_hat),
        epsilon=cert_plan.epsilon,
        delta=cert_plan.delta,
        delta_achieved=achieved_delta(y_hat.n_u, y_hat.n_s, cert_plan.epsilon),
        n_tot=int(n_tot),
        certified=bool(e_hat + cert_plan.epsilon < 0),
    )
