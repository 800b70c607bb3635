"""Third-order reduction-moment entanglement witness from local randomized measurements."""

__version__ = "0.1.0"

from .certification import CertificationPlan, CertificationResult, certify, covariance_report, plan
from .invariants import InvariantVector, compute_invariants, isotropic_invariants
from .inversion import InversionMaps, build_maps, estimate_witness, get_maps
from .moments import (
    MomentMatrix,
    WitnessValue,
    build_m_raw,
    build_mbar,
    homogeneous_block,
    isotropic_threshold_3rd,
    mes_lambda_min,
    ppt_threshold,
    purity_threshold,
    threshold_scan,
    witness,
)
from .protocol import (
    CorrelatorVector,
    PatternClass,
    ProtocolConfig,
    UnitarySetting,
    classify_triple,
    estimate_setting,
    expected_correlators,
    outcome_distribution,
    run_protocol,
    sample_haar_unitary,
)
from .states import (
    DensityMatrix,
    FamilyParams,
    LocalState,
    make_state,
    partial_trace,
    partial_transpose,
    spectrum,
)
