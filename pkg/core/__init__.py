from .errors import (
    BesselError, DomainError, QuadratureError, PrincipalValueError, CertificationError,
    HypothesisViolation, DenominatorDegeneracy, DivergenceDetected, ConfigError
)
from .measure_geometry import BesselParam, Interval, measure, p_range, commutator_p_range
from .step_functions import StepFunction
from .quadrature import QuadratureSpec, default_spec
from .kernels import riesz_kernel, estimate_regime_constants, KernelRegimeConstants
from .riesz_operators import (
    LipschitzSymbol, riesz_apply, riesz_adjoint_apply, commutator_apply, fractional_integral, lip_seminorm
)
from .atoms import Atom, AtomicDecomposition, TwoBumpFunction, validate_atom, decompose_two_bump, hp_norm_upper
from .factorization import (
    ConstantSchedule, FactorPair, FactorizationResult, select_schedule, pi_form, approximate_atom,
    weak_factorize, pairing_check
)
from .ledger_store import LedgerStore, get_store, RunStatus, ArtifactType

__all__ = [
    "BesselError", "DomainError", "QuadratureError", "PrincipalValueError", "CertificationError",
    "HypothesisViolation", "DenominatorDegeneracy", "DivergenceDetected", "ConfigError",
    "BesselParam", "Interval", "measure", "p_range", "commutator_p_range",
    "StepFunction", "QuadratureSpec", "default_spec",
    "riesz_kernel", "estimate_regime_constants", "KernelRegimeConstants",
    "LipschitzSymbol", "riesz_apply", "riesz_adjoint_apply", "commutator_apply", "fractional_integral",
    "lip_seminorm",
    "Atom", "AtomicDecomposition", "TwoBumpFunction", "validate_atom", "decompose_two_bump", "hp_norm_upper",
    "ConstantSchedule", "FactorPair", "FactorizationResult", "select_schedule", "pi_form", "approximate_atom",
    "weak_factorize", "pairing_check",
    "LedgerStore", "get_store", "RunStatus", "ArtifactType"
]
