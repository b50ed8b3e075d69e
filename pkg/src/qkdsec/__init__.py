"""Key-rate calculus, GF(2) hashing and exact small-instance simulation for BB84 security."""

from .gf2 import BitVector, CandidateSet, VectorSet, dot, dual_set, hash_recover, random_li_set, rank
from .rates import (
    RateResult,
    binary_entropy,
    key_gain_basis_dependent,
    key_gain_basis_independent,
    key_gain_sp,
    phase_error_bound_m1,
    phase_error_bound_m2,
    positive_gain_threshold,
    reconciliation_cost,
    secrecy_bound,
)

__version__ = "0.1.0"
