"""Dynamic nuclear polarization of the NV-14N spin pair: forward model and estimators."""

__version__ = "0.1.0"

from .dissipator import Liouvillian, RateModel, assemble_liouvillian, build_jumps
from .estimation import (CperpEstimate, ExperimentTrace, ExpFit, calibrate_angle,
                         calibrate_field, chi2_scan, estimate_cperp, fit_exponential,
                         scan_cperp)
from .evolution import (DensityState, PolarizationTrace, apply_pi_swap, build_liouvillian,
                        dnp_sequence, populations, propagate, steady_state)
from .hamiltonian import (FieldConfig, SystemParams, build_hamiltonian, eslac_field,
                          ground_transition_frequencies, solve_cubic)
from .spin import BasisIndex, Manifold, basis_of, embed, flat_index, spin1_ops

__all__ = [
    "BasisIndex", "CperpEstimate", "DensityState", "ExpFit", "ExperimentTrace",
    "FieldConfig", "Liouvillian", "Manifold", "PolarizationTrace", "RateModel",
    "SystemParams", "apply_pi_swap", "assemble_liouvillian", "basis_of",
    "build_hamiltonian", "build_jumps", "build_liouvillian", "calibrate_angle",
    "calibrate_field", "chi2_scan", "dnp_sequence", "embed", "estimate_cperp",
    "eslac_field", "fit_exponential", "flat_index", "ground_transition_frequencies",
    "populations", "propagate", "scan_cperp", "solve_cubic", "spin1_ops", "steady_state",
]
