"""ISS certification and validation for 1-D hyperbolic boundary-control systems."""

from .certifier import (Certificate, FProfile, certify, check_boundary, check_interior,
                        compute_gains, integrate_f_system, max_iss_length, search_delta)
from . import errors  # noqa: F401
from .model import SpatialGrid, SystemSpec, build_system, sample_coefficients
from .planar import (PlanarParams, blowup_x1, check_planar, eta_closed_form, eta_numeric,
                     implication_experiment, kk_exists, strictness_witness, x5, x5_numeric)
from .report import ConditionReport
from .scaling import rho_inf, rho_two, scaled_inf_norm, scaled_two_norm
from .sim import (DisturbanceSpec, EnvelopeReport, Trajectory, c_norms, envelope_check,
                  fit_envelope, lyapunov_v, lyapunov_w, project_compatible, simulate)

__all__ = [
    "Certificate", "FProfile", "certify", "check_boundary", "check_interior", "compute_gains",
    "integrate_f_system", "max_iss_length", "search_delta",
    "SpatialGrid", "SystemSpec", "build_system", "sample_coefficients",
    "PlanarParams", "blowup_x1", "check_planar", "eta_closed_form", "eta_numeric",
    "implication_experiment", "kk_exists", "strictness_witness", "x5", "x5_numeric",
    "ConditionReport", "rho_inf", "rho_two", "scaled_inf_norm", "scaled_two_norm",
    "DisturbanceSpec", "EnvelopeReport", "Trajectory", "c_norms", "envelope_check",
    "fit_envelope", "lyapunov_v", "lyapunov_w", "project_compatible", "simulate",
]

__version__ = "0.1.0"
