"""Gravity models of co-affiliation intensity."""

from coaff.gravity.design import CROSS_TYPE, SAME_TYPE, Design, DesignRow, build_design
from coaff.gravity.fit import (
    CountFit,
    FitOptions,
    SeparationWarning,
    ZinbFit,
    fit_gravity,
    fit_negbin,
    fit_poisson,
    fit_zinb,
    information_criteria,
    predicted_zero_share,
    robust_covariance,
)
from coaff.gravity.likelihood import NumericalError, poisson_loglik, zinb_derivs, zinb_loglik

__all__ = [
    "CROSS_TYPE",
    "CountFit",
    "Design",
    "DesignRow",
    "FitOptions",
    "NumericalError",
    "SAME_TYPE",
    "SeparationWarning",
    "ZinbFit",
    "build_design",
    "fit_gravity",
    "fit_negbin",
    "fit_poisson",
    "fit_zinb",
    "information_criteria",
    "poisson_loglik",
    "predicted_zero_share",
    "robust_covariance",
    "zinb_derivs",
    "zinb_loglik",
]
