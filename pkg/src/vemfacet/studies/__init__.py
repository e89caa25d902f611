"""Numerical studies over mesh families and their report writers."""

from .fields import FieldError, builtin_field, field_names, in_space, resolve_name
from .runner import (
    DEFAULT_LEVEL,
    GATE,
    KINDS,
    StudyConfig,
    StudyError,
    StudyReport,
    admissible,
    fit_slope,
    run_apriori,
    run_convergence,
    run_exactness,
    run_inverse_probe,
    run_stability,
    run_study,
)

__all__ = [
    "DEFAULT_LEVEL",
    "FieldError",
    "GATE",
    "KINDS",
    "StudyConfig",
    "StudyError",
    "StudyReport",
    "admissible",
    "builtin_field",
    "field_names",
    "fit_slope",
    "in_space",
    "resolve_name",
    "run_apriori",
    "run_convergence",
    "run_exactness",
    "run_inverse_probe",
    "run_stability",
    "run_study",
]
