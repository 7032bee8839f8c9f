"""Characteristic transport on moving domains and numerical checks of its
well-posedness estimates."""

__version__ = "0.1.0"

from .boxes import Box
from .cases import CaseSpec, case_ids, get_case, list_cases
from .characteristics import FlowCache, ODEConfig, flow_batch, flow_map, jacobian_det, trace
from .checks import BoundCheck
from .errors import (
    DivergenceError,
    EvaluationError,
    IIMError,
    InvalidInputError,
    NotFoundError,
    StepBudgetError,
)
from .evolution import EvolvedField, ScalarField, evolve_eval, make_bump, support_image
from .quadrature import build_reference, integrate, lp_norm, push, push_many
from .solution import SolutionField, invariant_drift, leibniz_check, pairing, solve_at
from .velocity_fields import FieldBounds, VelocityField, analytic_bounds, sampled_bounds

__all__ = [
    "Box", "BoundCheck", "CaseSpec", "DivergenceError", "EvaluationError", "EvolvedField",
    "FieldBounds", "FlowCache", "IIMError", "InvalidInputError", "NotFoundError", "ODEConfig",
    "ScalarField", "SolutionField", "StepBudgetError", "VelocityField", "analytic_bounds",
    "build_reference", "case_ids", "evolve_eval", "flow_batch", "flow_map", "get_case",
    "integrate", "invariant_drift", "jacobian_det", "leibniz_check", "list_cases", "lp_norm",
    "make_bump", "pairing", "push", "push_many", "sampled_bounds", "solve_at", "support_image",
    "trace",
]
