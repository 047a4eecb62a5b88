"""Optimal order execution against a client reference strategy.

Almgren-Chriss price impact with execution risk, CARA utility on excess
P&L, closed-form zero-risk trajectories and a Monte Carlo harness.
"""
from .errors import (DegenerateError, DomainError, NonFiniteError, NonFiniteState,
                     OutOfRange, SingularSystem)
from .params import PRESETS, DerivedConstants, Mode, ModelParams, derive, preset, validate, validate_domain
from .refstrat import (Constant, EndpointsOnly, Linear, PiecewiseConstant, RefStrategy,
                       Tabulated, l2_distance_sq, piecewise_approx)

__version__ = "0.1.0"

__all__ = [
    "DegenerateError", "DomainError", "NonFiniteError", "NonFiniteState", "OutOfRange",
    "SingularSystem", "PRESETS", "DerivedConstants", "Mode", "ModelParams", "derive",
    "preset", "validate", "validate_domain", "Constant", "EndpointsOnly", "Linear", "PiecewiseConstant",
    "RefStrategy", "Tabulated", "l2_distance_sq", "piecewise_approx",
]
