"""Uniform sampling from convex bodies with the In-and-Out chain."""
from .errors import (DiagnosticsError, InOutError, ParameterError, ToleranceError,
                     UnsupportedOperation)
from .geometry import (Ball, Box, ConvexBody, CountingOracle, Ellipsoid, Polytope, Simplex,
                       parse_body)
from .sampler import InOutParams, make_rng, run_chain, run_with_restart
from .theory import per_iteration_schedule

__version__ = "0.1.0"

__all__ = [
    "Ball", "Box", "ConvexBody", "CountingOracle", "Ellipsoid", "Polytope", "Simplex",
    "parse_body", "InOutParams", "make_rng", "run_chain", "run_with_restart",
    "per_iteration_schedule", "InOutError", "ParameterError", "UnsupportedOperation",
    "DiagnosticsError", "ToleranceError",
]
