"""otiso: a verification laboratory for sharp higher-order isoperimetric
inequalities via optimal transport.

The package evaluates, at quadrature precision, both sides of the two
inequality chains relating the volume of a convex body to its total mean
curvature and total second-order curvature, together with every
intermediate identity the chains rest on: Newton-tensor algebra, the
square-root series with its truncation diagnostics, boundary field
splits, capped functionals, recursion and Codazzi identities, and a
semi-discrete optimal transport solver for domains without a closed-form
Brenier potential.
"""

from . import symfun, series, geometry, transport, verify

from .series import SeriesConfig, DEFAULT_CONFIG
from .geometry import (
    DomainSpec, QuadratureGrid, boundary_quadrature, InvalidDomainError,
    UnsupportedDomainError, unit_ball_volume,
)
from .transport import (
    Potential, DualWeights, closed_form_potential, semidiscrete_solve,
    potential_from_weights, SolverError,
)
from .verify import (
    CheckReport, check_af1, check_af2, boundary_fields, boundary_term,
    InvariantViolationError, report_to_json,
)

__version__ = "0.1.0"

__all__ = [
    "symfun", "series", "geometry", "transport", "verify",
    "SeriesConfig", "DEFAULT_CONFIG",
    "DomainSpec", "QuadratureGrid", "boundary_quadrature",
    "InvalidDomainError", "UnsupportedDomainError", "unit_ball_volume",
    "Potential", "DualWeights", "closed_form_potential",
    "semidiscrete_solve", "potential_from_weights", "SolverError",
    "CheckReport", "check_af1", "check_af2", "boundary_fields",
    "boundary_term", "InvariantViolationError", "report_to_json",
    "__version__",
]
