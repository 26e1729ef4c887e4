"""Invariant curves of planar maps with a nilpotent parabolic fixed point.

Computes, verifies, refines and globalizes the one-dimensional stable and
unstable curves of maps ``(x, y) -> (x + c y + f1, y + f2)`` whose linear
part is a non-diagonalizable double-eigenvalue-1 block: truncated-jet
arithmetic, reduction to a simple normal form with a case trichotomy,
order-by-order polynomial parameterizations of the curve and its inner
dynamics, a contraction solve for the exact correction, and globalization
by map iteration.
"""

from .approx import Branch, Parameterization, ResidualReport, approximate, leading_pair
from .dynamics import (
    InvariantCurve,
    InverseMap,
    OrbitBoundParams,
    check_orbit_bounds,
    emit_curve,
    globalize,
    invert_F,
    iterate_R,
    orbit_sum,
    unstable_setup,
)
from .errors import (
    ContractionError,
    HypothesisError,
    NumericError,
    ParamfoldError,
    SpecFormatError,
)
from .jets import Jet1, Jet2, invert_in_y
from .model import (
    CaseTag,
    HypothesisReport,
    PlanarMapSpec,
    ReducedMap,
    check_hypotheses,
    classify,
    load_map_spec,
    reduce,
)
from .refine import (
    RefineConfig,
    RefineState,
    aposteriori_refine,
    apply_N,
    picard_solve,
    rescale_gamma,
)

__version__ = "0.1.0"

__all__ = [
    "Branch",
    "CaseTag",
    "ContractionError",
    "HypothesisError",
    "HypothesisReport",
    "InvariantCurve",
    "InverseMap",
    "Jet1",
    "Jet2",
    "NumericError",
    "OrbitBoundParams",
    "Parameterization",
    "ParamfoldError",
    "PlanarMapSpec",
    "ReducedMap",
    "RefineConfig",
    "RefineState",
    "ResidualReport",
    "SpecFormatError",
    "approximate",
    "aposteriori_refine",
    "apply_N",
    "check_hypotheses",
    "check_orbit_bounds",
    "classify",
    "emit_curve",
    "globalize",
    "invert_F",
    "invert_in_y",
    "iterate_R",
    "leading_pair",
    "load_map_spec",
    "orbit_sum",
    "picard_solve",
    "reduce",
    "rescale_gamma",
    "unstable_setup",
    "__version__",
]
