"""Exception taxonomy shared by the library, the service and the CLI.

Three families matter downstream: malformed input (exit code 1 / HTTP 400),
failed mathematical hypotheses (exit code 2 / HTTP 422) and numerical
failures such as Newton divergence or loss of contraction (exit code 3 /
HTTP 422 with a distinct kind).
"""

from __future__ import annotations


class ParamfoldError(Exception):
    """Base class for all library errors."""

    kind = "error"


class SpecFormatError(ParamfoldError, ValueError):
    """Malformed map-spec file or request payload."""

    kind = "spec-format"


class HypothesisError(ParamfoldError):
    """A mathematical hypothesis required by the requested operation fails."""

    kind = "hypothesis"

    def __init__(self, message: str, report: object | None = None):
        super().__init__(message)
        self.report = report


class NumericError(ParamfoldError):
    """Numerical procedure failed (divergence, singularity, budget)."""

    kind = "numeric"


class NewtonDivergenceError(NumericError):
    kind = "newton-divergence"


class OrbitSumError(NumericError):
    """Orbit-sum truncation budget exhausted before the tail bound met tol."""

    kind = "orbit-sum"

    def __init__(self, message: str, tail: float):
        super().__init__(message)
        self.tail = tail


class ContractionError(NumericError):
    """Picard iteration left the admissible ball or stopped contracting."""

    kind = "contraction"


class SingularStepError(NumericError):
    """Order-extension system degenerated where it should not (or vice versa)."""

    kind = "singular-step"


class CurveEmissionError(NumericError):
    """Globalization failed mid-sweep; carries the rows produced so far."""

    kind = "curve-emission"

    def __init__(self, message: str, rows: list | None = None):
        super().__init__(message)
        self.rows = rows or []
