"""Shared error hierarchy.

Two families matter to callers: validation errors (bad parameters,
empty admissible windows, violated preconditions) and numerical errors
(quadrature or iteration failures, detected divergence).  The command
line harness maps the former to exit code 2 and the latter to exit
code 3.
"""

from __future__ import annotations


class FracpError(Exception):
    """Base class for all package errors."""


class ValidationError(FracpError):
    """Inputs outside the admissible parameter ranges (exit code 2)."""


class NumericalError(FracpError):
    """A numerical procedure failed or detected divergence (exit code 3)."""


class InvalidRegime(ValidationError):
    """The (n, p, s) triple lies outside the regime s*p/(p-1) > 1."""


class OutOfRange(ValidationError):
    """A scalar argument lies outside its admissible window."""


class EmptyWindow(ValidationError):
    """An admissible window for a derived exponent is empty."""


class PreconditionViolated(ValidationError):
    """An inequality's hypotheses are not satisfied by the inputs."""


class CoincidenceViolated(ValidationError):
    """Two functions required to agree outside a ball do not."""


class CoefficientViolation(ValidationError):
    """A kernel coefficient violates its bounds, symmetry, or oscillation."""


class ConfigError(ValidationError):
    """An experiment configuration file is malformed or inconsistent."""


class NonConvergence(NumericalError):
    """An iterative procedure exhausted its budget before converging."""

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


class SingularArgument(NumericalError):
    """An evaluation point coincides with a non-integrable singularity."""


class DivergentSeminorm(NumericalError):
    """A seminorm double integral fails to stabilize under refinement."""


class DivergentTail(NumericalError):
    """A tail integral diverges for the supplied exterior behavior."""


class DegenerateFit(NumericalError):
    """A log-log slope fit has no well-posed answer for the given data."""
