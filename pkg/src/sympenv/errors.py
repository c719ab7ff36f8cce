"""Exception types shared across the package.

The CLI maps these onto process exit codes, so user-facing failure modes
(unstable lattice, envelope singularity, malformed input) each get their
own class.
"""


class SympenvError(Exception):
    """Base class for all package errors."""


class SymplecticError(SympenvError, ValueError):
    """Input matrix fails the symplecticity test at the working tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class UnstableMatrixError(SympenvError, ValueError):
    """Operation requires a stable matrix/lattice but the input is not.

    Carries the :class:`~sympenv.symplectic.StabilityReport` that triggered
    the rejection in ``report``.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class KreinDegenerateError(SympenvError, ValueError):
    """A unit-circle eigenvector has vanishing signature amplitude.

    This is the numerical shadow of a defective (non-diagonalizable)
    eigenvalue on the unit circle: no signature-orthonormal eigenbasis
    exists there, so the normal-form construction must stop.
    """


class EnvelopeSingularityError(SympenvError, RuntimeError):
    """The envelope matrix lost invertibility during integration."""

    def __init__(self, message, t_lo=None, t_hi=None):
        super().__init__(message)
        self.t_lo = t_lo
        self.t_hi = t_hi


class IntegrationError(SympenvError, RuntimeError):
    """Numerical integration failed a consistency check (step underflow,
    symplectic drift beyond the accepted multiple of the tolerance, ...)."""


class LatticeFormatError(SympenvError, ValueError):
    """Lattice configuration or matrix file failed to parse or validate."""
