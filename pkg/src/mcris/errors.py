"""Exception types shared across the package."""


class McrisError(Exception):
    """Base class for all package-specific errors."""


class InstabilityError(McrisError):
    """The active surface feeds back on itself with loop gain at or above unity.

    Carries the offending spectral radius so callers can report how far past
    the stability boundary the configuration sits.
    """

    def __init__(self, spectral_radius, message=None):
        self.spectral_radius = float(spectral_radius)
        if message is None:
            message = (
                f"unstable reflection/coupling loop: spectral radius "
                f"{self.spectral_radius:.6g} >= 1"
            )
        super().__init__(message)


class SingularMatrixError(McrisError, ValueError):
    """A named matrix required to be invertible is singular (or numerically so)."""

    def __init__(self, name, message=None):
        self.name = name
        super().__init__(message or f"singular matrix: {name}")


class InfeasibleError(McrisError):
    """No point satisfies the requested constraint set."""


class TouchstoneError(McrisError, ValueError):
    """Malformed Touchstone file. Carries the offending line number when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
