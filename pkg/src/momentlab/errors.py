"""Exception types shared across the package."""


class MomentLabError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(MomentLabError):
    """Operands live on spaces of different (or unsupported) dimension."""


class DegreeError(MomentLabError):
    """Form degree out of range for the requested operation."""


class DegenerateVolumeError(MomentLabError):
    """A top-degree coefficient required to be a volume form is (near) zero."""


class NotKahlerError(MomentLabError):
    """A metric field lost positivity.  Carries the worst offending node."""

    def __init__(self, message, node=None, value=None):
        super().__init__(message)
        self.node = node
        self.value = value


class NotInConeError(MomentLabError):
    """A mixed-volume / calibration positivity condition fails somewhere."""

    def __init__(self, message, node=None, value=None):
        super().__init__(message)
        self.node = node
        self.value = value


class FlowBlowupError(MomentLabError):
    """A flow map degenerated (non-positive Jacobian determinant)."""


class InterpolationError(MomentLabError):
    """Grid interpolation failed its accuracy contract."""


class GaugeError(MomentLabError):
    """An input violated the mean-zero (Lie algebra) normalization."""


class NotHolomorphicError(MomentLabError):
    """A Hamiltonian potential does not generate a holomorphic field."""


class PathTypeError(MomentLabError):
    """A path-type-restricted operation received the wrong path tag."""


class GaugeNotFixedError(MomentLabError):
    """The linearization is singular along an automorphism direction."""


class StallError(MomentLabError):
    """Line search underflowed without producing an acceptable step."""


class DivergedError(MomentLabError):
    """Iteration budget exhausted without reaching tolerance."""


class UsageError(MomentLabError):
    """Malformed configuration or command line.  CLI exit code 2."""
