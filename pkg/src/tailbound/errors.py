class TailboundError(Exception):
    """Base class for library errors."""


class GeometryDomainError(TailboundError, ValueError):
    pass


class DegenerateAtomError(GeometryDomainError):
    pass


class InfeasibleError(TailboundError):
    pass


class CalibrationError(TailboundError, ValueError):
    """Raised with the failing calibration component named in the message."""
