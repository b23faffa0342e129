"""Exception hierarchy shared by all modules."""


class LifiSimError(Exception):
    """Base class for simulator errors."""


class DomainError(LifiSimError, ValueError):
    """An argument lies outside its admissible range."""


class PlacementError(DomainError):
    """A body or terminal would not fit inside the room."""


class DegenerateGeometryError(DomainError):
    """Coincident transmitter and receiver, or similar."""


class ResourceError(LifiSimError):
    """A request would exceed a configured size limit."""


class IllConditionedSceneError(LifiSimError):
    """The radiosity system is singular or numerically unusable."""


class InterpolationRangeError(DomainError):
    """A requested frequency lies outside the channel grid."""


class NoSolutionError(LifiSimError):
    """A search could not bracket its target."""


class UndefinedRatioError(LifiSimError):
    """A ratio was requested with a zero denominator or a blocked link."""


class DesignError(LifiSimError):
    """A filter design system is singular."""


class InputError(DomainError):
    """Empty or otherwise unusable input data."""
