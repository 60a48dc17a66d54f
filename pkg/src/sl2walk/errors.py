"""Exception hierarchy shared by every module."""


class Sl2WalkError(Exception):
    """Base class for all package errors."""


class IdentityInput(Sl2WalkError):
    pass


class NonFinite(Sl2WalkError):
    pass


class Blowup(Sl2WalkError):
    pass


class EmptyRegion(Sl2WalkError):
    pass


class UnresolvedRadius(Sl2WalkError):
    pass


class Diverged(Sl2WalkError):
    pass


class Overflow(Sl2WalkError):
    pass


class ElementaryMeasure(Sl2WalkError):
    """Raised when an experiment needs a non-elementary measure."""


class Unstable(Sl2WalkError):
    """Boundary-map sample had not contracted after the allowed doublings."""


class NotConverged(Sl2WalkError):
    pass


class MomentViolation(Sl2WalkError):
    pass


class Underresolved(Sl2WalkError):
    pass


class ConfigError(Sl2WalkError):
    pass


class ExperimentError(Sl2WalkError):
    pass
