"""Exception hierarchy shared by all modules."""


class TreAssureError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(TreAssureError, ValueError):
    pass


class SerializationError(TreAssureError, ValueError):
    pass


class MalformedKeyError(TreAssureError, KeyError):
    """Key material cannot be used by the configured signature scheme."""


class VerifyError(TreAssureError):
    """Verification was requested for an envelope that carries no signature."""


class ThetaMismatch(TreAssureError, ValueError):
    pass


class Infeasible(TreAssureError):
    """Non-positive net margin, or no feasible plan/parameter choice."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class DeadlineBelowFloor(TreAssureError, ValueError):
    pass


class EmptyPath(TreAssureError, ValueError):
    pass


class NoCommonTheta(TreAssureError):
    pass


class NoPath(TreAssureError):
    pass


class LocalInfeasible(Infeasible):
    def __init__(self, domain_id, message=None):
        super().__init__(message or f"domain {domain_id!r} cannot meet its assignment within capacity")
        self.domain_id = domain_id


class Unstable(TreAssureError, ValueError):
    pass


class EmptySample(TreAssureError, ValueError):
    pass


class InsufficientTail(TreAssureError, ValueError):
    pass


class FitError(TreAssureError):
    pass


class BelowThreshold(TreAssureError, ValueError):
    pass


class NoUpdateNeeded(TreAssureError):
    """The audit does not exceed the contract; carries the unchanged envelope."""

    def __init__(self, tre):
        super().__init__("audited tail probability does not exceed the contract bound")
        self.tre = tre


class DegenerateAttribution(TreAssureError, ValueError):
    pass
