"""Exception hierarchy.

Everything raised on bad input derives from :class:`ValidationError`, so
callers (the CLI in particular) can map a whole family onto one exit code.
"""


class ScamTraceError(Exception):
    """Base class for all package errors."""


class ValidationError(ScamTraceError, ValueError):
    """Input data or parameters violate a documented precondition."""


class MalformedRecord(ValidationError):
    pass


class InvalidEmail(ValidationError):
    pass


class MalformedIp(ValidationError):
    pass


class EmptyCorpus(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class TooFewPoints(ValidationError):
    pass


class DegenerateDistances(ValidationError):
    """The k-distance curve selects a zero radius, which DBSCAN cannot use."""


class EmptyInput(ValidationError):
    pass


class MissingPrice(ValidationError):
    pass


class EmptyWindow(ValidationError):
    pass


class NoIncludedPayments(ValidationError):
    pass


class InvalidConfig(ValidationError):
    pass
