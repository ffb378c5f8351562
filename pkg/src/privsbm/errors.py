"""Exceptions raised by privsbm."""


class PrivSbmError(Exception):
    """Base class for all privsbm errors."""


class ValidationError(PrivSbmError, ValueError):
    """An input violates a documented precondition."""


class CapacityError(PrivSbmError):
    """An exact computation would exceed its enumeration cap."""


class BalanceViolation(ValidationError):
    """A labeling is not β-balanced under the given parameters."""


class InvalidProbability(ValidationError):
    """An edge probability falls outside [0, 1]."""


class DimensionMismatch(ValidationError):
    """Two objects disagree on the number of vertices."""


class TiltUndefined(ValidationError):
    """The Chernoff tilt needs 0 < b < a < n."""


class InvalidParameter(ValidationError):
    """A model or mechanism parameter is out of range."""


class EmptyBalanceWindow(InvalidParameter):
    """The class-size window [n/(βK), βn/K] contains no integer."""


class TooFewPerClass(ValidationError):
    """The two-point construction needs at least two vertices per class."""


class ConfigError(ValidationError):
    """A configuration file is malformed or fails validation."""


class EnumerationTooLarge(CapacityError):
    """The candidate space exceeds the enumeration cap."""


class AuditTooLarge(CapacityError):
    """The graph space is too large for an exhaustive audit."""


class TooManyPairs(CapacityError):
    """Split plus merge pairs exceed the exact tail-probability cap."""


class EmptySigma(PrivSbmError):
    """The set of balanced labelings is empty."""


class VerificationFailure(PrivSbmError):
    """A privacy audit or lemma check failed."""
