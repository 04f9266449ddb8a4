"""Exception hierarchy shared by all kinegraph modules."""

from __future__ import annotations


class KinegraphError(Exception):
    """Base class for all errors raised by this package."""


# --- parsing / serialization ---------------------------------------------


class MalformedLine(KinegraphError):
    def __init__(self, line_no: int, expected: str, got: str = ""):
        self.line_no = line_no
        self.expected = expected
        self.got = got
        super().__init__(f"line {line_no}: expected {expected}" + (f", got {got!r}" if got else ""))


class JointCountMismatch(KinegraphError):
    pass


class EmptyFile(KinegraphError):
    pass


class SchemaViolation(KinegraphError):
    def __init__(self, path: str, message: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if message else path)


# --- numeric contracts -----------------------------------------------------


class DimensionMismatch(KinegraphError):
    pass


class ShapeMismatch(KinegraphError):
    pass


class ZeroVector(KinegraphError):
    pass


class SameJoint(KinegraphError):
    pass


class EmptySampleSet(KinegraphError):
    pass


class InconsistentJointCount(KinegraphError):
    pass


class TooLarge(KinegraphError):
    pass


class NotSymmetric(KinegraphError):
    pass


class SpectrumOutOfRange(KinegraphError):
    pass


class DomainError(KinegraphError):
    pass


class ZeroDegree(KinegraphError):
    pass


class TooShort(KinegraphError):
    pass


class BudgetExceeded(KinegraphError):
    pass


class UnknownCommand(KinegraphError):
    pass
