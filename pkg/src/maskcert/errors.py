"""Exception types shared across the engine.

The CLI maps these onto exit codes: validation problems -> 1, data problems
-> 2, bridge problems -> 3.
"""


class MaskcertError(Exception):
    """Base class for all engine errors."""


class ValidationError(MaskcertError):
    """Bad parameters or preconditions violated by the caller."""


class EmptyText(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class IndexOutOfRange(ValidationError):
    pass


class InvalidParams(ValidationError):
    pass


class TooLarge(ValidationError):
    """An enumeration would exceed its cap; carries the offending count."""

    def __init__(self, count, cap):
        super().__init__(f"enumeration size {count} exceeds cap {cap}")
        self.count = count
        self.cap = cap


class EmptyDataset(ValidationError):
    pass


class ShortRanking(ValidationError):
    pass


class MixedK(ValidationError):
    pass


class EmptyMetricInput(ValidationError):
    pass


class BudgetTooLarge(ValidationError):
    pass


class DataError(MaskcertError):
    """Problems in ingested files."""


class ParseError(DataError):
    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


class SentinelCollision(DataError):
    """Input text contains the reserved [MASK] token."""


class BridgeFailure(MaskcertError):
    """External scorer bridge failure."""


class BridgeTimeout(BridgeFailure):
    pass


class BridgeMalformed(BridgeFailure):
    pass


class BridgeRemoteError(BridgeFailure):
    pass


class RangeViolation(BridgeFailure):
    """Bridge returned a score outside [0, 1]."""
