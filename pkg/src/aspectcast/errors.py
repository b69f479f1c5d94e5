"""Domain error types.

Every error raised by the package's public operations is one of these
classes, so callers can catch by contract rather than by message.
"""


class AspectCastError(Exception):
    """Base class for all package errors."""


# --- data ingestion / splitting ---

class MissingColumn(AspectCastError):
    pass


class NonMonotonicTimestamps(AspectCastError):
    pass


class EmptySeries(AspectCastError):
    pass


class FrequencyMismatch(AspectCastError):
    pass


class SeriesTooShort(AspectCastError):
    pass


# --- analysis ---

class EmptyInput(AspectCastError):
    pass


class ConstantSeries(AspectCastError):
    pass


class LagTooLarge(AspectCastError):
    pass


class TooShort(AspectCastError):
    pass


class PeriodTooLarge(AspectCastError):
    pass


class DegenerateGroups(AspectCastError):
    pass


# --- clustering ---

class TooFewWindows(AspectCastError):
    pass


class UnknownScale(AspectCastError):
    pass


class LengthMismatch(AspectCastError):
    pass


# --- prompts / tokenizer ---

class IndexMissing(AspectCastError):
    pass


class RemoteUnavailable(AspectCastError):
    pass


class TokenizerUnavailable(AspectCastError):
    pass


class MissingAnalyses(AspectCastError):
    pass


class PromptTooLong(AspectCastError):
    def __init__(self, part: str, count: int, limit: int):
        super().__init__(f"prompt part '{part}' is {count} tokens, over the {limit}-token limit")
        self.part = part
        self.count = count
        self.limit = limit


# --- model ---

class DimMismatch(AspectCastError):
    pass


class UnknownVariant(AspectCastError):
    pass


class RankTooLarge(AspectCastError):
    pass


class RecordingDisabled(AspectCastError):
    pass


# --- training / experiments ---

class NonFiniteLoss(AspectCastError):
    pass


class ShapeMismatch(AspectCastError):
    pass


class IoFailure(AspectCastError):
    pass


class ConfigError(AspectCastError):
    pass
