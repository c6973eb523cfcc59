"""Exception hierarchy.

Every error raised by the package derives from :class:`SteerError`. The three
intermediate classes map onto CLI exit codes: validation problems (2),
I/O and backend failures (3) and broken internal invariants (4).
"""


class SteerError(Exception):
    exit_code = 4


class ValidationError(SteerError, ValueError):
    exit_code = 2


class SteerIOError(SteerError, OSError):
    exit_code = 3


class InvariantViolation(SteerError, AssertionError):
    exit_code = 4


# core-lm
class EmptyCorpus(ValidationError):
    pass


class InvalidTokenId(ValidationError):
    pass


class ContextOverflow(ValidationError):
    pass


class VocabularyMismatch(ValidationError):
    pass


class FormatVersionMismatch(SteerIOError):
    pass


class ModelFileError(SteerIOError):
    pass


# remote backends
class BackendError(SteerIOError):
    pass


class NetworkTimeout(BackendError):
    pass


class RetryExhausted(BackendError):
    pass


class ShapeMismatch(BackendError):
    pass


# guidance
class LengthMismatch(ValidationError):
    pass


class NonFiniteInput(ValidationError):
    pass


class GuidanceRangeError(ValidationError):
    pass


# decoding
class NonPositiveTemperature(ValidationError):
    pass


class InvalidK(ValidationError):
    pass


class InvalidP(ValidationError):
    pass


class AllMasked(ValidationError):
    pass


class MissingEmbeddings(ValidationError):
    pass


# embeddings
class EmptyText(ValidationError):
    pass


class DegenerateEmbedding(ValidationError):
    pass


class NonFiniteEmbedding(BackendError):
    pass


class EmptySet(ValidationError):
    pass


# metrics
class ZeroMeanVector(ValidationError):
    pass


class EmptyDataset(ValidationError):
    pass


class TooFewPoints(ValidationError):
    pass


class TooFewSamples(ValidationError):
    pass


class SingleClassTraining(ValidationError):
    pass


class EmptyHoldout(ValidationError):
    pass


# pipeline / cli
class MalformedRecord(ValidationError):
    def __init__(self, line, reason):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class BudgetExceeded(ValidationError):
    pass


class ConfigError(ValidationError):
    pass
