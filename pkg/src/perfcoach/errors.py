"""Exception types shared across the package."""


class PerfCoachError(Exception):
    """Base class for all perfcoach errors."""


class InvalidAudio(PerfCoachError):
    """Audio payload is empty, undecodable, or violates a frontend precondition."""


class InvalidConfig(PerfCoachError):
    """Configuration or shape contract violated (widths, divisibility, ...)."""


class InvalidInput(PerfCoachError):
    """Operation input outside its domain (empty text, empty response, ...)."""


class InvalidBatch(PerfCoachError):
    """Batch does not satisfy the loss preconditions (size, emptiness)."""


class SchemaError(PerfCoachError):
    """A dataset record violates its manifest schema (unknown label, bad scale)."""


class StageOrderError(PerfCoachError):
    """Training stage started without its required upstream checkpoint."""


class ChecksumError(PerfCoachError):
    """Checkpoint file is truncated or its payload digest does not match."""


class AdapterError(PerfCoachError):
    """A pluggable adapter (inference, sentiment, embedding) failed or
    returned malformed output.

    ``attempts`` carries the transcript of model attempts made before the
    failure, when the caller was an evaluation retry loop.
    """

    def __init__(self, message, attempts=None):
        super().__init__(message)
        self.attempts = list(attempts) if attempts else []


class EmptyEvaluation(PerfCoachError):
    """Evaluation requested over an empty corpus or outcome list."""


class ValidationError(PerfCoachError):
    """A study submission is out of range or incomplete."""


class ConflictError(PerfCoachError):
    """Duplicate study submission for the same (participant, item)."""


class AuthError(PerfCoachError):
    """Unknown participant token."""
