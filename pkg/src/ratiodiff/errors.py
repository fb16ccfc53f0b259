"""Exception hierarchy. Each family carries a distinct CLI exit code."""


class RatiodiffError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ConfigError(RatiodiffError):
    exit_code = 2


class CorpusError(RatiodiffError):
    exit_code = 3


class AllPixelsIgnored(CorpusError):
    """Raised when a label grid has no valid (non-ignore) pixels."""


class SchemaMismatch(CorpusError):
    """Raised when a grid's class count disagrees with the active schema."""


class MissingPair(CorpusError):
    """Raised when an image lacks a mask or vice versa."""


class SizeMismatch(CorpusError):
    """Raised when a paired image and mask have different spatial sizes."""


class BadMaskValue(CorpusError):
    """Raised when a stored mask contains a value outside 0..K."""


class PromptError(RatiodiffError):
    exit_code = 4


class NoDomainFound(PromptError):
    pass


class UnknownClassName(PromptError):
    pass


class DuplicateClass(PromptError):
    pass


class FractionOutOfRange(PromptError):
    pass


class FractionsExceedOne(PromptError):
    pass


class CheckpointError(RatiodiffError):
    exit_code = 5


class ModelError(RatiodiffError):
    exit_code = 6


class StepOutOfRange(ModelError):
    """Raised when a diffusion timestep falls outside the schedule."""


class DimensionMismatch(ModelError):
    pass


class ShapeMismatch(ModelError):
    pass


class NonFiniteLoss(ModelError):
    """Raised when training diverges; message carries the step index."""


class EnrichmentError(RatiodiffError):
    exit_code = 7


class EmptyDomainStats(EnrichmentError):
    pass


class BudgetExhausted(EnrichmentError):
    """Raised when the attempt budget runs out before target counts are met."""

    def __init__(self, message: str, acceptance_rate: float, rejection_histogram: dict):
        super().__init__(message)
        self.acceptance_rate = acceptance_rate
        self.rejection_histogram = rejection_histogram


class PipelineError(RatiodiffError):
    exit_code = 8

    def __init__(self, phase: str, message: str):
        super().__init__(f"phase '{phase}': {message}")
        self.phase = phase
