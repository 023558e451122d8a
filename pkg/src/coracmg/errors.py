"""Exception hierarchy shared across the toolkit."""


class CoracmgError(Exception):
    """Base class for all toolkit errors."""


class MalformedDiff(CoracmgError):
    """A unified diff could not be parsed; carries the byte offset of the bad hunk header."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class RepoNotFound(CoracmgError):
    pass


class BranchNotFound(CoracmgError):
    pass


class EmptyCorpus(CoracmgError):
    pass


class CorpusTooSmall(CoracmgError):
    pass


class UnknownDocument(CoracmgError):
    pass


class DimensionMismatch(CoracmgError):
    pass


class EmptyScope(CoracmgError):
    """No admissible retrieval candidates remain in the scoped partition."""


class ProviderUnavailable(CoracmgError):
    """A model provider kept failing after the configured retries."""


class EmptyGeneration(CoracmgError):
    """Post-processing of a provider response yielded no usable text."""


class EmptyQuery(CoracmgError):
    pass


class TooManyExamples(CoracmgError):
    pass


class ManifestMismatch(CoracmgError):
    """Experiment results being combined were not produced from the same subset."""
