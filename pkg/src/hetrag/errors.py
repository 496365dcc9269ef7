"""Exception hierarchy shared across the package."""


class HetragError(Exception):
    """Base class for every error raised by this package."""


class TransportError(HetragError):
    """A backend could not be reached or answered with an HTTP error."""


class EmptyCompletion(HetragError):
    """A chat backend returned blank text."""


class DimensionMismatch(HetragError):
    pass


class ScriptParseError(HetragError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class CorpusReadError(HetragError):
    pass


class DuplicateDocId(HetragError):
    pass


class InvalidChunkParams(ValueError, HetragError):
    pass


class ExtractionParseFailure(HetragError):
    def __init__(self, chunk_id: str, attempts: int):
        super().__init__(f"could not parse extraction for {chunk_id} after {attempts} attempts")
        self.chunk_id = chunk_id
        self.attempts = attempts


class DanglingReference(HetragError):
    pass


class IndexFormatError(HetragError):
    pass


class EmptyIndex(HetragError):
    pass


class DomainError(ValueError, HetragError):
    pass


class NoValidComparisons(HetragError):
    pass


class ConfigError(HetragError):
    pass
