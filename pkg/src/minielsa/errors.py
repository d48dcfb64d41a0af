"""Exception hierarchy shared by all minielsa modules."""


class MiniElsaError(Exception):
    """Base class for every error raised by this package."""


class ArgumentError(MiniElsaError, ValueError):
    """An argument is outside its documented domain."""


class SchemaError(MiniElsaError):
    """Input file is missing a required column."""


class ParseError(MiniElsaError):
    """A cell could not be parsed; message carries the offending row."""


class EmptyDatasetError(MiniElsaError):
    """An operation that needs records received none."""


class SizeError(MiniElsaError):
    """Input has too few (or too many) rows for the operation."""


class DegenerateFeatureError(MiniElsaError):
    """A feature is constant where variation is required (e.g. scaling)."""


class FormatError(MiniElsaError):
    """Serialized blob has a bad magic, version, or layout."""


class DuplicateRecordError(MiniElsaError):
    """Record id already present in the store."""


class RecordNotFoundError(MiniElsaError):
    """Requested record id is not in the store."""


class AuthenticationError(MiniElsaError):
    """Ciphertext failed authentication (tampered or wrong key)."""


class PipelineStageError(MiniElsaError):
    """Wraps a module error with the pipeline stage it occurred in."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}': {cause}")
        self.stage = stage
        self.cause = cause
