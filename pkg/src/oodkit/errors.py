"""Exception taxonomy. ValidationError subclasses map to CLI exit code 1."""


class ToolkitError(Exception):
    pass


class ValidationError(ToolkitError):
    """Bad inputs or configuration."""


class IdxFormatError(ValidationError):
    """Malformed IDX magic or header."""


class IdxLengthError(ValidationError):
    """IDX payload shorter or longer than the header requires."""


class IdxTypeError(ValidationError):
    """IDX element type other than unsigned byte (0x08)."""


class ConfigError(ValidationError):
    """Invalid run or split configuration (e.g. an empty split)."""


class ShapeError(ValidationError):
    """Image shape incompatible with the requested operation."""


class DomainError(ValidationError):
    """Argument outside its mathematical domain."""


class TrainingDivergenceError(ToolkitError):
    def __init__(self, epoch, message="non-finite training loss"):
        super().__init__(f"{message} at epoch {epoch}")
        self.epoch = epoch


class CacheError(ValidationError):
    pass


class CacheVersionError(CacheError):
    """Unsupported cache format string."""


class CacheParseError(CacheError):
    def __init__(self, line_number, message):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class CacheValueError(CacheError):
    """Non-finite or otherwise invalid log-likelihood value."""


class CacheJoinError(CacheError):
    """Caches disagree on dataset_id or model_id."""


class CacheCompletenessError(CacheError):
    """Required (sample, transform) entries are missing."""

    def __init__(self, missing):
        self.missing = list(missing)
        preview = ", ".join(f"({s}, {t})" for s, t in self.missing[:8])
        more = "" if len(self.missing) <= 8 else f" and {len(self.missing) - 8} more"
        super().__init__(f"missing {len(self.missing)} cache entries: {preview}{more}")


class CodecError(ToolkitError):
    """Compressor failed to encode or decode."""
