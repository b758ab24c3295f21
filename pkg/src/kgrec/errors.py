"""Exception types shared across the toolkit."""


class KgrecError(Exception):
    """Base class for all toolkit errors."""


class CsvParseError(KgrecError):
    """A malformed row in one of the input CSV files.

    Carries the 1-based line number of the offending row.
    """

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class DuplicateKeyError(KgrecError):
    """An identifier that must be unique appeared twice."""

    def __init__(self, key: str):
        self.key = key
        super().__init__(f"duplicate identifier {key!r}")


class EmptyInputError(KgrecError):
    """An operation received an input it cannot do anything with."""


class DimensionMismatchError(KgrecError):
    """Vector or matrix dimensions do not line up."""


class UnknownIdError(KgrecError):
    """An entity, relation, editor or item id is not known to a model."""


class DivergenceError(KgrecError):
    """Training produced a non-finite loss."""


class DependencyError(KgrecError):
    """A command needs an artifact that has not been produced yet."""


class StoreError(KgrecError):
    """Base class for persistence-format errors."""

    def __init__(self, path, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class BadMagicError(StoreError):
    """The file does not start with the expected magic bytes."""


class BadVersionError(StoreError):
    """The file carries an unsupported format version."""


class TruncatedPayloadError(StoreError):
    """The payload is shorter than the header promises."""


class SidecarMismatchError(StoreError):
    """The identifier sidecar disagrees with the binary header."""
