class RelnbError(Exception):
    """Base class for errors raised by this package."""


class DataError(RelnbError, ValueError):
    """Input data violates the relational schema or cannot be parsed."""


class ParameterError(RelnbError, ValueError):
    """A parameter lies outside an operation's preconditions."""


class ModelFormatError(RelnbError):
    """A persisted model file is truncated, corrupt or of another version."""
