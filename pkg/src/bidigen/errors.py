"""Exception types raised across the package."""


class BidigenError(Exception):
    """Base class for all package errors."""


class LengthError(BidigenError, ValueError):
    """A sequence does not fit the model or the requested slots."""


class VocabularyError(BidigenError, ValueError):
    """A token id is outside the vocabulary."""


class ShapeError(BidigenError, ValueError):
    pass


class DataError(BidigenError, ValueError):
    """Empty or malformed input data."""


class ParseError(DataError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UsageError(BidigenError, ValueError):
    """An operation was called with arguments it does not support."""


class CheckpointError(BidigenError, IOError):
    pass


class RangeError(BidigenError, IndexError):
    """An index (layer, head, step) is out of range."""
