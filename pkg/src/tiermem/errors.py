"""Exception hierarchy shared by every stage of the pipeline."""


class TiermemError(Exception):
    """Base class for all errors raised by this package."""


class RangeError(TiermemError, ValueError):
    """A configuration or argument value is outside its allowed range."""

    def __init__(self, field: str, message: str | None = None):
        self.field = field
        super().__init__(message or f"{field} is out of range")


class EmptyInput(TiermemError, ValueError):
    pass


class ScorerError(TiermemError):
    """The token scorer rejected its input or failed."""


class EmbedderError(TiermemError):
    pass


class UnsupportedBackend(TiermemError):
    """The backend lacks a capability the caller needs (e.g. log-probabilities)."""


class NonConvergence(TiermemError):
    pass


class BackendError(TiermemError):
    """A model backend call failed."""


class AuthError(BackendError):
    pass


class RateLimited(BackendError):
    pass


class MalformedResponse(BackendError):
    pass


class DuplicateId(TiermemError, KeyError):
    pass


class EmptyStore(TiermemError):
    pass


class ParseError(TiermemError):
    def __init__(self, message: str, index: int | None = None):
        self.index = index
        if index is not None:
            message = f"instance {index}: {message}"
        super().__init__(message)


class UnparseableVerdict(TiermemError):
    pass
