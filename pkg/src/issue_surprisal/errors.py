"""Exception types shared across the package."""


class IssueSurprisalError(Exception):
    """Base class for all package-specific errors."""


class AuthFailure(IssueSurprisalError):
    """The API rejected the supplied credentials."""


class RateLimited(IssueSurprisalError):
    """The API asked us to back off; carries the retry-after duration."""

    def __init__(self, retry_after: float, message: str = ""):
        super().__init__(message or f"rate limited, retry after {retry_after:.0f}s")
        self.retry_after = retry_after


class NetworkError(IssueSurprisalError):
    """A transient transport failure; safe to retry."""


class SchemaError(IssueSurprisalError):
    """An archive record failed validation; names the offending location."""

    def __init__(self, message: str, filename: str = "", line: int = 0, field: str = ""):
        detail = message
        if filename:
            detail += f" ({filename}:{line}"
            if field:
                detail += f", field {field!r}"
            detail += ")"
        super().__init__(detail)
        self.filename = filename
        self.line = line
        self.field = field


class DomainError(IssueSurprisalError, ValueError):
    """A numeric argument fell outside its mathematical domain."""


class SupportError(IssueSurprisalError):
    """The reference distribution assigns zero probability to an observed symbol."""


class EmptyCorpus(IssueSurprisalError):
    """Training was requested on an empty corpus."""


class EmptyDocument(IssueSurprisalError):
    """Preprocessing or scoring produced/received a document with no tokens."""


class UnknownToken(IssueSurprisalError):
    """A scored token is missing from the model vocabulary (pipeline bug)."""

    def __init__(self, token: str):
        super().__init__(f"token {token!r} not in model vocabulary")
        self.token = token


class SampleSizeError(IssueSurprisalError):
    """A statistical test was invoked outside its supported sample-size range."""


class RankDeficient(IssueSurprisalError):
    """The design matrix has exactly collinear columns."""


class InsufficientRatings(IssueSurprisalError):
    """Fewer than two raters, or no overlap between ratings and the corpus sample."""
