"""Exception types shared across the package.

Exit-code mapping used by the CLI: ParseError -> 2, InfeasibleQueryError -> 3,
anything else -> 1.
"""


class AfflabelError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(AfflabelError):
    """A file failed to parse. Carries the byte offset where parsing stopped."""

    def __init__(self, message: str, *, path=None, offset: int | None = None):
        self.path = path
        self.offset = offset
        parts = [message]
        if path is not None:
            parts.append(f"file={path}")
        if offset is not None:
            parts.append(f"byte_offset={offset}")
        super().__init__(" | ".join(parts))


class ConfigError(AfflabelError):
    """Invalid configuration or inconsistent inputs (shape/descriptor mismatches)."""


class DegenerateFitError(AfflabelError):
    """A mixture fit encountered non-finite inputs or an unrecoverable state."""


class InfeasibleQueryError(AfflabelError):
    """A theory query cannot be satisfied (e.g. requested confidence unreachable).

    ``best_bound`` carries the largest bound achieved before giving up, when
    one was computed.
    """

    def __init__(self, message: str, *, best_bound: float | None = None):
        self.best_bound = best_bound
        super().__init__(message)


class StageError(AfflabelError):
    """Wraps an error from a pipeline stage with stage attribution."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
