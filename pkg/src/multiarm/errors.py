"""Exception types shared across the package."""

from __future__ import annotations


class DimensionError(ValueError):
    """Array or alphabet sizes do not line up."""


class ValidationError(ValueError):
    """An argument violates a documented precondition."""


class ParseError(ValueError):
    """A score file or manifest could not be parsed.

    ``line`` is the 1-based line number in the source stream when known.
    """

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}:"
        if line is not None:
            where += f"line {line}: "
        elif where:
            where += " "
        super().__init__(where + message)


class ManifestError(ValueError):
    """A manifest is malformed or refers to attacks missing from a score table."""


class RecordNotFound(KeyError):
    """No (sample_id, source) record in a score table."""
