"""Exception hierarchy shared across the toolkit.

Fatal configuration problems raise; per-row and per-person problems are
collected by the callers so one bad record never aborts a whole batch.
"""

from __future__ import annotations


class LifebookError(Exception):
    """Base class for every error raised by this package."""


# --- domain model ---------------------------------------------------------

class InvalidDateError(LifebookError):
    """A year/month/day triple that is not a real calendar date."""


class StartAfterEndError(LifebookError):
    """Spell interval with start > end; a data-corruption signal."""


class SelfCoMemberError(LifebookError):
    """A spell whose co-member list contains the subject itself."""


# --- ingestion ------------------------------------------------------------

class LoadError(LifebookError):
    """Base class for delimited-file loading failures."""

    def __init__(self, message: str, *, row: int | None = None, field: str | None = None):
        super().__init__(message)
        self.row = row
        self.field = field


class MissingColumnError(LoadError):
    pass


class UnknownColumnError(LoadError):
    pass


class ColumnCountError(LoadError):
    pass


class TypeMismatchError(LoadError):
    pass


class DateParseError(LoadError):
    pass


class DuplicateSourceNameError(LifebookError):
    pass


class UnknownSourceError(LifebookError):
    pass


# --- recipes --------------------------------------------------------------

class RecipeError(LifebookError):
    pass


class RecipeSyntaxError(RecipeError):
    """Malformed recipe document; always carries the 1-based line number."""

    def __init__(self, message: str, *, line: int, column: int = 1):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.column = column


class UnknownRecipeKeyError(RecipeError):
    """A key the grammar does not define, reported with its section path."""

    def __init__(self, path: str, *, line: int):
        super().__init__(f"line {line}: unknown key {path!r}")
        self.path = path
        self.line = line


# --- extraction -----------------------------------------------------------

class UnsortedInputError(LifebookError):
    """Change detection requires the input series sorted by period."""


# --- rendering ------------------------------------------------------------

class RenderError(LifebookError):
    pass


class MissingSlotValueError(RenderError):
    """A sentence template references a field the paragraph does not carry."""


class UnmappedCodeError(RenderError):
    """A value map has no entry for a code and declares no fallback."""


class UnknownDictionaryError(RenderError):
    pass


class BudgetUnsatisfiableError(RenderError):
    """Undroppable paragraphs alone already exceed the token budget."""


class InverseMismatchError(RenderError):
    """A rendered sentence does not match its template's inverse grammar."""


class AmbiguousValueMapError(RenderError):
    """A value map is not injective, so display values cannot be inverted."""
