"""Exception types shared across the package."""


class SymoptError(Exception):
    """Base class for package errors."""


class UnknownTokenError(SymoptError, ValueError):
    """A token id or symbol is not part of the library."""


class IncompleteTraversalError(SymoptError, ValueError):
    """An operation requiring a complete traversal received a prefix."""


class UnreachableTraversalError(SymoptError, ValueError):
    """A traversal has probability zero under the active constraint masks."""


class ContractViolationError(SymoptError, RuntimeError):
    """Joint constraint unsatisfiability: every token masked at some step.

    Raised loudly instead of renormalizing over an empty support.
    """


class ConfigError(SymoptError, ValueError):
    """Invalid run configuration; carries the offending field name."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field
