"""Exception family shared by all pipeline stages.

The CLI maps these onto exit codes: anything data- or schema-shaped exits
with 2, numeric optimization failures exit with 3.
"""


class DuiFairError(Exception):
    """Base class for all pipeline errors."""


class SchemaError(DuiFairError):
    """Header/schema mismatch or an invalid schema definition."""


class ParseError(DuiFairError):
    """Non-numeric token or unit violation in a data cell."""

    def __init__(self, message, row=None, column=None):
        if row is not None and column is not None:
            message = f"{message} (row {row}, column '{column}')"
        super().__init__(message)
        self.row = row
        self.column = column


class DuplicateKeyError(DuiFairError):
    """A key column value appears more than once in a table."""


class ConfigError(DuiFairError):
    """Invalid configuration value (unknown field, bad hyperparameter, ...)."""


class DataError(DuiFairError):
    """Input data violates an operation's precondition (empty input, ...)."""


class StratificationError(DataError):
    """A class required for a stratified split is absent."""


class EmptyGroupError(DataError):
    """A protected group has no members."""


class UndefinedMetricError(DataError):
    """The metric's value is mathematically undefined for this input."""


class UndefinedCorrelationError(DataError):
    """Pearson correlation is undefined (zero variance in a column)."""


class DimensionError(DataError):
    """Array shapes do not match the contract (feature count, lengths)."""


class NumericFailureError(DuiFairError):
    """Optimization produced a non-finite loss or gradient."""
