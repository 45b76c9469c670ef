"""
Exception hierarchy shared by every layer of the package.
"""

from pathlib import Path
from typing import Optional


class PMPError(Exception):
    """Base class for all errors raised by pmp_reasoner."""
    pass


class InvalidInputError(PMPError):
    """Raised when a caller violates an operation's pre-condition."""
    pass


class ContractViolationError(PMPError):
    """Raised when internal invariants (shapes, lineage, masks) are broken."""
    pass


class DatasetParseError(PMPError):
    """Raised when a dataset line cannot be parsed."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class SchemaVersionError(PMPError):
    """Raised when a record was written with an unsupported schema version."""
    pass


class NoRelevantStateError(PMPError):
    """Raised when a readout is requested over an empty relevance set."""
    pass


class InvalidComparisonError(PMPError):
    """Raised when reports built on different datasets are compared."""
    pass


class ConfigurationError(PMPError):
    """Raised when there's an error loading or validating configuration."""
    pass


class TrainingDivergedError(PMPError):
    """Raised when the training loss stops being finite."""

    def __init__(self, iteration: int, dump_path: Optional[Path] = None):
        where = f" (diagnostics written to {dump_path})" if dump_path else ""
        super().__init__(f"non-finite loss at iteration {iteration}{where}")
        self.iteration = iteration
        self.dump_path = dump_path
