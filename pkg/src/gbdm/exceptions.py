"""Custom exceptions for the gbdm package.

This module defines a hierarchy of exceptions for consistent error handling
throughout the library. All custom exceptions inherit from GbdmError.
"""

from __future__ import annotations

from typing import TYPE_CHECKING


if TYPE_CHECKING:
    from pathlib import Path


class GbdmError(Exception):
    """Base exception for all gbdm package errors.

    All custom exceptions in this package inherit from this class,
    allowing callers to catch all package-specific errors with a single
    except clause.

    Attributes:
        message: Human-readable description of the error.
        details: Optional additional details about the error.
    """

    def __init__(self, message: str, details: str | None = None) -> None:
        """Initialize the exception.

        Args:
            message: Human-readable description of the error.
            details: Optional additional details about the error.
        """
        self.message = message
        self.details = details
        super().__init__(self.message)

    def __str__(self) -> str:
        """Return string representation of the error."""
        if self.details:
            return f"{self.message} - Details: {self.details}"
        return self.message

    def __repr__(self) -> str:
        """Return detailed representation of the error."""
        return f"{self.__class__.__name__}(message={self.message!r}, details={self.details!r})"


class ValidationError(GbdmError):
    """Exception raised when an argument fails validation.

    Attributes:
        field: The name of the argument that failed validation.
        value: The value that was rejected.
        reason: The reason for the validation failure.
    """

    def __init__(
        self,
        field: str,
        value: object,
        reason: str,
        *,
        details: str | None = None,
    ) -> None:
        """Initialize the validation error.

        Args:
            field: The name of the argument that failed validation.
            value: The value that was rejected.
            reason: The reason for the validation failure.
            details: Optional additional details about the error.
        """
        self.field = field
        self.value = value
        self.reason = reason
        message = f"Validation failed for '{field}': {reason}"
        super().__init__(message, details)


class ConfigurationError(GbdmError):
    """Exception raised when a run configuration is invalid.

    Attributes:
        config_key: The configuration key that caused the error.
        expected: Description of what was expected.
    """

    def __init__(
        self,
        config_key: str,
        expected: str,
        *,
        details: str | None = None,
    ) -> None:
        """Initialize the configuration error.

        Args:
            config_key: The configuration key that caused the error.
            expected: Description of what was expected.
            details: Optional additional details about the error.
        """
        self.config_key = config_key
        self.expected = expected
        message = f"Configuration error for '{config_key}': expected {expected}"
        super().__init__(message, details)


class ShapeError(GbdmError):
    """Exception raised when array shapes do not line up.

    Attributes:
        operation: The operation that received the mismatched inputs.
        expected: The expected shape (or a description of it).
        actual: The shape that was received.
    """

    def __init__(
        self,
        operation: str,
        expected: object,
        actual: object,
        *,
        details: str | None = None,
    ) -> None:
        """Initialize the shape error."""
        self.operation = operation
        self.expected = expected
        self.actual = actual
        message = f"Shape mismatch in '{operation}': expected {expected}, got {actual}"
        super().__init__(message, details)


class NumericalError(GbdmError):
    """Exception raised when a NaN or Inf value is produced.

    Attributes:
        operation: The op (or loss term) that produced the non-finite value.
        stage: Where it was detected: ``forward``, ``backward`` or ``loss``.
    """

    def __init__(
        self,
        operation: str,
        stage: str = "forward",
        *,
        details: str | None = None,
    ) -> None:
        """Initialize the numerical error."""
        self.operation = operation
        self.stage = stage
        message = f"Non-finite value in {stage} pass of '{operation}'"
        super().__init__(message, details)


class SimulationError(GbdmError):
    """Exception raised when an integrated state blows up.

    Attributes:
        system: Identifier of the simulated system (or ``rollout``).
        step: Index of the step at which the state left the finite range.
    """

    def __init__(
        self,
        system: str,
        step: int,
        *,
        details: str | None = None,
    ) -> None:
        """Initialize the simulation error."""
        self.system = system
        self.step = step
        message = f"State blow-up while integrating '{system}' at step {step}"
        super().__init__(message, details)


class DatasetFormatError(GbdmError):
    """Exception raised when a GBDS dataset file cannot be decoded.

    Attributes:
        path: The offending file.
        reason: What was wrong with it.
    """

    def __init__(self, path: Path | str, reason: str, *, details: str | None = None) -> None:
        """Initialize the dataset format error."""
        self.path = str(path)
        self.reason = reason
        super().__init__(f"Invalid dataset file '{self.path}': {reason}", details)


class CheckpointError(GbdmError):
    """Exception raised when a GBCK checkpoint cannot be written or decoded.

    Attributes:
        path: The offending file.
        reason: What was wrong with it.
    """

    def __init__(self, path: Path | str, reason: str, *, details: str | None = None) -> None:
        """Initialize the checkpoint error."""
        self.path = str(path)
        self.reason = reason
        super().__init__(f"Invalid checkpoint '{self.path}': {reason}", details)


class TrainingAbortedError(GbdmError):
    """Exception raised when training stops on a non-finite loss.

    Attributes:
        step: The optimizer step that failed.
        checkpoint: The last good checkpoint left on disk (if any).
    """

    def __init__(
        self,
        step: int,
        checkpoint: Path | str | None,
        *,
        details: str | None = None,
    ) -> None:
        """Initialize the training abort error."""
        self.step = step
        self.checkpoint = None if checkpoint is None else str(checkpoint)
        message = f"Training aborted at step {step}; last good checkpoint: {self.checkpoint or 'none'}"
        super().__init__(message, details)


class ReportInputError(GbdmError):
    """Exception raised when a report input is missing or empty.

    Attributes:
        path: The absent or empty file.
        reason: What was wrong with it.
    """

    def __init__(self, path: Path | str, reason: str, *, details: str | None = None) -> None:
        """Initialize the report input error."""
        self.path = str(path)
        self.reason = reason
        super().__init__(f"Report input '{self.path}' {reason}", details)
