"""
Error types shared by every package.

Library code raises these; only the command-line entry point turns them into
exit codes.
"""

from typing import Optional


class ImfusionError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ConfigurationError(ImfusionError, ValueError):
    """Invalid run configuration or invalid static parameters."""


class ContractViolation(ImfusionError, ValueError):
    """An operation was called outside its preconditions."""


class DivergenceError(ContractViolation):
    """A loss term became non-finite during training."""

    def __init__(self, term: str, value: float, step: Optional[int] = None):
        self.term = term
        self.value = value
        self.step = step
        where = f" at step {step}" if step is not None else ""
        super().__init__(f"loss term '{term}' is not finite ({value}){where}")


class ContainerError(ImfusionError, OSError):
    """Reading or writing an on-disk container failed."""

    exit_code = 2

    def __init__(self, message: str, name: Optional[str] = None):
        self.name = name
        super().__init__(message)
