#!/usr/bin/env python
from __future__ import annotations

from typing import Any

# this_file: src/actkit/exceptions.py
"""Exception hierarchy for the actkit package."""


class ACTError(Exception):
    """Base exception for all actkit errors."""

    pass


class ConfigurationError(ACTError):
    """Invalid configuration (experiment file, config model, parameters)."""

    def __init__(self, message: str, *, key: str | None = None, line: int | None = None):
        self.key = key
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class OperationError(ACTError):
    """Error during runtime operations (graph evaluation, training, etc.)."""

    pass


class ShapeError(OperationError):
    """Shape mismatch on a tape node or matrix operand."""

    def __init__(self, message: str, *, node: int | None = None, name: str | None = None):
        self.node = node
        self.name = name
        if node is not None:
            label = f"node {node}" if name is None else f"node {node} ({name})"
            message = f"{label}: {message}"
        super().__init__(message)


class NumericalError(OperationError):
    """Non-finite values or a degenerate numerical state."""

    def __init__(self, message: str, *, record: dict[str, Any] | None = None):
        self.record = record
        super().__init__(message)


class DataError(ACTError):
    """Dataset or evaluation protocol violation."""

    pass


class InvariantViolationError(ACTError):
    """A checked theoretical bound does not hold."""

    pass
