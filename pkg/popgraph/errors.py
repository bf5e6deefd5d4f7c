"""
Exception hierarchy for popgraph.

Each error class carries the process exit code the CLI returns for it.
"""

from typing import Iterable

from pydantic import ValidationError


class PopGraphError(Exception):
    """Base class for all popgraph errors."""

    exit_code = 1


class ConfigError(PopGraphError, ValueError):
    """Invalid configuration or command-line usage."""

    exit_code = 1


class ShapeError(PopGraphError, ValueError):
    """Operand shapes do not agree."""

    exit_code = 3


class DataError(PopGraphError):
    """Unreadable, malformed or inconsistent input data."""

    exit_code = 2


class NumericalError(PopGraphError, ArithmeticError):
    """Non-finite loss or gradient."""

    exit_code = 3


def config_error_from(exc: ValidationError, prefix: str = "") -> ConfigError:
    """
    Convert a pydantic validation error into a ConfigError naming the fields.

    Args:
        exc: Validation error raised by a config model
        prefix: Optional section name prepended to every field path

    Returns:
        ConfigError whose message lists ``field: reason`` pairs
    """
    parts = []
    for err in exc.errors():
        loc: Iterable = err.get("loc", ())
        field = ".".join(str(p) for p in loc) or "<root>"
        if prefix:
            field = f"{prefix}.{field}"
        parts.append(f"{field}: {err.get('msg', 'invalid value')}")
    return ConfigError("invalid configuration - " + "; ".join(parts))
