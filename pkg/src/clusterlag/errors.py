"""Exception types shared across the package.

The CLI maps each class to an exit code, so raise the most specific one.
"""

from __future__ import annotations


class ClusterLagError(Exception):
    """Base class for all package errors."""


class ConfigError(ClusterLagError):
    """Invalid or inconsistent run configuration."""


class DataError(ClusterLagError):
    """Input data could not be read or does not satisfy the panel contract."""


class DomainError(ClusterLagError, ValueError):
    """An argument is outside the domain an operation is defined on."""
