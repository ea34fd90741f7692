"""Exception hierarchy shared across the package.

Every error carries an ``exit_code`` consumed by the CLI: 2 usage,
3 validation, 4 repository integrity, 5 semantic incompatibility.
"""

from __future__ import annotations


class SemvaultError(Exception):
    exit_code = 3


class UsageError(SemvaultError):
    """Bad command-line arguments or malformed request parameters."""

    exit_code = 2


class ValidationError(SemvaultError):
    """Malformed input: manifests, graphs, attribute conflicts."""

    exit_code = 3


class NotFoundError(SemvaultError):
    """Lookup miss: unknown vertex, base image, package, or data label."""

    exit_code = 3


class IntegrityError(SemvaultError):
    """Repository invariant violation, lock failure, or broken layout."""

    exit_code = 4


class IncompatibleError(SemvaultError):
    """Semantic compatibility check failed (comp = 0)."""

    exit_code = 5
