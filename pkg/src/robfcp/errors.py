"""Exception types shared across the package.

Every error raised on a user-facing path carries a short machine-readable
``code`` so the CLI can emit ``ERROR:<code>:<message>`` lines.
"""

from __future__ import annotations


class RobfcpError(Exception):
    """Base class for all errors raised by this package."""

    code = "error"


class InputError(RobfcpError):
    """A caller-supplied value violates a documented precondition."""

    code = "input"


class FormatError(RobfcpError):
    """A file (config, report JSONL, score CSV) is malformed."""

    code = "format"


class ConfigError(InputError):
    """A simulation config is inconsistent or contains unknown keys."""

    code = "config"
