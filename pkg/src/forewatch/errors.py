"""Error taxonomy shared by the library and the CLI.

Three failure classes, mirrored one-to-one by CLI exit codes: caller mistakes
(UsageError, exit 1), bad or unusable input data (DataError, exit 2), and
numerical breakdowns during training or solving (NumericError, exit 3).
"""

from __future__ import annotations


class ForewatchError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(ForewatchError):
    """The caller violated an API or configuration contract."""

    exit_code = 1


class DataError(ForewatchError):
    """Input data is malformed, inconsistent, or unusable."""

    exit_code = 2


class NumericError(ForewatchError):
    """A numerical procedure failed (non-finite objective, factorization)."""

    exit_code = 3
