"""Exception types shared across the package.

Everything raised deliberately by this package derives from
:class:`DiscorefError`, so callers (notably the CLI) can distinguish
diagnosed input problems from genuine bugs.
"""


class DiscorefError(Exception):
    """Base class for all errors raised by this package."""


class CorpusFormatError(DiscorefError):
    """A corpus file is malformed: bad JSON, missing fields, bad tokens."""


class TreeFormatError(DiscorefError):
    """A discourse tree file violates the structural contract."""


class AlignmentError(DiscorefError):
    """Character spans and tokens cannot be reconciled."""


class StoreFormatError(DiscorefError):
    """An embedding store file is corrupt, truncated, or inconsistent."""


class CheckpointError(DiscorefError):
    """A model checkpoint file is corrupt, truncated, or incompatible."""


class ConfigError(DiscorefError):
    """A configuration value is out of range or inconsistent."""


class NumericError(DiscorefError):
    """A computation produced non-finite values."""
