"""Exception hierarchy shared across the package.

Errors that stem from bad user input (configs, data files, CLI arguments)
derive from ``InputError`` so the CLI and service can map them to the
input-error exit code / HTTP 400 uniformly.
"""


class DfgnError(Exception):
    """Base class for all package errors."""


class InputError(DfgnError):
    """Bad user-supplied input: config values, file contents, CLI args."""


class ConfigError(InputError):
    """Invalid or inconsistent run configuration."""


class DataFormatError(InputError):
    """Malformed dataset or embedding file; message names the offending line."""


class CheckpointError(InputError):
    """Unreadable checkpoint or config-hash mismatch."""


class DimensionError(DfgnError):
    """Tensor shape mismatch; message names both shapes."""


class DegenerateMaskError(DfgnError):
    """A normalization slice contains no unmasked position."""


class ContractError(DfgnError):
    """An operation precondition was violated by the caller."""
