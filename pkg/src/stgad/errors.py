"""Exception taxonomy shared across the package.

Exit-code mapping used by the CLI: config/usage problems -> 2,
data ingestion / generation-spec problems -> 3, runtime contract or
numeric failures -> 4.
"""


class StgadError(Exception):
    """Base class for all package errors."""


class ContractError(StgadError):
    """An API was called in a way its contract forbids."""


class DimensionError(ContractError):
    """Array arguments have incompatible or unsupported shapes."""


class NumericError(StgadError):
    """A non-finite value appeared where a finite one is required."""


class IngestionError(StgadError):
    """An input file is malformed. Messages carry 1-based row numbers."""


class SpecError(StgadError):
    """A synthetic dataset specification is internally inconsistent."""


class ConfigError(StgadError):
    """A run configuration is missing, malformed, or contradictory."""


class CheckpointError(StgadError):
    """A model checkpoint is unreadable or incompatible."""
