"""Exception hierarchy shared across the package."""


class PlatoonError(Exception):
    """Base class for all package errors."""


class ValidationError(PlatoonError):
    """Invalid numeric input or configuration value."""


class ConfigError(ValidationError):
    """Problem in a configuration file; the message names the offending field."""


class CheckpointError(ValidationError):
    """Checkpoint file does not match the configured architecture."""


class ContractError(PlatoonError):
    """A stateful API was used out of order (e.g. stepping a finished episode)."""
