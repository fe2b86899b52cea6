"""Error types shared across the package."""


class PhishdomError(Exception):
    """Base class for errors raised by this package."""


class InputError(PhishdomError, ValueError):
    """Malformed or unusable caller input (bad manifest row, empty document, ...)."""


class ConfigError(PhishdomError, ValueError):
    """Invalid run configuration: unknown key, out-of-range value, type mismatch."""


class CheckpointError(PhishdomError, ValueError):
    """Unreadable checkpoint or checkpoint/config mismatch."""
