"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes, so each family stays distinct.
"""


class FedHEError(Exception):
    """Base class for all package errors."""


class ConfigError(FedHEError, ValueError):
    """Invalid or conflicting configuration."""


class DataError(FedHEError, ValueError):
    """Malformed, missing or incompatible data."""


class ProtocolError(FedHEError):
    """Violation of the coordinator/worker wire protocol."""


class KeyGenerationError(FedHEError):
    """No acceptable key could be sampled."""


class CipherArithmeticError(FedHEError, ArithmeticError):
    """Homomorphic operation undefined for its operands (singular divisor, bad domain)."""


class UnsupportedConfigurationError(ConfigError):
    """A requested combination of options cannot be executed."""
