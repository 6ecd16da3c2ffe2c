class EtlnetError(Exception):
    """Base class of every error raised by etlnet."""
    exit_code = 3


class UsageError(EtlnetError):
    exit_code = 1


class ArgumentError(EtlnetError, ValueError):
    exit_code = 1


class DimensionError(EtlnetError, ValueError):
    exit_code = 2


class DataError(EtlnetError):
    exit_code = 2


class FormatError(DataError):
    pass


class ConfigurationError(DataError):
    pass


class ContractViolationError(EtlnetError, RuntimeError):
    exit_code = 3
