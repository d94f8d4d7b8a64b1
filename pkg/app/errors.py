class DecoderError(Exception):
    """Base class for errors raised on purpose by this package."""


class ConfigError(DecoderError):
    """Invalid or unreadable run configuration."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class ContractViolation(DecoderError, ValueError):
    """A documented precondition of an operation was not met."""


class NetworkCompileError(ContractViolation):
    pass


class MatchingError(ContractViolation):
    pass


class MatchingLimitError(MatchingError):
    pass
