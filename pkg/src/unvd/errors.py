"""Domain error types shared across the system."""


class UnvdError(Exception):
    """Base class for all domain errors."""


class DimensionMismatch(UnvdError):
    pass


class ZeroNorm(UnvdError):
    pass


class InvalidId(UnvdError):
    pass


class UnknownNamespace(UnvdError):
    pass


class CorruptFile(UnvdError):
    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class SchemaViolation(UnvdError):
    pass


class UnknownContract(UnvdError):
    pass


class UnknownTask(UnvdError):
    pass


class IllegalTransition(UnvdError):
    pass


class UnsupportedFormat(UnvdError):
    pass


class DecodeError(UnvdError):
    pass


class Base64Error(UnvdError):
    pass


class ProviderUnavailable(UnvdError):
    pass


class BadCursor(UnvdError):
    pass


class FetchTimeout(UnvdError):
    pass


class TooLarge(UnvdError):
    pass


class HttpError(UnvdError):
    def __init__(self, status: int, message: str = ""):
        super().__init__(message or f"HTTP {status}")
        self.status = status


class ExpiredReceipt(UnvdError):
    pass


class DuplicatePending(UnvdError):
    pass


class PerplexityOutOfRange(UnvdError):
    pass


class DisconnectedGraph(UnvdError):
    def __init__(self, component_sizes: list[int]):
        super().__init__(
            f"neighbor graph is disconnected (component sizes: {component_sizes})"
        )
        self.component_sizes = component_sizes


class DegenerateInput(UnvdError):
    pass
