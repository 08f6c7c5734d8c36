"""Exception types shared across the package."""


class DeskLMError(Exception):
    """Base class for all package errors."""


class ShapeError(DeskLMError):
    """Operands have incompatible shapes."""


class ConfigError(DeskLMError):
    """A configuration value violates its documented constraints."""


class InputError(DeskLMError):
    """Runtime input (token ids, labels, packing) is out of contract."""


class ContractError(DeskLMError):
    """An operation was called outside its stated preconditions."""


class NumericsError(DeskLMError):
    """Non-finite values were encountered where finite math is required."""


class DecodeError(DeskLMError):
    """Byte input is not valid UTF-8; carries the offending byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(message)
        self.offset = offset


class CheckpointFormatError(DeskLMError):
    """Checkpoint container has a bad magic or unsupported version."""


class CheckpointCorruptError(DeskLMError):
    """Checkpoint container is truncated or inconsistent."""


class CompatibilityError(DeskLMError):
    """Loaded parameters do not fit the requesting model configuration."""


class TransferError(DeskLMError):
    """Transfer initialization found no usable source tensors."""
