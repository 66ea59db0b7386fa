class CompMechError(Exception):
    """Base class for all errors raised by compmech."""


class CheckpointError(CompMechError):
    """A checkpoint is missing a tensor, has a wrong shape, or holds non-finite values."""

    def __init__(self, message: str, tensor: str | None = None):
        super().__init__(message)
        self.tensor = tensor


class TokenizerError(CompMechError):
    pass


class ConfigError(CompMechError):
    pass


class InterventionError(CompMechError):
    pass


class NotCapturedError(CompMechError):
    """A trace field was requested that the forward pass did not record."""


class PromptAssemblyError(CompMechError):
    pass


class SchemaError(CompMechError):
    """An artifact file does not match the layout a consumer expects."""
