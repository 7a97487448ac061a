"""Exception types shared by the library and mapped to CLI exit codes."""


class ConfigError(ValueError):
    """Invalid architecture or solver configuration."""


class UsageError(ValueError):
    """Caller passed inconsistent inputs (shapes, frames, empty batches)."""


class NumericError(FloatingPointError):
    """A NaN/Inf appeared during evaluation or training.

    ``index`` is the offending batch index or training step when known and
    ``checkpoint`` optionally carries the last finite model state.
    """

    def __init__(self, message, index=None, checkpoint=None):
        super().__init__(message)
        self.index = index
        self.checkpoint = checkpoint
