"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration or infeasible sampling request."""


class FormatError(ValueError):
    """Malformed on-disk artifact. ``offset`` is the byte position of the fault."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ShapeError(ValueError):
    pass


class InputError(ValueError):
    pass


class NumericError(FloatingPointError):
    pass


class UsageError(RuntimeError):
    pass
