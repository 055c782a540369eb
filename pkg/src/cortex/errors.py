"""Exception hierarchy shared across the engine."""


class CortexError(Exception):
    """Base class for all structured errors raised by cortex."""


class ShapeError(CortexError, ValueError):
    pass


class ValidationError(CortexError, ValueError):
    pass


class InternalConsistencyError(CortexError, RuntimeError):
    pass


class IngestionError(CortexError):
    """An input image could not be decoded."""

    def __init__(self, source, reason):
        self.source = str(source)
        self.reason = reason
        super().__init__(f"{self.source}: {reason}")


class DatasetFormatError(CortexError):
    pass


class CheckpointError(CortexError):
    pass


class NonFiniteError(CortexError, FloatingPointError):
    pass


class ArtifactError(CortexError, OSError):
    pass
