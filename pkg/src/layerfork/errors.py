"""Exception hierarchy shared across the toolkit."""


class LayerforkError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(LayerforkError):
    """Operand shapes do not conform to an operation's signature."""


class NonFiniteError(LayerforkError):
    """An operation produced NaN or Inf."""

    def __init__(self, kind: str):
        super().__init__(f"non-finite output from primitive '{kind}'")
        self.kind = kind


class TapeError(LayerforkError):
    """Misuse of the gradient tape (non-scalar loss, consumed tape)."""


class DataError(LayerforkError):
    """Malformed dataset, label or schema."""


class CheckpointError(LayerforkError):
    """Corrupt, truncated or version-mismatched checkpoint file."""


class MergeError(LayerforkError):
    """Checkpoints cannot be merged (fingerprint/config/task-id conflict)."""
