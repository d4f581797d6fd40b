class ShapeError(ValueError):
    """Input shape incompatible with a layer's declared geometry."""


class CheckpointError(ValueError):
    """Checkpoint file rejected: bad magic, version, or truncation."""
