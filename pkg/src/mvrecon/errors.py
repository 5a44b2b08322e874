"""Exception types shared across the package."""


class SizeError(ValueError):
    """Array shapes or resolutions do not agree."""


class LayoutError(ValueError):
    """A view grid cannot be split into the 3x2 tile layout."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class EmptyHullError(RuntimeError):
    """Space carving removed every voxel."""


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
