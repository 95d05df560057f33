"""Exception types shared across the package."""


class DriftscanError(Exception):
    """Base class for all driftscan errors."""


class FrameError(DriftscanError):
    """Base class for frame-loading failures."""


class FrameUnreadable(FrameError):
    """File is missing, not an image, or the raster data is corrupt."""


class FrameUnsupported(FrameError):
    """Image decodes but is not an 8-bit grayscale or RGB raster."""


class FrameEmpty(FrameError):
    """Image has zero pixels."""


class PipelineError(DriftscanError):
    """Wraps a failure inside the per-frame pipeline with a stage label."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
