"""Exception types raised across the toolkit."""


class SwapKitError(Exception):
    """Base class for all toolkit errors."""


class ShapeMismatch(SwapKitError, ValueError):
    """Inputs have incompatible shapes or sizes."""


class ConfigMismatch(SwapKitError, ValueError):
    """A checkpoint or input is inconsistent with the active configuration."""


class DegenerateConfiguration(SwapKitError, ValueError):
    """Landmark set is collinear or coincident; no alignment is defined."""


class SingularTransform(SwapKitError, ValueError):
    """Affine transform has a non-invertible linear part."""


class MissingEyeLandmarks(SwapKitError, ValueError):
    """Landmark set has an empty eye index group."""


class MissingOutlineLandmarks(SwapKitError, ValueError):
    """Landmark set has fewer than two face-outline points."""


class DegenerateOutline(SwapKitError, ValueError):
    """Face outline points are collinear; no fillable region exists."""


class ZeroTargetWidth(SwapKitError, ValueError):
    """Target face width is zero; the width ratio is undefined."""


class NonNormalizedInput(SwapKitError, ValueError):
    """An embedding expected to be unit-norm is not."""


class NonFiniteTerm(SwapKitError, ValueError):
    """A loss term is NaN or infinite."""


class NonFiniteLoss(SwapKitError, RuntimeError):
    """A training step produced a non-finite loss and was aborted."""


class EmptyDataset(SwapKitError, ValueError):
    """Dataset contains no persons or frames."""


class EmptyGallery(SwapKitError, ValueError):
    """Retrieval gallery is empty."""


class IndexMismatch(SwapKitError, ValueError):
    """Landmark sets disagree in point count or index groups."""


class EstimatorUnavailable(SwapKitError, RuntimeError):
    """No external parameter estimator is plugged in for this metric."""


class NoFaceDetected(SwapKitError, RuntimeError):
    """The landmark provider found no face in an input image.

    ``which`` identifies the offending input (e.g. ``"source"``/``"target"``).
    """

    def __init__(self, which: str, detail: str = ""):
        self.which = which
        msg = f"no face detected in {which}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class EmbeddingNotFound(SwapKitError, KeyError):
    """A file-backed embedder has no entry for the requested crop."""


class IoFailure(SwapKitError, OSError):
    """Reading or writing a dataset artifact failed."""
