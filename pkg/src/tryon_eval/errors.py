"""Exception hierarchy shared by all toolkit modules."""


class TryOnEvalError(Exception):
    """Base class for all toolkit errors."""


# --- annotation loading / geometry ---

class MalformedFile(TryOnEvalError):
    """Input file exists but does not match the expected format."""


class NoPersonDetected(TryOnEvalError):
    """OpenPose JSON contains an empty `people` list."""


class UnsupportedBitDepth(TryOnEvalError):
    """Label/densepose PNG is not 8-bit single-channel."""


class PartIndexOutOfRange(TryOnEvalError):
    """Densepose map contains a part index > 24."""


class UnknownRole(TryOnEvalError):
    """Selector names a role the schema does not define."""


class DimensionMismatch(TryOnEvalError):
    """Two rasters that must share dimensions do not."""


# --- mask maker ---

class MissingWaistKeypoint(TryOnEvalError):
    """RHip, MidHip or LHip keypoint absent (confidence 0)."""


class MissingShoulderKeypoint(TryOnEvalError):
    """RShoulder or LShoulder keypoint absent."""


class EmptyTorsoRegion(TryOnEvalError):
    """No upper-clothes pixels between the shoulders."""


class NoValidSamples(TryOnEvalError):
    """Calibration input yielded no defined torso ratios."""


# --- sdr ---

class ZeroBodyArea(TryOnEvalError):
    """Densepose upper-body area is zero; SDR undefined."""


class EmptyClothing(TryOnEvalError):
    """Clothing semantic area is zero where a positive area is required."""


class DegenerateOverlap(TryOnEvalError):
    """Clothing/body intersection is zero; correction factors undefined."""


# --- skeleton / perceptual ---

class MissingCoreKeypoints(TryOnEvalError):
    """Both shoulders or both hips absent; no grid can be built."""


class NoActiveNodes(TryOnEvalError):
    """No grid nodes survive filtering; the pair is unevaluable."""


class BackendFailure(TryOnEvalError):
    """Feature backend failed during inference."""


class ModelLoadFailure(TryOnEvalError):
    """Feature backend model file could not be loaded."""


class WrongOutputArity(TryOnEvalError):
    """Backend model does not expose exactly 5 feature outputs."""


# --- harness ---

class DuplicateIds(TryOnEvalError):
    """Manifest id list contains duplicates."""


class DatasetResolutionFailure(TryOnEvalError):
    """One or more dataset files could not be resolved."""

    def __init__(self, missing):
        self.missing = list(missing)
        super().__init__(
            "missing dataset files: " + ", ".join(str(p) for p in self.missing)
        )


class EmptyPool(TryOnEvalError):
    """Mixing experiment received an empty correct/incorrect pool."""


class SerializationFailure(TryOnEvalError):
    """Report could not be written or read back consistently."""
