"""Exception hierarchy shared across the pipeline.

All charpipe-raised errors derive from CharpipeError so the CLI can map
input/validation failures to exit code 2 and everything else to 3.
"""


class CharpipeError(Exception):
    pass


class NonFiniteError(CharpipeError):
    """NaN or infinity in numeric input."""


class PoseShapeError(CharpipeError):
    """Pose parameter layout does not match the skeleton."""


class SkeletonCorrespondenceError(CharpipeError):
    """Joint or keypoint correspondence between two skeletons failed."""


class DegenerateBoneError(CharpipeError):
    """A bone that must have positive length has length zero."""


class EmptyInputError(CharpipeError):
    """An input sequence that must be nonempty is empty."""


class ShapeError(CharpipeError):
    """Array dimensions inconsistent with the operation's contract."""


class RigBindingError(CharpipeError):
    """Skin weights reference joints that do not exist in the skeleton."""


class InvalidWeightsError(CharpipeError):
    """Per-vertex skin weights violate the convexity contract."""


class InvalidSpecError(CharpipeError):
    """Procedural generator parameters out of range."""


class CameraError(CharpipeError):
    """Camera parameters invalid or camera file unreadable."""


class AssetError(CharpipeError):
    """A referenced asset is missing or malformed."""


class FormatError(CharpipeError):
    """A binary or JSON artifact does not conform to its file format."""
