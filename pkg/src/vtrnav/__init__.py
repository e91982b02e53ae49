"""Vision-only teach-and-repeat route following with a 2-D simulator."""

from .core import (
    Descriptor,
    Pose2,
    RelPose2,
    Transform3,
    Twist,
    compose_se2,
    cosine_similarity,
    normalize_angle,
    relative_se2,
)

__version__ = "0.1.0"

__all__ = [
    "Descriptor",
    "Pose2",
    "RelPose2",
    "Transform3",
    "Twist",
    "compose_se2",
    "cosine_similarity",
    "normalize_angle",
    "relative_se2",
    "__version__",
]
