"""Training-free guidance engine for temporally consistent video relighting
on analytic toy scenes."""

__version__ = "0.1.0"

from .types import (  # noqa: F401
    CameraTrajectory,
    FeatureSequence,
    LatentVideo,
    LightingSpec,
    VideoTensor,
    assert_finite,
    video_like,
)
