"""facekin-adapter: face-mesh detector wrapper emitting facekin's landmark
and canonical model file formats."""

from .detect import (
    AdapterError,
    MediapipeBackend,
    MomentBackend,
    MultipleFaces,
    NoFaceDetected,
    make_backend,
)
from .emit import extract
from .topology import LANDMARK_COUNT, TRIANGLE_COUNT, canonical_layout

__version__ = "0.1.0"

__all__ = [
    "AdapterError",
    "LANDMARK_COUNT",
    "MediapipeBackend",
    "MomentBackend",
    "MultipleFaces",
    "NoFaceDetected",
    "TRIANGLE_COUNT",
    "canonical_layout",
    "extract",
    "make_backend",
]
