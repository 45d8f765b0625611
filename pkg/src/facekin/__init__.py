"""facekin: facial muscle displacement measurement from video.

Frames are warped onto a canonical face through per-triangle affine charts,
sparse optical flow is measured there, the polar displacement field is
smoothed (graph-spectral magnitudes, temporal wavelet angles, Gaussian-RBF
muscle gating), and the result is mapped back for overlay rendering and
feature extraction.
"""

from .core import (
    CanonicalFaceModel,
    FaceMesh,
    FrameImage,
    MuscleDescriptorSet,
    PipelineConfig,
    VideoSequence,
    default_gamma,
    validate_mesh,
)
from .flow import DisplacementField, flow_sequence, lucas_kanade
from .geometry import (
    AffineChart,
    ChartSet,
    DenseLandmarkSet,
    build_canonical_model,
    build_charts,
    densify_landmarks,
    map_point_to_frame,
    rasterize_triangle_map,
    solve_affine,
    warp_to_canonical,
)
from .smoothing import (
    PolarField,
    SmoothedField,
    SpectralFilter,
    mks,
    smooth_sequence,
    spectral_smooth,
    to_cartesian,
    to_polar,
    wavelet_smooth_angles,
)

__version__ = "0.1.0"

__all__ = [
    "AffineChart",
    "CanonicalFaceModel",
    "ChartSet",
    "DenseLandmarkSet",
    "DisplacementField",
    "FaceMesh",
    "FrameImage",
    "MuscleDescriptorSet",
    "PipelineConfig",
    "PolarField",
    "SmoothedField",
    "SpectralFilter",
    "VideoSequence",
    "build_canonical_model",
    "build_charts",
    "default_gamma",
    "densify_landmarks",
    "flow_sequence",
    "lucas_kanade",
    "map_point_to_frame",
    "mks",
    "rasterize_triangle_map",
    "smooth_sequence",
    "solve_affine",
    "spectral_smooth",
    "to_cartesian",
    "to_polar",
    "validate_mesh",
    "warp_to_canonical",
]
