"""Shared domain types, pipeline configuration, and mesh validation.

Coordinate convention used everywhere: continuous image coordinates with the
origin at the top-left corner of the image, x along columns, y along rows.
Pixel (row i, col j) occupies [j, j+1) x [i, i+1) and has center
(j + 0.5, i + 0.5). Canonical coordinates are pixel coordinates of a fixed
canonical raster (default 512 x 512).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import (
    DegenerateTriangle,
    DisconnectedMesh,
    EmptyDescriptorSet,
    FewerThanTwoFrames,
    InconsistentDimensions,
    InconsistentWinding,
    IndexOutOfRange,
    NegativeWeight,
    SchemaError,
)

DEFAULT_RASTER = 512
MIN_TRIANGLE_AREA = 1e-12

WAVELET_MODES = ("universal-soft", "none")


def frozen_array(values, dtype=np.float64) -> np.ndarray:
    """Contiguous read-only array copy of `values`."""
    arr = np.array(values, dtype=dtype, copy=True, order="C")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FrameImage:
    """One grayscale frame; intensities in [0, 1], row-major."""

    pixels: np.ndarray
    frame_index: int = 0

    def __post_init__(self):
        arr = np.asarray(self.pixels, dtype=np.float64)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError("pixels must be a non-empty 2-D array")
        if not np.all(np.isfinite(arr)):
            raise ValueError("pixel intensities must be finite")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("pixel intensities must lie in [0, 1]")
        object.__setattr__(self, "pixels", frozen_array(arr))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class VideoSequence:
    """Ordered frames of identical size; at least two (flow needs pairs)."""

    frames: tuple

    def __post_init__(self):
        frames = tuple(self.frames)
        if len(frames) < 2:
            raise FewerThanTwoFrames(f"got {len(frames)} frame(s), need at least 2")
        w, h = frames[0].width, frames[0].height
        for i, f in enumerate(frames):
            if f.width != w or f.height != h:
                raise InconsistentDimensions(i)
        object.__setattr__(self, "frames", frames)

    @property
    def frame_count(self) -> int:
        return len(self.frames)

    @property
    def width(self) -> int:
        return self.frames[0].width

    @property
    def height(self) -> int:
        return self.frames[0].height


@dataclass(frozen=True)
class FaceMesh:
    """2-D landmarks plus a shared triangulation.

    `landmarks` is (l, 2) float64, `triangles` is (K, 3) int32. Edges are
    derived, deduplicated, and sorted.
    """

    landmarks: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        lm = np.asarray(self.landmarks, dtype=np.float64)
        tri = np.asarray(self.triangles, dtype=np.int32)
        if lm.ndim != 2 or lm.shape[1] != 2 or lm.shape[0] < 3:
            raise ValueError("landmarks must be (l >= 3, 2)")
        if not np.all(np.isfinite(lm)):
            raise ValueError("landmark coordinates must be finite")
        if tri.ndim != 2 or tri.shape[1] != 3 or tri.shape[0] < 1:
            raise ValueError("triangles must be (K >= 1, 3)")
        object.__setattr__(self, "landmarks", frozen_array(lm))
        object.__setattr__(self, "triangles", frozen_array(tri, np.int32))

    @property
    def landmark_count(self) -> int:
        return self.landmarks.shape[0]

    @property
    def triangle_count(self) -> int:
        return self.triangles.shape[0]

    @cached_property
    def edges(self) -> np.ndarray:
        """(E, 2) int32 unique undirected edges, lexicographically sorted."""
        t = self.triangles
        pairs = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        pairs = np.sort(pairs, axis=1)
        uniq = np.unique(pairs, axis=0)
        return frozen_array(uniq, np.int32)

    def signed_areas(self) -> np.ndarray:
        """Signed area of every triangle (positive = counter-clockwise in
        image coordinates with y pointing down)."""
        p = self.landmarks[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def validate_mesh(mesh: FaceMesh) -> FaceMesh:
    """Check all FaceMesh invariants; return the mesh unchanged if they hold.

    Idempotent: a mesh that already passed validation is returned directly.
    """
    if getattr(mesh, "_validated", False):
        return mesh
    tri = mesh.triangles
    n = mesh.landmark_count
    if tri.min() < 0 or tri.max() >= n:
        bad = int(np.argmax((tri < 0) | (tri >= n)).item() // 3)
        idx = tri[bad][(tri[bad] < 0) | (tri[bad] >= n)][0]
        raise IndexOutOfRange(bad, int(idx), n)
    areas = mesh.signed_areas()
    small = np.abs(areas) < MIN_TRIANGLE_AREA
    if small.any():
        raise DegenerateTriangle(int(np.argmax(small)))
    signs = np.sign(areas)
    if not np.all(signs == signs[0]):
        raise InconsistentWinding(int(np.argmax(signs != signs[0])))
    # Connectivity of the landmark graph: every landmark reachable from
    # landmark of triangle 0 through triangle edges, and none unused.
    adj = [[] for _ in range(n)]
    for a, b in mesh.edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = np.zeros(n, dtype=bool)
    stack = [int(tri[0, 0])]
    seen[stack[0]] = True
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if not seen[w]:
                seen[w] = True
                stack.append(w)
    if not seen.all():
        raise DisconnectedMesh(f"{int((~seen).sum())} landmark(s) unreachable")
    object.__setattr__(mesh, "_validated", True)
    return mesh


@dataclass(frozen=True)
class CanonicalFaceModel:
    """Canonical mesh plus its rasterized per-pixel triangle lookup.

    `triangle_index_map` is (raster_height, raster_width) int32 with the id
    of the triangle containing each pixel center, or -1 outside the face.
    """

    mesh: FaceMesh
    raster_width: int
    raster_height: int
    triangle_index_map: np.ndarray

    def __post_init__(self):
        if self.raster_width < 1 or self.raster_height < 1:
            raise ValueError("raster dimensions must be positive")
        tmap = np.asarray(self.triangle_index_map, dtype=np.int32)
        if tmap.shape != (self.raster_height, self.raster_width):
            raise ValueError("triangle_index_map shape must match raster")
        lm = self.mesh.landmarks
        if (
            lm[:, 0].min() < 0
            or lm[:, 1].min() < 0
            or lm[:, 0].max() >= self.raster_width
            or lm[:, 1].max() >= self.raster_height
        ):
            raise SchemaError(
                "canonical landmarks must lie inside "
                f"[0, {self.raster_width}) x [0, {self.raster_height})"
            )
        object.__setattr__(self, "triangle_index_map", frozen_array(tmap, np.int32))


@dataclass(frozen=True)
class MuscleDescriptorSet:
    """Muscle anchor points in canonical coordinates with RBF gate params.

    Weights are used exactly as given; the kernel-smoothing formula divides
    by the descriptor count m, not by the weight sum.
    """

    names: tuple
    positions: np.ndarray
    weights: np.ndarray
    gamma: float

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        w = np.asarray(self.weights, dtype=np.float64)
        names = tuple(str(s) for s in self.names)
        if pos.ndim != 2 or pos.shape[1] != 2 or pos.shape[0] == 0:
            raise EmptyDescriptorSet("need at least one descriptor")
        if len(names) != pos.shape[0] or w.shape != (pos.shape[0],):
            raise SchemaError("descriptor names/positions/weights lengths differ")
        if not np.all(np.isfinite(pos)) or not np.all(np.isfinite(w)):
            raise SchemaError("descriptor positions and weights must be finite")
        for name, wi in zip(names, w):
            if wi < 0:
                raise NegativeWeight(name, float(wi))
        if not np.any(w > 0):
            raise SchemaError("at least one descriptor weight must be positive")
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise SchemaError("gamma must be a positive finite number")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "positions", frozen_array(pos))
        object.__setattr__(self, "weights", frozen_array(w))
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def count(self) -> int:
        return self.positions.shape[0]


def default_gamma(raster_width: int) -> float:
    """Kernel bandwidth 1 / (2 sigma^2) with sigma = 0.15 x raster width,
    a plausible muscle-sized support on the canonical face."""
    sigma = 0.15 * raster_width
    return 1.0 / (2.0 * sigma * sigma)


@dataclass(frozen=True)
class PipelineConfig:
    """Numeric knobs for every stage. All parameters strictly positive;
    `lk_window` odd. `mks_gamma=None` means `default_gamma(raster_width)`."""

    lk_window: int = 21
    lk_pyramid_levels: int = 3
    lk_max_iters: int = 30
    lk_epsilon: float = 0.01
    lk_min_eigen: float = 1e-4
    spectral_modes: int = 64
    wavelet_threshold_mode: str = "universal-soft"
    mks_gamma: float | None = None
    subdivision_depth: int = 3
    overlay_scale: float = 10.0

    def __post_init__(self):
        if self.lk_window < 1 or self.lk_window % 2 == 0:
            raise ValueError("lk_window must be a positive odd integer")
        for name in (
            "lk_pyramid_levels",
            "lk_max_iters",
            "lk_epsilon",
            "lk_min_eigen",
            "spectral_modes",
            "subdivision_depth",
            "overlay_scale",
        ):
            v = getattr(self, name)
            if not v > 0:
                raise ValueError(f"{name} must be strictly positive, got {v!r}")
        if self.wavelet_threshold_mode not in WAVELET_MODES:
            raise ValueError(
                f"wavelet_threshold_mode must be one of {WAVELET_MODES}"
            )
        if self.mks_gamma is not None and not self.mks_gamma > 0:
            raise ValueError("mks_gamma must be strictly positive or None")

    def resolved_gamma(self, raster_width: int) -> float:
        if self.mks_gamma is not None:
            return float(self.mks_gamma)
        return default_gamma(raster_width)

    def as_dict(self) -> dict:
        return {
            "lk_window": self.lk_window,
            "lk_pyramid_levels": self.lk_pyramid_levels,
            "lk_max_iters": self.lk_max_iters,
            "lk_epsilon": self.lk_epsilon,
            "lk_min_eigen": self.lk_min_eigen,
            "spectral_modes": self.spectral_modes,
            "wavelet_threshold_mode": self.wavelet_threshold_mode,
            "mks_gamma": self.mks_gamma,
            "subdivision_depth": self.subdivision_depth,
            "overlay_scale": self.overlay_scale,
        }
