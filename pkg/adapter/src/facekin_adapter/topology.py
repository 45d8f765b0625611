"""Built-in 468-landmark / 854-triangle canonical face topology.

A triangulated elliptical disk with 80 rim points and 388 sunflower-spaced
interior points; any triangulation of such a point set has exactly
2*468 - 80 - 2 = 854 triangles. Coordinates are normalized to [0, 1]^2 and
scaled into the target raster at emission time. The construction is fully
deterministic, so every run (and every machine with the same scipy) agrees
on the layout.
"""

from functools import lru_cache

import numpy as np
from scipy.spatial import Delaunay

LANDMARK_COUNT = 468
TRIANGLE_COUNT = 854
_BOUNDARY = 80
_CENTER = (0.5, 0.54)
_RADII = (0.335, 0.415)


@lru_cache(maxsize=1)
def canonical_layout():
    """(landmarks (468, 2) in [0,1]^2, triangles (854, 3) int32).

    Triangles are wound consistently (positive signed area with y down).
    """
    cx, cy = _CENTER
    rx, ry = _RADII
    angles = 2.0 * np.pi * np.arange(_BOUNDARY) / _BOUNDARY
    boundary = np.column_stack([cx + rx * np.cos(angles), cy + ry * np.sin(angles)])
    n_inner = LANDMARK_COUNT - _BOUNDARY
    golden = np.pi * (3.0 - np.sqrt(5.0))
    k = np.arange(n_inner)
    rad = 0.92 * np.sqrt((k + 0.5) / n_inner)
    phi = k * golden
    interior = np.column_stack(
        [cx + rx * rad * np.cos(phi), cy + ry * rad * np.sin(phi)]
    )
    pts = np.vstack([boundary, interior])
    tris = Delaunay(pts).simplices.astype(np.int32)
    p = pts[tris]
    areas = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (
        p[:, 1, 1] - p[:, 0, 1]
    ) * (p[:, 2, 0] - p[:, 0, 0])
    flip = areas < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    if len(tris) != TRIANGLE_COUNT:
        raise RuntimeError(
            f"layout triangulation produced {len(tris)} triangles, "
            f"expected {TRIANGLE_COUNT}"
        )
    return pts, tris


@lru_cache(maxsize=1)
def whitened_layout():
    """Layout recentered to zero mean with identity point covariance; used
    to place landmarks from a detected face position/shape."""
    pts, _ = canonical_layout()
    centered = pts - pts.mean(axis=0)
    cov = np.cov(centered.T)
    vals, vecs = np.linalg.eigh(cov)
    white = vecs @ np.diag(1.0 / np.sqrt(vals)) @ vecs.T
    return centered @ white.T


def layout_in_raster(raster: int, margin: float = 0.04):
    """Canonical landmarks scaled into [0, raster)^2 with a safety margin."""
    pts, tris = canonical_layout()
    span = raster * (1.0 - 2.0 * margin)
    return pts * span + raster * margin, tris
