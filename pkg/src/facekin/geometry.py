"""Per-triangle affine charts, piecewise-affine warping, dense sampling.

The chart for triangle k is the unique affine map sending the frame
triangle's vertices onto the canonical triangle's vertices. Warping is
inverse-mapped: destination (canonical) pixels pull from the frame through
the chart inverse, with bilinear sampling clamped at the image border.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CanonicalFaceModel, FaceMesh, FrameImage, frozen_array, validate_mesh
from .errors import DegenerateTriangle, MeshMismatch, OutsideFace

_AREA_EPS = 1e-12
# Barycentric slack for pixel-center containment; keeps shared-edge pixels
# inside both adjacent triangles so the lowest-id tie-break applies.
_BARY_EPS = 1e-9


@dataclass(frozen=True)
class AffineChart:
    """2x3 affine map between one frame triangle and its canonical twin."""

    triangle_id: int
    forward: np.ndarray
    inverse: np.ndarray

    def apply(self, points: np.ndarray) -> np.ndarray:
        return apply_affine(self.forward, points)

    def apply_inverse(self, points: np.ndarray) -> np.ndarray:
        return apply_affine(self.inverse, points)


def apply_affine(matrix: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Apply a 2x3 affine matrix to (n, 2) or (2,) points."""
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    out = pts @ matrix[:, :2].T + matrix[:, 2]
    return out[0] if single else out


def _triangle_area2(tri: np.ndarray) -> float:
    d1 = tri[1] - tri[0]
    d2 = tri[2] - tri[0]
    return d1[0] * d2[1] - d1[1] * d2[0]


def solve_affine(src_triangle, dst_triangle, triangle_id: int = 0) -> AffineChart:
    """Unique affine map sending src vertices onto dst vertices, with its
    exact inverse. Raises DegenerateTriangle if either triangle has
    |signed area| < 1e-12."""
    src = np.asarray(src_triangle, dtype=np.float64)
    dst = np.asarray(dst_triangle, dtype=np.float64)
    if src.shape != (3, 2) or dst.shape != (3, 2):
        raise ValueError("triangles must be (3, 2) arrays")
    det_src = _triangle_area2(src)
    det_dst = _triangle_area2(dst)
    if abs(det_src) < 2 * _AREA_EPS or abs(det_dst) < 2 * _AREA_EPS:
        raise DegenerateTriangle(triangle_id)
    # Linear part maps src edge vectors to dst edge vectors: A = D S^-1.
    s = np.column_stack([src[1] - src[0], src[2] - src[0]])
    d = np.column_stack([dst[1] - dst[0], dst[2] - dst[0]])
    s_inv = np.array([[s[1, 1], -s[0, 1]], [-s[1, 0], s[0, 0]]]) / det_src
    a = d @ s_inv
    t = dst[0] - a @ src[0]
    det_a = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    a_inv = np.array([[a[1, 1], -a[0, 1]], [-a[1, 0], a[0, 0]]]) / det_a
    t_inv = -a_inv @ t
    forward = np.column_stack([a, t])
    inverse = np.column_stack([a_inv, t_inv])
    return AffineChart(triangle_id, frozen_array(forward), frozen_array(inverse))


@dataclass(frozen=True)
class ChartSet:
    """All per-triangle charts of a frame, stacked for vectorized mapping.

    forwards/inverses are (K, 2, 3): frame -> canonical and its inverse.
    """

    forwards: np.ndarray
    inverses: np.ndarray

    @property
    def triangle_count(self) -> int:
        return self.forwards.shape[0]

    def chart(self, triangle_id: int) -> AffineChart:
        return AffineChart(
            triangle_id,
            self.forwards[triangle_id],
            self.inverses[triangle_id],
        )


def build_charts(frame_mesh: FaceMesh, canonical_mesh: FaceMesh) -> ChartSet:
    """Charts mapping every frame triangle onto its canonical counterpart."""
    if not np.array_equal(frame_mesh.triangles, canonical_mesh.triangles):
        raise MeshMismatch(
            f"triangulations differ ({frame_mesh.triangle_count} vs "
            f"{canonical_mesh.triangle_count} triangles)"
        )
    src = frame_mesh.landmarks[frame_mesh.triangles]
    dst = canonical_mesh.landmarks[canonical_mesh.triangles]
    s = np.stack([src[:, 1] - src[:, 0], src[:, 2] - src[:, 0]], axis=2)
    d = np.stack([dst[:, 1] - dst[:, 0], dst[:, 2] - dst[:, 0]], axis=2)
    det_s = s[:, 0, 0] * s[:, 1, 1] - s[:, 0, 1] * s[:, 1, 0]
    det_d = d[:, 0, 0] * d[:, 1, 1] - d[:, 0, 1] * d[:, 1, 0]
    bad = (np.abs(det_s) < 2 * _AREA_EPS) | (np.abs(det_d) < 2 * _AREA_EPS)
    if bad.any():
        raise DegenerateTriangle(int(np.argmax(bad)))
    s_inv = np.empty_like(s)
    s_inv[:, 0, 0] = s[:, 1, 1]
    s_inv[:, 0, 1] = -s[:, 0, 1]
    s_inv[:, 1, 0] = -s[:, 1, 0]
    s_inv[:, 1, 1] = s[:, 0, 0]
    s_inv /= det_s[:, None, None]
    a = d @ s_inv
    t = dst[:, 0] - np.einsum("kij,kj->ki", a, src[:, 0])
    det_a = a[:, 0, 0] * a[:, 1, 1] - a[:, 0, 1] * a[:, 1, 0]
    a_inv = np.empty_like(a)
    a_inv[:, 0, 0] = a[:, 1, 1]
    a_inv[:, 0, 1] = -a[:, 0, 1]
    a_inv[:, 1, 0] = -a[:, 1, 0]
    a_inv[:, 1, 1] = a[:, 0, 0]
    a_inv /= det_a[:, None, None]
    t_inv = -np.einsum("kij,kj->ki", a_inv, t)
    forwards = np.concatenate([a, t[:, :, None]], axis=2)
    inverses = np.concatenate([a_inv, t_inv[:, :, None]], axis=2)
    return ChartSet(frozen_array(forwards), frozen_array(inverses))


def identity_charts(mesh: FaceMesh) -> ChartSet:
    return build_charts(mesh, mesh)


# ---------------------------------------------------------------------------
# rasterization

def _barycentric(tri: np.ndarray, px: np.ndarray, py: np.ndarray):
    """Barycentric coordinates of points (px, py) w.r.t. triangle (3, 2)."""
    (x1, y1), (x2, y2), (x3, y3) = tri
    det = (x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1)
    l2 = ((px - x1) * (y3 - y1) - (py - y1) * (x3 - x1)) / det
    l3 = ((px - x1) * -(y2 - y1) + (py - y1) * (x2 - x1)) / det
    l1 = 1.0 - l2 - l3
    return l1, l2, l3


def rasterize_triangle_map(
    mesh: FaceMesh, raster_width: int, raster_height: int
) -> np.ndarray:
    """Assign every canonical pixel center the id of a containing triangle,
    -1 outside. Pixels on shared edges get the lowest containing id (ids are
    processed in order and only unassigned pixels are written)."""
    validate_mesh(mesh)
    tmap = np.full((raster_height, raster_width), -1, dtype=np.int32)
    verts = mesh.landmarks[mesh.triangles]
    for tid in range(mesh.triangle_count):
        tri = verts[tid]
        x0 = max(int(np.floor(tri[:, 0].min() - 0.5)), 0)
        x1 = min(int(np.ceil(tri[:, 0].max() - 0.5)), raster_width - 1)
        y0 = max(int(np.floor(tri[:, 1].min() - 0.5)), 0)
        y1 = min(int(np.ceil(tri[:, 1].max() - 0.5)), raster_height - 1)
        if x1 < x0 or y1 < y0:
            continue
        xs = np.arange(x0, x1 + 1) + 0.5
        ys = np.arange(y0, y1 + 1) + 0.5
        px, py = np.meshgrid(xs, ys)
        l1, l2, l3 = _barycentric(tri, px, py)
        inside = (l1 >= -_BARY_EPS) & (l2 >= -_BARY_EPS) & (l3 >= -_BARY_EPS)
        block = tmap[y0 : y1 + 1, x0 : x1 + 1]
        write = inside & (block == -1)
        block[write] = tid
    return tmap


def build_canonical_model(
    mesh: FaceMesh, raster_width: int, raster_height: int
) -> CanonicalFaceModel:
    """Validate the mesh, rasterize the triangle lookup, assemble the model."""
    validate_mesh(mesh)
    tmap = rasterize_triangle_map(mesh, raster_width, raster_height)
    return CanonicalFaceModel(mesh, raster_width, raster_height, tmap)


def lookup_triangles(model: CanonicalFaceModel, points: np.ndarray) -> np.ndarray:
    """Triangle id of the pixel containing each point; -1 outside raster or
    outside the rasterized face."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    ids = np.full(pts.shape[0], -1, dtype=np.int32)
    cols = np.floor(pts[:, 0]).astype(np.int64)
    rows = np.floor(pts[:, 1]).astype(np.int64)
    ok = (
        (cols >= 0)
        & (cols < model.raster_width)
        & (rows >= 0)
        & (rows < model.raster_height)
    )
    ids[ok] = model.triangle_index_map[rows[ok], cols[ok]]
    return ids


def locate_points(model: CanonicalFaceModel, points: np.ndarray) -> np.ndarray:
    """Like lookup_triangles, but points whose own pixel is unassigned (face
    rim, where the pixel center falls just outside) are tested exactly
    against the triangles of the 3x3 pixel neighborhood; the lowest
    containing id wins. Still -1 for genuinely outside points."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    ids = lookup_triangles(model, pts)
    misses = np.flatnonzero(ids < 0)
    if misses.size == 0:
        return ids
    tmap = model.triangle_index_map
    verts = model.mesh.landmarks[model.mesh.triangles]
    h, w = tmap.shape
    for i in misses:
        x, y = pts[i]
        cx = int(np.clip(np.floor(x), 0, w - 1))
        cy = int(np.clip(np.floor(y), 0, h - 1))
        cand = set()
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                px, py = cx + dx, cy + dy
                if 0 <= px < w and 0 <= py < h and tmap[py, px] >= 0:
                    cand.add(int(tmap[py, px]))
        for tid in sorted(cand):
            l1, l2, l3 = _barycentric(verts[tid], x, y)
            if l1 >= -_BARY_EPS and l2 >= -_BARY_EPS and l3 >= -_BARY_EPS:
                ids[i] = tid
                break
    return ids


# ---------------------------------------------------------------------------
# sampling and warping

def sample_bilinear(pixels: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Bilinear sample at index coordinates (pixel centers at integers);
    samples outside the image clamp to the border."""
    h, w = pixels.shape
    x = np.clip(x, 0.0, w - 1.0)
    y = np.clip(y, 0.0, h - 1.0)
    x0 = np.clip(np.floor(x).astype(np.int64), 0, w - 2) if w > 1 else np.zeros_like(x, np.int64)
    y0 = np.clip(np.floor(y).astype(np.int64), 0, h - 2) if h > 1 else np.zeros_like(y, np.int64)
    fx = x - x0
    fy = y - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    v00 = pixels[y0, x0]
    v01 = pixels[y0, x1]
    v10 = pixels[y1, x0]
    v11 = pixels[y1, x1]
    top = v00 + (v01 - v00) * fx
    bot = v10 + (v11 - v10) * fx
    return top + (bot - top) * fy


def warp_to_canonical(
    frame: FrameImage, frame_mesh: FaceMesh, model: CanonicalFaceModel
) -> FrameImage:
    """Pull every face pixel of the canonical raster from the frame through
    the chart inverse of its containing triangle; non-face pixels are 0."""
    if not np.array_equal(frame_mesh.triangles, model.mesh.triangles):
        raise MeshMismatch(
            f"frame mesh has {frame_mesh.triangle_count} triangles, "
            f"model has {model.mesh.triangle_count}"
        )
    charts = build_charts(frame_mesh, model.mesh)
    tmap = model.triangle_index_map
    out = np.zeros((model.raster_height, model.raster_width), dtype=np.float64)
    flat = tmap.ravel()
    order = np.argsort(flat, kind="stable")
    sorted_ids = flat[order]
    start = np.searchsorted(sorted_ids, 0)  # skip the -1 block
    if start == flat.size:
        return FrameImage(out, frame.frame_index)
    ids = sorted_ids[start:]
    pix = order[start:]
    rows = pix // model.raster_width
    cols = pix % model.raster_width
    cx = cols + 0.5
    cy = rows + 0.5
    boundaries = np.flatnonzero(np.diff(ids)) + 1
    groups = np.split(np.arange(ids.size), boundaries)
    inv = charts.inverses
    src = frame.pixels
    flat_out = out.ravel()
    for g in groups:
        tid = int(ids[g[0]])
        m = inv[tid]
        fx = m[0, 0] * cx[g] + m[0, 1] * cy[g] + m[0, 2]
        fy = m[1, 0] * cx[g] + m[1, 1] * cy[g] + m[1, 2]
        vals = sample_bilinear(src, fx - 0.5, fy - 0.5)
        flat_out[pix[g]] = np.clip(vals, 0.0, 1.0)
    return FrameImage(out, frame.frame_index)


def map_point_to_frame(
    point, charts: ChartSet, model: CanonicalFaceModel
) -> np.ndarray:
    """Inverse-chart image of a canonical point in frame coordinates."""
    pt = np.asarray(point, dtype=np.float64)
    tid = int(locate_points(model, pt[None, :])[0])
    if tid < 0:
        raise OutsideFace(pt)
    return apply_affine(charts.inverses[tid], pt)


# ---------------------------------------------------------------------------
# dense landmark sampling

@dataclass(frozen=True)
class DenseLandmarkSet:
    """Subdivided canonical landmarks tracked by the flow stage.

    `edges` are the subdivided-triangulation edges; they define the graph the
    spectral magnitude filter runs on.
    """

    points: np.ndarray
    home_triangle: np.ndarray
    barycentric: np.ndarray
    edges: np.ndarray

    def __post_init__(self):
        n = self.points.shape[0]
        if self.home_triangle.shape != (n,) or self.barycentric.shape != (n, 3):
            raise ValueError("dense landmark arrays disagree in length")
        object.__setattr__(self, "points", frozen_array(self.points))
        object.__setattr__(self, "home_triangle", frozen_array(self.home_triangle, np.int32))
        object.__setattr__(self, "barycentric", frozen_array(self.barycentric))
        object.__setattr__(self, "edges", frozen_array(self.edges, np.int32))

    @property
    def count(self) -> int:
        return self.points.shape[0]


def densify_landmarks(model: CanonicalFaceModel, subdivision_depth: int) -> DenseLandmarkSet:
    """Barycentric-grid sampling of every canonical triangle.

    Depth s places grid points (a/s, b/s, c/s), a+b+c = s, in each triangle.
    Points on shared vertices/edges are deduplicated by exact integer
    barycentric identity, so counts are deterministic. Depths 0 and 1 both
    return exactly the mesh vertices.
    """
    if subdivision_depth < 0:
        raise ValueError("subdivision_depth must be >= 0")
    s = max(int(subdivision_depth), 1)
    mesh = model.mesh
    lm = mesh.landmarks
    tris = np.asarray(mesh.triangles)

    index_of = {}
    points = []
    home = []
    bary = []

    def key_for(tri, a, b, c):
        parts = [(int(v), int(w)) for v, w in zip(tri, (a, b, c)) if w > 0]
        parts.sort()
        return tuple(parts)

    grid = [
        (a, b, s - a - b)
        for a in range(s, -1, -1)
        for b in range(s - a, -1, -1)
    ]
    tri_point_ids = np.empty((len(tris), len(grid)), dtype=np.int64)
    for tid, tri in enumerate(tris):
        p0, p1, p2 = lm[tri[0]], lm[tri[1]], lm[tri[2]]
        for gi, (a, b, c) in enumerate(grid):
            k = key_for(tri, a, b, c)
            idx = index_of.get(k)
            if idx is None:
                idx = len(points)
                index_of[k] = idx
                wa, wb, wc = a / s, b / s, c / s
                points.append(wa * p0 + wb * p1 + wc * p2)
                home.append(tid)
                bary.append((wa, wb, wc))
            tri_point_ids[tid, gi] = idx

    # Edges of the subdivided lattice: neighbors at unit lattice distance.
    grid_pos = {g: i for i, g in enumerate(grid)}
    local_edges = []
    for gi, (a, b, c) in enumerate(grid):
        for da, db, dc in ((-1, 1, 0), (-1, 0, 1), (0, -1, 1)):
            nb = (a + da, b + db, c + dc)
            gj = grid_pos.get(nb)
            if gj is not None:
                local_edges.append((gi, gj))
    local_edges = np.asarray(local_edges, dtype=np.int64)
    edge_set = set()
    for tid in range(len(tris)):
        ids = tri_point_ids[tid]
        for gi, gj in local_edges:
            a, b = int(ids[gi]), int(ids[gj])
            edge_set.add((a, b) if a < b else (b, a))
    edges = np.array(sorted(edge_set), dtype=np.int32)

    pts = np.asarray(points, dtype=np.float64)
    _check_no_duplicates(pts)
    return DenseLandmarkSet(
        pts,
        np.asarray(home, dtype=np.int32),
        np.asarray(bary, dtype=np.float64),
        edges,
    )


def _check_no_duplicates(pts: np.ndarray, tol: float = 1e-6):
    from scipy.spatial import cKDTree

    if pts.shape[0] < 2:
        return
    pairs = cKDTree(pts).query_pairs(tol)
    if pairs:
        a, b = next(iter(pairs))
        raise ValueError(f"dense landmarks {a} and {b} coincide within {tol}")
