"""Pyramidal Lucas-Kanade sparse optical flow on canonical frames.

Each tracked point solves the 2x2 normal equations G d = b over a square
window, iterated coarse-to-fine. The pyramid downsamples by 2 after a 5-tap
binomial anti-alias filter. Points are rejected when the texture matrix G is
near-singular (min eigenvalue over window area below `lk_min_eigen`) or when
the tracked position leaves the raster.

All math runs in float64 and is elementwise per point, so results are
bit-identical no matter how the point set is chunked across threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import convolve1d

from .core import FrameImage, PipelineConfig, frozen_array
from .errors import SchemaError, SizeMismatch
from .geometry import DenseLandmarkSet, sample_bilinear

_BINOMIAL5 = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
_CHUNK = 1024


@dataclass(frozen=True)
class DisplacementField:
    """Per dense-landmark flow between one frame pair, canonical coords.

    Invalid points always carry displacement (0, 0) but keep their slot so
    every field over a sequence has the same length.
    """

    frame_pair: tuple
    points: np.ndarray
    displacements: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        disp = np.asarray(self.displacements, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if not (pts.shape == disp.shape and pts.shape[0] == valid.shape[0]):
            raise ValueError("points/displacements/valid lengths differ")
        disp = np.where(valid[:, None], disp, 0.0)
        object.__setattr__(self, "frame_pair", (int(self.frame_pair[0]), int(self.frame_pair[1])))
        object.__setattr__(self, "points", frozen_array(pts))
        object.__setattr__(self, "displacements", frozen_array(disp))
        object.__setattr__(self, "valid", frozen_array(valid, bool))

    @property
    def count(self) -> int:
        return self.points.shape[0]


def build_pyramid(pixels: np.ndarray, levels: int, window: int) -> list:
    """Coarse-to-fine image stack: level 0 is the input, each next level is
    binomial-filtered then 2x subsampled. Levels stop early once another
    halving would leave the coarsest side smaller than twice the window, so
    tiny inputs degrade gracefully."""
    pyr = [np.asarray(pixels, dtype=np.float64)]
    for _ in range(levels - 1):
        prev = pyr[-1]
        if min(prev.shape) < 4 * window:
            break
        sm = convolve1d(prev, _BINOMIAL5, axis=0, mode="reflect")
        sm = convolve1d(sm, _BINOMIAL5, axis=1, mode="reflect")
        pyr.append(sm[::2, ::2])
    return pyr


def _track_points(pyr_prev, pyr_next, pts, config: PipelineConfig):
    """Track (n, 2) index-coordinate points through the pyramids.

    Returns (displacements, valid). The solve follows the standard iterative
    scheme: gradients from the first image, residual against the second
    sampled at the current estimate, update d <- d + G^-1 b until the update
    is below lk_epsilon or lk_max_iters is hit.
    """
    n = pts.shape[0]
    w = config.lk_window
    half = w // 2
    area = float(w * w)
    # Window offsets with a one-pixel border for central differences.
    off = np.arange(-half - 1, half + 2, dtype=np.float64)
    ox, oy = np.meshgrid(off, off)

    d = np.zeros((n, 2), dtype=np.float64)
    valid = np.ones(n, dtype=bool)

    for level in range(len(pyr_prev) - 1, -1, -1):
        prev = pyr_prev[level]
        nxt = pyr_next[level]
        h, wid = prev.shape
        scale = 2.0 ** level
        p = pts / scale
        d *= 2.0  # guess carried up from the coarser level

        px = p[:, 0][:, None, None] + ox[None]
        py = p[:, 1][:, None, None] + oy[None]
        patch = sample_bilinear(prev, px, py)
        ix = (patch[:, 1:-1, 2:] - patch[:, 1:-1, :-2]) * 0.5
        iy = (patch[:, 2:, 1:-1] - patch[:, :-2, 1:-1]) * 0.5
        i0 = patch[:, 1:-1, 1:-1]

        gxx = np.sum(ix * ix, axis=(1, 2))
        gxy = np.sum(ix * iy, axis=(1, 2))
        gyy = np.sum(iy * iy, axis=(1, 2))
        trace = gxx + gyy
        root = np.sqrt(np.maximum((gxx - gyy) ** 2 + 4.0 * gxy * gxy, 0.0))
        min_eigen = 0.5 * (trace - root)
        valid &= min_eigen / area >= config.lk_min_eigen

        det = gxx * gyy - gxy * gxy
        safe_det = np.where(det > 0, det, 1.0)

        active = valid.copy()
        for _ in range(config.lk_max_iters):
            idx = np.flatnonzero(active)
            if idx.size == 0:
                break
            qx = (p[idx, 0] + d[idx, 0])[:, None, None] + ox[None, 1:-1, 1:-1]
            qy = (p[idx, 1] + d[idx, 1])[:, None, None] + oy[None, 1:-1, 1:-1]
            resid = sample_bilinear(nxt, qx, qy) - i0[idx]
            bx = -np.sum(resid * ix[idx], axis=(1, 2))
            by = -np.sum(resid * iy[idx], axis=(1, 2))
            du = (gyy[idx] * bx - gxy[idx] * by) / safe_det[idx]
            dv = (gxx[idx] * by - gxy[idx] * bx) / safe_det[idx]
            d[idx, 0] += du
            d[idx, 1] += dv
            done = np.hypot(du, dv) < config.lk_epsilon
            active[idx[done]] = False

        moved_x = p[:, 0] + d[:, 0]
        moved_y = p[:, 1] + d[:, 1]
        inside = (
            (moved_x >= 0.0)
            & (moved_x <= wid - 1.0)
            & (moved_y >= 0.0)
            & (moved_y <= h - 1.0)
        )
        valid &= inside

    d[~valid] = 0.0
    return d, valid


def lucas_kanade(
    prev: FrameImage,
    next_frame: FrameImage,
    points,
    config: PipelineConfig,
    threads: int = 1,
) -> DisplacementField:
    """Sparse flow from `prev` to `next_frame` at the given canonical
    points. `points` is a DenseLandmarkSet or an (n, 2) array."""
    if prev.pixels.shape != next_frame.pixels.shape:
        raise SizeMismatch(
            f"{prev.pixels.shape} vs {next_frame.pixels.shape}"
        )
    pts = points.points if isinstance(points, DenseLandmarkSet) else np.asarray(points, dtype=np.float64)
    pyr_prev = build_pyramid(prev.pixels, config.lk_pyramid_levels, config.lk_window)
    pyr_next = build_pyramid(next_frame.pixels, config.lk_pyramid_levels, config.lk_window)
    idx_pts = pts - 0.5  # continuous coords -> index coords

    chunks = [idx_pts[i : i + _CHUNK] for i in range(0, len(idx_pts), _CHUNK)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(
                pool.map(lambda c: _track_points(pyr_prev, pyr_next, c, config), chunks)
            )
    else:
        results = [_track_points(pyr_prev, pyr_next, c, config) for c in chunks]
    d = np.concatenate([r[0] for r in results]) if results else np.zeros((0, 2))
    valid = np.concatenate([r[1] for r in results]) if results else np.zeros(0, bool)
    return DisplacementField(
        (prev.frame_index, next_frame.frame_index), pts, d, valid
    )


def flow_sequence(
    frames,
    points,
    config: PipelineConfig,
    anchor: str = "consecutive",
    threads: int = 1,
) -> list:
    """Flow for every frame pair: consecutive (i, i+1) pairs by default, or
    (first, i) pairs with anchor="first". The tracked grid is re-anchored at
    the fixed dense landmarks for every pair (no chaining)."""
    frames = list(frames)
    if len(frames) < 2:
        from .errors import FewerThanTwoFrames

        raise FewerThanTwoFrames(f"got {len(frames)} canonical frame(s)")
    if anchor == "consecutive":
        pairs = [(i, i + 1) for i in range(len(frames) - 1)]
    elif anchor == "first":
        pairs = [(0, i) for i in range(1, len(frames))]
    else:
        raise ValueError(f"anchor must be 'consecutive' or 'first', got {anchor!r}")
    return [
        lucas_kanade(frames[a], frames[b], points, config, threads=threads)
        for a, b in pairs
    ]


# ---------------------------------------------------------------------------
# CSV serialization

_CSV_HEADER = "frame_pair,point_id,x,y,dx,dy,valid"


def write_fields_csv(fields, path, comments=()) -> None:
    """One row per point per pair; floats use shortest round-trip repr."""
    lines = [f"# {c}" for c in comments]
    lines.append(_CSV_HEADER)
    for f in fields:
        a, b = f.frame_pair
        pair = f"{a}:{b}"
        for j in range(f.count):
            x, y = float(f.points[j, 0]), float(f.points[j, 1])
            dx, dy = float(f.displacements[j, 0]), float(f.displacements[j, 1])
            v = 1 if f.valid[j] else 0
            lines.append(f"{pair},{j},{x!r},{y!r},{dx!r},{dy!r},{v}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_fields_csv(path) -> list:
    """Parse a displacement-field CSV back into DisplacementField objects,
    grouped by frame pair in file order."""
    fields = []
    current = None

    def flush():
        if current is not None:
            pair, rows = current
            pts = np.array([(r[1], r[2]) for r in rows])
            disp = np.array([(r[3], r[4]) for r in rows])
            valid = np.array([r[5] for r in rows], dtype=bool)
            ids = [r[0] for r in rows]
            if ids != list(range(len(ids))):
                raise SchemaError(f"{path}: point ids for pair {pair} not dense")
            fields.append(DisplacementField(pair, pts, disp, valid))

    with open(path, "r", encoding="utf-8") as fh:
        header_seen = False
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if not header_seen:
                if line != _CSV_HEADER:
                    raise SchemaError(f"{path}: unexpected header {line!r}")
                header_seen = True
                continue
            parts = line.split(",")
            if len(parts) != 7:
                raise SchemaError(f"{path}: bad row {line!r}")
            a, _, b = parts[0].partition(":")
            try:
                pair = (int(a), int(b))
                row = (
                    int(parts[1]),
                    float(parts[2]),
                    float(parts[3]),
                    float(parts[4]),
                    float(parts[5]),
                    int(parts[6]),
                )
            except ValueError as exc:
                raise SchemaError(f"{path}: bad row {line!r}") from exc
            if row[5] not in (0, 1):
                raise SchemaError(f"{path}: valid flag must be 0 or 1")
            if current is None or current[0] != pair:
                flush()
                current = (pair, [])
            current[1].append(row)
    flush()
    if not fields:
        raise SchemaError(f"{path}: no displacement rows")
    return fields
