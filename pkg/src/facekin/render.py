"""Map smoothed canonical displacements back into frame coordinates and draw
arrow/heat overlays onto the original frames.

Both endpoints of a vector are mapped through the chart of the origin's
containing triangle; charts agree on shared edges, so this avoids seams for
the sub-pixel vectors typical here. Arrows are drawn with anti-aliased
distance-field lines; colors come from a fixed perceptual ramp (dark
blue-violet through green to yellow) indexed by magnitude.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from .core import FrameImage
from .geometry import CanonicalFaceModel, ChartSet, locate_points

# Perceptual magnitude ramp, low to high; linearly interpolated.
COLOR_RAMP = np.array(
    [
        (0.267004, 0.004874, 0.329415),
        (0.281412, 0.155834, 0.469201),
        (0.244972, 0.287675, 0.537260),
        (0.190631, 0.407061, 0.556089),
        (0.147607, 0.511733, 0.557049),
        (0.119699, 0.618490, 0.536347),
        (0.208030, 0.718701, 0.472873),
        (0.430983, 0.808473, 0.346476),
        (0.709898, 0.868751, 0.169257),
        (0.993248, 0.906157, 0.143936),
    ]
)

MIN_ARROW_PX = 0.1
_LINE_HALFWIDTH = 0.6


@dataclass(frozen=True)
class MappedField:
    """Displacement vectors expressed in one frame's coordinates."""

    origins: np.ndarray
    vectors: np.ndarray
    valid: np.ndarray
    point_ids: np.ndarray
    skipped: int


@dataclass(frozen=True)
class OverlayFrame:
    """A frame plus its rendered displacement annotations."""

    base: FrameImage
    arrows: tuple
    heat: np.ndarray | None
    image: np.ndarray  # (h, w, 3) uint8


def field_to_frame(field, charts: ChartSet, model: CanonicalFaceModel) -> MappedField:
    """Map each canonical point and its displaced endpoint through the
    inverse chart of the point's containing triangle. Points whose pixel
    falls outside the rasterized face are skipped and counted."""
    pts = field.points
    disp = field.displacements
    tids = locate_points(model, pts)
    keep = tids >= 0
    skipped = int((~keep).sum())
    idx = np.flatnonzero(keep)
    t = tids[idx]
    inv = charts.inverses[t]
    a = inv[:, :, :2]
    b = inv[:, :, 2]
    origins = np.einsum("nij,nj->ni", a, pts[idx]) + b
    endpoints = np.einsum("nij,nj->ni", a, pts[idx] + disp[idx]) + b
    return MappedField(
        origins,
        endpoints - origins,
        field.valid[idx],
        idx.astype(np.int32),
        skipped,
    )


def ramp_color(t: np.ndarray) -> np.ndarray:
    """Interpolate the color ramp at t in [0, 1]; returns (..., 3) floats."""
    t = np.clip(np.asarray(t, dtype=np.float64), 0.0, 1.0)
    pos = t * (len(COLOR_RAMP) - 1)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, len(COLOR_RAMP) - 1)
    frac = (pos - lo)[..., None]
    return COLOR_RAMP[lo] * (1.0 - frac) + COLOR_RAMP[hi] * frac


def _draw_segment(img: np.ndarray, p0, p1, color, halfwidth=_LINE_HALFWIDTH):
    """Alpha-blend an anti-aliased segment into an (h, w, 3) float image.
    Coverage falls off linearly over one pixel around the stroke."""
    h, w = img.shape[:2]
    x0 = max(int(np.floor(min(p0[0], p1[0]) - halfwidth - 1)), 0)
    x1 = min(int(np.ceil(max(p0[0], p1[0]) + halfwidth + 1)), w - 1)
    y0 = max(int(np.floor(min(p0[1], p1[1]) - halfwidth - 1)), 0)
    y1 = min(int(np.ceil(max(p0[1], p1[1]) + halfwidth + 1)), h - 1)
    if x1 < x0 or y1 < y0:
        return
    xs = np.arange(x0, x1 + 1) + 0.5
    ys = np.arange(y0, y1 + 1) + 0.5
    px, py = np.meshgrid(xs, ys)
    dx = p1[0] - p0[0]
    dy = p1[1] - p0[1]
    len2 = dx * dx + dy * dy
    if len2 == 0.0:
        dist = np.hypot(px - p0[0], py - p0[1])
    else:
        u = ((px - p0[0]) * dx + (py - p0[1]) * dy) / len2
        u = np.clip(u, 0.0, 1.0)
        dist = np.hypot(px - (p0[0] + u * dx), py - (p0[1] + u * dy))
    cov = np.clip(halfwidth + 0.5 - dist, 0.0, 1.0)
    block = img[y0 : y1 + 1, x0 : x1 + 1]
    block += cov[..., None] * (np.asarray(color) - block)


def _draw_arrow(img, start, end, color):
    _draw_segment(img, start, end, color)
    dx = end[0] - start[0]
    dy = end[1] - start[1]
    length = np.hypot(dx, dy)
    if length <= 0:
        return
    head = min(4.0, max(1.0, 0.3 * length))
    ux, uy = dx / length, dy / length
    # Barbs swept back 30 degrees either side of the shaft.
    c, s = np.cos(np.pi * 5 / 6), np.sin(np.pi * 5 / 6)
    for sgn in (1.0, -1.0):
        bx = ux * c - sgn * uy * s
        by = sgn * ux * s + uy * c
        _draw_segment(img, end, (end[0] + head * bx, end[1] + head * by), color)


def heat_layer(
    shape, origins: np.ndarray, magnitudes: np.ndarray, sigma: float = 6.0
) -> np.ndarray:
    """Per-pixel scalar intensity: Gaussian splats of magnitude at each
    mapped origin, normalized to [0, 1]."""
    h, w = shape
    acc = np.zeros((h, w), dtype=np.float64)
    half = int(np.ceil(3 * sigma))
    for (x, y), mag in zip(origins, magnitudes):
        if mag <= 0:
            continue
        cx = int(np.floor(x))
        cy = int(np.floor(y))
        x0, x1 = max(cx - half, 0), min(cx + half, w - 1)
        y0, y1 = max(cy - half, 0), min(cy + half, h - 1)
        if x1 < x0 or y1 < y0:
            continue
        gx = np.arange(x0, x1 + 1) + 0.5 - x
        gy = np.arange(y0, y1 + 1) + 0.5 - y
        g = np.exp(-(gy[:, None] ** 2 + gx[None, :] ** 2) / (2 * sigma * sigma))
        acc[y0 : y1 + 1, x0 : x1 + 1] += mag * g
    peak = acc.max()
    if peak > 0:
        acc /= peak
    return acc


def render_overlay(
    frame: FrameImage,
    mapped: MappedField,
    overlay_scale: float,
    with_heat: bool = False,
) -> OverlayFrame:
    """Draw magnitude-colored arrows (and optionally a heat underlay) onto
    the frame. Arrows whose drawn length is under 0.1 px are omitted; invalid
    points carry zero vectors and therefore never draw."""
    img = np.repeat(frame.pixels[:, :, None], 3, axis=2).astype(np.float64)

    lengths = np.hypot(mapped.vectors[:, 0], mapped.vectors[:, 1])
    draw = mapped.valid & (lengths * overlay_scale >= MIN_ARROW_PX)
    mags = np.where(draw, lengths, 0.0)

    heat = None
    if with_heat:
        heat = heat_layer(frame.pixels.shape, mapped.origins, mags)
        tint = ramp_color(heat)
        alpha = 0.45 * heat[..., None]
        img += alpha * (tint - img)

    peak = mags.max() if mags.size else 0.0
    arrows = []
    for i in np.flatnonzero(draw):
        start = mapped.origins[i]
        vec = mapped.vectors[i] * overlay_scale
        end = (start[0] + vec[0], start[1] + vec[1])
        color = ramp_color(lengths[i] / peak if peak > 0 else 0.0)
        _draw_arrow(img, start, end, color)
        arrows.append((tuple(start), tuple(mapped.vectors[i]), float(lengths[i])))

    out = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    return OverlayFrame(frame, tuple(arrows), heat, out)


def write_png(image: np.ndarray, path) -> None:
    Image.fromarray(image, mode="RGB").save(path, format="PNG")
