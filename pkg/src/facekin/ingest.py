"""On-disk formats: frame sequences (PGM/PNG/Y4M) and the JSON schemas for
landmarks, the canonical model, descriptors, and pipeline config.

All structured files are strict JSON with "version": 1; unknown keys are
rejected. Landmark coordinates are frame-pixel floats (sub-pixel allowed).
8-bit intensities map to floats as byte / 255 exactly.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np
from PIL import Image

from . import geometry
from .core import (
    CanonicalFaceModel,
    FaceMesh,
    FrameImage,
    MuscleDescriptorSet,
    PipelineConfig,
    VideoSequence,
    validate_mesh,
)
from .errors import (
    CountMismatch,
    EmptyDescriptorSet,
    FewerThanTwoFrames,
    SchemaError,
    UnsupportedFormat,
)

_LUMA = (0.299, 0.587, 0.114)  # BT.601


# ---------------------------------------------------------------------------
# frames

def load_frames(path) -> VideoSequence:
    """Load a directory of PGM/PNG frames (lexicographic order) or one Y4M
    stream into a VideoSequence. Color sources are luma-converted."""
    p = Path(path)
    if p.is_file():
        if p.suffix.lower() != ".y4m":
            raise UnsupportedFormat(f"single-file input must be .y4m, got {p.name}")
        frames = _read_y4m(p)
    elif p.is_dir():
        names = sorted(
            f for f in os.listdir(p) if f.lower().endswith((".pgm", ".png"))
        )
        frames = [_read_image(p / name, idx) for idx, name in enumerate(names)]
    else:
        raise UnsupportedFormat(f"no such frame source: {path}")
    if len(frames) < 2:
        raise FewerThanTwoFrames(f"found {len(frames)} frame(s) in {path}")
    return VideoSequence(tuple(frames))


def _read_image(path: Path, index: int) -> FrameImage:
    if path.suffix.lower() == ".pgm":
        return FrameImage(load_pgm(path), index)
    try:
        img = Image.open(path)
        img.load()
    except Exception as exc:
        raise UnsupportedFormat(f"{path.name}: {exc}") from exc
    if img.mode == "L":
        arr = np.asarray(img, dtype=np.float64) / 255.0
    elif img.mode in ("I", "I;16", "I;16B"):
        arr = np.asarray(img, dtype=np.float64) / 65535.0
    elif img.mode in ("RGB", "RGBA"):
        rgb = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
        arr = _LUMA[0] * rgb[..., 0] + _LUMA[1] * rgb[..., 1] + _LUMA[2] * rgb[..., 2]
    else:
        raise UnsupportedFormat(f"{path.name}: unsupported PNG mode {img.mode}")
    return FrameImage(np.clip(arr, 0.0, 1.0), index)


def load_pgm(path) -> np.ndarray:
    """Binary 8-bit PGM (P5); returns float64 intensities byte/255."""
    data = Path(path).read_bytes()
    fields = []
    pos = 0
    while len(fields) < 4:
        if pos >= len(data):
            raise UnsupportedFormat(f"{path}: truncated PGM header")
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        if data[pos : pos + 1].isspace():
            pos += 1
            continue
        end = pos
        while end < len(data) and not data[end : end + 1].isspace():
            end += 1
        fields.append(data[pos:end])
        pos = end
    if fields[0] != b"P5":
        raise UnsupportedFormat(f"{path}: not a binary PGM (P5)")
    width, height, maxval = (int(f) for f in fields[1:])
    if maxval != 255:
        raise UnsupportedFormat(f"{path}: only 8-bit PGM supported (maxval 255)")
    pos += 1  # single whitespace byte after maxval
    raw = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
    if raw.size != width * height:
        raise UnsupportedFormat(f"{path}: truncated PGM pixel data")
    return raw.reshape(height, width).astype(np.float64) / 255.0


def save_pgm(frame: FrameImage, path) -> None:
    """Write a frame as binary 8-bit PGM; intensity v stores round(v*255)."""
    data = np.round(frame.pixels * 255.0).astype(np.uint8)
    header = f"P5\n{frame.width} {frame.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + data.tobytes())


def _read_y4m(path: Path) -> list:
    data = Path(path).read_bytes()
    nl = data.index(b"\n")
    header = data[:nl].decode("ascii", errors="replace")
    if not header.startswith("YUV4MPEG2"):
        raise UnsupportedFormat(f"{path.name}: missing YUV4MPEG2 signature")
    width = height = None
    chroma = "420"
    for tok in header.split()[1:]:
        if tok.startswith("W"):
            width = int(tok[1:])
        elif tok.startswith("H"):
            height = int(tok[1:])
        elif tok.startswith("C"):
            chroma = tok[1:]
    if width is None or height is None:
        raise UnsupportedFormat(f"{path.name}: Y4M header lacks W/H")
    if chroma.startswith("420"):
        chroma_bytes = (width // 2) * (height // 2) * 2
    elif chroma == "mono":
        chroma_bytes = 0
    else:
        raise UnsupportedFormat(f"{path.name}: unsupported Y4M chroma C{chroma}")
    frames = []
    pos = nl + 1
    ysize = width * height
    while pos < len(data):
        fnl = data.index(b"\n", pos)
        if data[pos:fnl].split(b" ")[0] != b"FRAME":
            raise UnsupportedFormat(f"{path.name}: bad FRAME marker at byte {pos}")
        pos = fnl + 1
        if pos + ysize > len(data):
            raise UnsupportedFormat(f"{path.name}: truncated Y4M frame")
        y = np.frombuffer(data, dtype=np.uint8, count=ysize, offset=pos)
        frames.append(
            FrameImage(y.reshape(height, width).astype(np.float64) / 255.0, len(frames))
        )
        pos += ysize + chroma_bytes
    return frames


def save_y4m(frames, path, *, fps: int = 30) -> None:
    """Write grayscale frames as Y4M C420 (chroma planes neutral 128)."""
    frames = list(frames)
    if not frames:
        raise ValueError("no frames to write")
    h, w = frames[0].pixels.shape
    if w % 2 or h % 2:
        raise UnsupportedFormat("Y4M C420 needs even frame dimensions")
    cw, ch = w // 2, h // 2
    neutral = np.full(cw * ch, 128, dtype=np.uint8).tobytes()
    with open(path, "wb") as fh:
        fh.write(f"YUV4MPEG2 W{w} H{h} F{fps}:1 Ip A1:1 C420\n".encode("ascii"))
        for f in frames:
            fh.write(b"FRAME\n")
            fh.write(np.round(f.pixels * 255.0).astype(np.uint8).tobytes())
            fh.write(neutral)
            fh.write(neutral)


# ---------------------------------------------------------------------------
# strict JSON helpers

def _load_json(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: top-level value must be an object")
    return doc


def _require_keys(doc: dict, keys, where: str):
    expected = set(keys)
    got = set(doc)
    if got - expected:
        raise SchemaError(f"{where}: unknown key(s) {sorted(got - expected)}")
    if expected - got:
        raise SchemaError(f"{where}: missing key(s) {sorted(expected - got)}")
    if doc.get("version") != 1 and "version" in expected:
        raise SchemaError(f"{where}: version must be 1, got {doc.get('version')!r}")


def _as_points(values, where: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise SchemaError(f"{where}: expected a list of [x, y] pairs")
    if not np.all(np.isfinite(arr)):
        raise SchemaError(f"{where}: coordinates must be finite")
    return arr


# ---------------------------------------------------------------------------
# landmark files

def load_landmark_file(path):
    """Parse a landmark file; returns (meshes, frame_sizes) where
    frame_sizes is a list of (width, height)."""
    doc = _load_json(path)
    _require_keys(doc, ("version", "triangles", "frames"), str(path))
    return _parse_landmark_doc(doc, str(path))


def _parse_landmark_doc(doc, path):
    triangles = np.asarray(doc["triangles"], dtype=np.int64)
    if triangles.ndim != 2 or triangles.shape[1] != 3 or triangles.shape[0] < 1:
        raise SchemaError(f"{path}: triangles must be a list of [i, j, k]")
    entries = doc["frames"]
    if not isinstance(entries, list) or not entries:
        raise SchemaError(f"{path}: frames must be a non-empty list")
    n_landmarks = None
    meshes = []
    sizes = []
    for pos, entry in enumerate(entries):
        where = f"{path}: frames[{pos}]"
        if not isinstance(entry, dict):
            raise SchemaError(f"{where}: must be an object")
        _require_keys(entry, ("index", "width", "height", "landmarks"), where)
        if entry["index"] != pos:
            raise SchemaError(
                f"{where}: index must be {pos} (dense 0..p-1), got {entry['index']!r}"
            )
        lm = _as_points(entry["landmarks"], where)
        if n_landmarks is None:
            n_landmarks = lm.shape[0]
        elif lm.shape[0] != n_landmarks:
            raise CountMismatch(n_landmarks, lm.shape[0])
        mesh = validate_mesh(FaceMesh(lm, triangles))
        meshes.append(mesh)
        sizes.append((int(entry["width"]), int(entry["height"])))
    return meshes, sizes


def load_landmarks(path) -> list:
    """Per-frame validated FaceMesh list sharing one triangulation."""
    meshes, _ = load_landmark_file(path)
    return meshes


def save_landmark_file(meshes, sizes, path) -> None:
    meshes = list(meshes)
    doc = {
        "version": 1,
        "triangles": [[int(i) for i in t] for t in meshes[0].triangles],
        "frames": [
            {
                "index": i,
                "width": int(w),
                "height": int(h),
                "landmarks": [[float(x), float(y)] for x, y in mesh.landmarks],
            }
            for i, (mesh, (w, h)) in enumerate(zip(meshes, sizes))
        ],
    }
    _dump_json(doc, path)


def load_canonical_model(path) -> CanonicalFaceModel:
    """Canonical model file: landmark schema restricted to one frame entry,
    plus raster_width/raster_height; the triangle lookup is rasterized."""
    doc = _load_json(path)
    _require_keys(
        doc,
        ("version", "triangles", "frames", "raster_width", "raster_height"),
        str(path),
    )
    rw, rh = doc["raster_width"], doc["raster_height"]
    if not (isinstance(rw, int) and isinstance(rh, int) and rw > 0 and rh > 0):
        raise SchemaError(f"{path}: raster_width/raster_height must be positive ints")
    if not isinstance(doc["frames"], list) or len(doc["frames"]) != 1:
        raise SchemaError(f"{path}: canonical model must have exactly one frame entry")
    meshes, sizes = _parse_landmark_doc(doc, str(path))
    if sizes[0] != (rw, rh):
        raise SchemaError(
            f"{path}: frame entry width/height must equal raster dimensions"
        )
    lm = meshes[0].landmarks
    if lm.min() < 0 or lm[:, 0].max() >= rw or lm[:, 1].max() >= rh:
        raise SchemaError(f"{path}: canonical landmarks must lie inside the raster")
    return geometry.build_canonical_model(meshes[0], rw, rh)


def save_canonical_model(model: CanonicalFaceModel, path) -> None:
    doc = {
        "version": 1,
        "raster_width": model.raster_width,
        "raster_height": model.raster_height,
        "triangles": [[int(i) for i in t] for t in model.mesh.triangles],
        "frames": [
            {
                "index": 0,
                "width": model.raster_width,
                "height": model.raster_height,
                "landmarks": [[float(x), float(y)] for x, y in model.mesh.landmarks],
            }
        ],
    }
    _dump_json(doc, path)


# ---------------------------------------------------------------------------
# descriptor files

def load_descriptors(path, raster=None) -> MuscleDescriptorSet:
    """Muscle descriptor file. Weights are taken as given (never normalized:
    the kernel-smoothing formula divides by the count m). If `raster` is
    given as (width, height), positions are checked against it."""
    doc = _load_json(path)
    _require_keys(doc, ("version", "gamma", "descriptors"), str(path))
    entries = doc["descriptors"]
    if not isinstance(entries, list):
        raise SchemaError(f"{path}: descriptors must be a list")
    if not entries:
        raise EmptyDescriptorSet(f"{path}: descriptor list is empty")
    names = []
    positions = []
    weights = []
    for pos, entry in enumerate(entries):
        where = f"{path}: descriptors[{pos}]"
        if not isinstance(entry, dict):
            raise SchemaError(f"{where}: must be an object")
        _require_keys(entry, ("name", "position", "weight"), where)
        names.append(str(entry["name"]))
        positions.append(_as_points([entry["position"]], where)[0])
        weights.append(float(entry["weight"]))
    dset = MuscleDescriptorSet(tuple(names), np.asarray(positions), np.asarray(weights), float(doc["gamma"]))
    if raster is not None:
        rw, rh = raster
        p = dset.positions
        if p.min() < 0 or p[:, 0].max() >= rw or p[:, 1].max() >= rh:
            raise SchemaError(f"{path}: descriptor positions must lie inside the raster")
    return dset


def save_descriptors(dset: MuscleDescriptorSet, path) -> None:
    _dump_json(descriptor_doc(dset), path)


def descriptor_doc(dset: MuscleDescriptorSet) -> dict:
    return {
        "version": 1,
        "gamma": float(dset.gamma),
        "descriptors": [
            {"name": n, "position": [float(x), float(y)], "weight": float(w)}
            for n, (x, y), w in zip(dset.names, dset.positions, dset.weights)
        ],
    }


# ---------------------------------------------------------------------------
# config files

_CONFIG_KEYS = (
    "version",
    "lk_window",
    "lk_pyramid_levels",
    "lk_max_iters",
    "lk_epsilon",
    "lk_min_eigen",
    "spectral_modes",
    "wavelet_threshold_mode",
    "mks_gamma",
    "subdivision_depth",
    "overlay_scale",
)


def load_config(path) -> PipelineConfig:
    """Config file: same strict JSON family; only known keys, all optional."""
    doc = _load_json(path)
    unknown = set(doc) - set(_CONFIG_KEYS)
    if unknown:
        raise SchemaError(f"{path}: unknown key(s) {sorted(unknown)}")
    if doc.get("version", 1) != 1:
        raise SchemaError(f"{path}: version must be 1")
    kwargs = {k: v for k, v in doc.items() if k != "version"}
    try:
        return PipelineConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: {exc}") from exc


def _dump_json(doc: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
