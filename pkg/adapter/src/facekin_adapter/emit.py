"""Frame ingestion and emission of the pipeline's landmark file formats.

The emitted JSON schemas are the contract with the measurement pipeline:

  landmarks: {"version":1, "triangles":[[i,j,k]...],
              "frames":[{"index":0,"width":W,"height":H,
                         "landmarks":[[x,y]...]}...]}
  canonical: same, exactly one frame entry whose width/height equal the
             added "raster_width"/"raster_height".

The canonical model is the mean detected shape rescaled to fit the raster
with a small margin, so it matches the backend that produced the
detections. A `.meta.json` sidecar pins the backend name and version.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image


def load_frame_gray(path) -> np.ndarray:
    """One grayscale frame in [0, 1] from a PGM or PNG file."""
    p = Path(path)
    if p.suffix.lower() == ".pgm":
        return _read_pgm(p)
    img = Image.open(p)
    img.load()
    if img.mode != "L":
        img = img.convert("L")
    return np.asarray(img, dtype=np.float64) / 255.0


def _read_pgm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    fields = []
    pos = 0
    while len(fields) < 4:
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        if data[pos : pos + 1].isspace():
            pos += 1
            continue
        end = pos
        while not data[end : end + 1].isspace():
            end += 1
        fields.append(data[pos:end])
        pos = end
    if fields[0] != b"P5" or int(fields[3]) != 255:
        raise ValueError(f"{path}: only binary 8-bit PGM supported")
    w, h = int(fields[1]), int(fields[2])
    raw = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos + 1)
    return raw.reshape(h, w).astype(np.float64) / 255.0


def list_frames(input_dir) -> list:
    root = Path(input_dir)
    names = sorted(
        f for f in root.iterdir() if f.suffix.lower() in (".pgm", ".png")
    )
    if not names:
        raise ValueError(f"no PGM/PNG frames in {input_dir}")
    return names


def extract(input_dir, backend, out_landmarks, out_canonical, raster: int = 512):
    """Detect landmarks on every frame and write the landmark file, the
    canonical model file, and the metadata sidecar. Returns per-frame
    landmark arrays."""
    paths = list_frames(input_dir)
    detections = []
    sizes = []
    for i, p in enumerate(paths):
        img = load_frame_gray(p)
        detections.append(backend.detect(img, i))
        sizes.append((img.shape[1], img.shape[0]))

    triangles = [[int(v) for v in t] for t in backend.triangles]
    landmarks_doc = {
        "version": 1,
        "triangles": triangles,
        "frames": [
            {
                "index": i,
                "width": sizes[i][0],
                "height": sizes[i][1],
                "landmarks": [[float(x), float(y)] for x, y in det],
            }
            for i, det in enumerate(detections)
        ],
    }
    _dump(landmarks_doc, out_landmarks)

    canonical = _canonical_from_mean(np.mean(detections, axis=0), raster)
    canonical_doc = {
        "version": 1,
        "raster_width": raster,
        "raster_height": raster,
        "triangles": triangles,
        "frames": [
            {
                "index": 0,
                "width": raster,
                "height": raster,
                "landmarks": [[float(x), float(y)] for x, y in canonical],
            }
        ],
    }
    _dump(canonical_doc, out_canonical)

    meta = {
        "backend": backend.name,
        "backend_version": backend.version,
        "frame_count": len(paths),
        "landmark_count": len(detections[0]),
        "triangle_count": len(triangles),
        "raster": raster,
    }
    _dump(meta, str(out_landmarks) + ".meta.json")
    return detections


def _canonical_from_mean(mean_shape: np.ndarray, raster: int, margin: float = 0.05):
    lo = mean_shape.min(axis=0)
    hi = mean_shape.max(axis=0)
    span = float(max(hi[0] - lo[0], hi[1] - lo[1]))
    if span <= 0:
        raise ValueError("degenerate mean shape")
    scale = raster * (1.0 - 2.0 * margin) / span
    center = (lo + hi) / 2.0
    return (mean_shape - center) * scale + raster / 2.0


def _dump(doc, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
