"""facekin-extract: run a face-mesh detector over a frame directory and emit
the landmark + canonical model files the measurement pipeline consumes.

    facekin-extract --input frames/ --out-landmarks lm.json \
        --out-canonical canon.json --raster 512 [--backend auto|moment|mediapipe]
"""

from __future__ import annotations

import argparse
import sys

from .detect import AdapterError, make_backend
from .emit import extract


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="facekin-extract", description=__doc__)
    parser.add_argument("--input", required=True, help="directory of PGM/PNG frames")
    parser.add_argument("--out-landmarks", required=True)
    parser.add_argument("--out-canonical", required=True)
    parser.add_argument("--raster", type=int, default=512)
    parser.add_argument(
        "--backend",
        choices=("auto", "moment", "mediapipe"),
        default="auto",
        help="detector backend (auto prefers mediapipe when installed)",
    )
    args = parser.parse_args(argv)
    try:
        backend = make_backend(args.backend)
        detections = extract(
            args.input, backend, args.out_landmarks, args.out_canonical, args.raster
        )
    except (AdapterError, ValueError, OSError) as exc:
        print(f"facekin-extract: error: {exc}", file=sys.stderr)
        return 2
    print(
        f"facekin-extract: {len(detections)} frame(s) via {backend.name} backend, "
        f"{len(detections[0])} landmarks, {len(backend.triangles)} triangles"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
