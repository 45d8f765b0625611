"""Regenerate the committed sample clip and adapter outputs.

Run from the adapter directory:  python3 tests/make_fixtures.py

The clip is a deterministic synthetic face stand-in: a bright textured
ellipse drifting and slowly rotating over a dim textured background. The
committed landmark/canonical files are the adapter's output on that clip
with the built-in backend; test_contract.py asserts a fresh run reproduces
them byte-exactly.
"""

from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

FIXTURES = Path(__file__).parent / "fixtures"
FRAME_COUNT = 8
WIDTH, HEIGHT = 160, 128
RASTER = 128


def _texture(shape, seed, lo, hi, sigma):
    rng = np.random.default_rng(seed)
    img = gaussian_filter(rng.standard_normal(shape), sigma)
    img -= img.min()
    img /= img.max()
    return lo + (hi - lo) * img


def render_clip():
    bg = _texture((HEIGHT, WIDTH), seed=100, lo=0.05, hi=0.30, sigma=2.5)
    face_tex = _texture((HEIGHT, WIDTH), seed=101, lo=0.60, hi=0.95, sigma=1.6)
    ys, xs = np.mgrid[0:HEIGHT, 0:WIDTH]
    frames = []
    for t in range(FRAME_COUNT):
        cx = WIDTH / 2 + 4.0 * np.sin(2 * np.pi * t / FRAME_COUNT)
        cy = HEIGHT / 2 + 2.5 * np.cos(2 * np.pi * t / FRAME_COUNT)
        ang = np.deg2rad(4.0) * np.sin(2 * np.pi * t / FRAME_COUNT)
        ca, sa = np.cos(ang), np.sin(ang)
        u = ((xs + 0.5) - cx) * ca + ((ys + 0.5) - cy) * sa
        v = -((xs + 0.5) - cx) * sa + ((ys + 0.5) - cy) * ca
        rho = np.sqrt((u / 34.0) ** 2 + (v / 44.0) ** 2)
        mask = np.clip((1.0 - rho) / 0.04, 0.0, 1.0)  # soft 1-px rim
        frames.append(bg * (1.0 - mask) + face_tex * mask)
    return frames


def write_pgm(arr, path):
    data = np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + data.tobytes())


def main():
    clip_dir = FIXTURES / "clip"
    clip_dir.mkdir(parents=True, exist_ok=True)
    for t, frame in enumerate(render_clip()):
        write_pgm(frame, clip_dir / f"frame_{t:03d}.pgm")

    from facekin_adapter.cli import main as extract_main

    rc = extract_main([
        "--input", str(clip_dir),
        "--out-landmarks", str(FIXTURES / "landmarks.json"),
        "--out-canonical", str(FIXTURES / "canonical.json"),
        "--raster", str(RASTER),
        "--backend", "moment",
    ])
    if rc != 0:
        raise SystemExit(rc)
    print(f"fixtures written under {FIXTURES}")


if __name__ == "__main__":
    main()
