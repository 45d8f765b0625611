"""Synthetic texture, motion, and classification fixtures.

Image pairs with known ground-truth flow are built by resampling: for a
displacement field d, the second frame is I2 = I1 o (id + d)^(-1), so a
point at p in frame 1 appears at p + d(p) in frame 2. The inverse map is
found by fixed-point iteration (the fields used here are small and smooth).
Resampling uses its own bilinear code, not the package's.
"""

import numpy as np
from scipy.ndimage import gaussian_filter

from facekin import DisplacementField, FrameImage


def smooth_noise(height, width, seed=0, sigma=1.8, lo=0.05, hi=0.95):
    """Band-limited random texture with strong local gradients."""
    rng = np.random.default_rng(seed)
    img = gaussian_filter(rng.standard_normal((height, width)), sigma)
    img -= img.min()
    img /= img.max()
    return lo + (hi - lo) * img


def _bilinear_grid(img, x, y):
    h, w = img.shape
    x = np.clip(x, 0.0, w - 1.0)
    y = np.clip(y, 0.0, h - 1.0)
    x0 = np.clip(np.floor(x).astype(int), 0, w - 2)
    y0 = np.clip(np.floor(y).astype(int), 0, h - 2)
    fx = x - x0
    fy = y - y0
    return (
        img[y0, x0] * (1 - fx) * (1 - fy)
        + img[y0, x0 + 1] * fx * (1 - fy)
        + img[y0 + 1, x0] * (1 - fx) * fy
        + img[y0 + 1, x0 + 1] * fx * fy
    )


def shift_image(img, dx, dy):
    """Second frame for constant ground-truth flow (dx, dy)."""
    h, w = img.shape
    xs, ys = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    return _bilinear_grid(img, xs - dx, ys - dy)


def warp_image_by_field(img, field_fn, iters=12):
    """Second frame for ground-truth flow d(p) = field_fn(p).

    Solves g(y) = y - d(g(y)) by fixed-point iteration, then samples
    I2(y) = I1(g(y)).
    """
    h, w = img.shape
    xs, ys = np.meshgrid(np.arange(w, dtype=float) + 0.5, np.arange(h, dtype=float) + 0.5)
    pts = np.column_stack([xs.ravel(), ys.ravel()])
    g = pts.copy()
    for _ in range(iters):
        g = pts - field_fn(g)
    return _bilinear_grid(img, (g[:, 0] - 0.5).reshape(h, w), (g[:, 1] - 0.5).reshape(h, w))


def affine_image(img, a, t):
    """Second frame when the scene moves by the affine map x -> a x + t:
    I2(y) = I1(a^-1 (y - t)). Exact for affine motion up to resampling."""
    h, w = img.shape
    a = np.asarray(a, dtype=float)
    t = np.asarray(t, dtype=float)
    a_inv = np.linalg.inv(a)
    xs, ys = np.meshgrid(np.arange(w, dtype=float) + 0.5, np.arange(h, dtype=float) + 0.5)
    px = a_inv[0, 0] * (xs - t[0]) + a_inv[0, 1] * (ys - t[1])
    py = a_inv[1, 0] * (xs - t[0]) + a_inv[1, 1] * (ys - t[1])
    return _bilinear_grid(img, px - 0.5, py - 0.5)


def sinusoid_field(amplitude, wavelength, phase=(0.0, 1.2)):
    """Smooth displacement field with max magnitude <= amplitude * sqrt(2)."""

    def fn(pts):
        x = pts[:, 0]
        y = pts[:, 1]
        dx = amplitude * np.sin(2 * np.pi * y / wavelength + phase[0])
        dy = amplitude * np.cos(2 * np.pi * x / wavelength + phase[1])
        return np.column_stack([dx, dy])

    return fn


def frames_from(*arrays):
    return [FrameImage(np.clip(a, 0.0, 1.0), i) for i, a in enumerate(arrays)]


# ---------------------------------------------------------------------------
# classification fixtures

def make_displacement_dataset(
    points,
    descriptors,
    n_per_class=40,
    n_fields=6,
    noise=0.2,
    signal=2.0,
    seed=123,
):
    """Three-class synthetic dataset of raw displacement-field sequences.

    Each class activates one descriptor region: points near the class's
    descriptor move with magnitude `signal` in a class-specific direction,
    plus isotropic Gaussian noise of sigma = noise * signal everywhere.
    Returns (sequences, labels): each sequence is a list of
    DisplacementField.
    """
    rng = np.random.default_rng(seed)
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    m = descriptors.count
    assert m >= 3, "need at least three descriptors for three classes"
    class_dirs = [0.0, 2.0 * np.pi / 3.0, -2.0 * np.pi / 3.0]
    sequences = []
    labels = []
    kernels = np.exp(
        -descriptors.gamma
        * np.sum((pts[:, None, :] - descriptors.positions[None, :, :]) ** 2, axis=2)
    )
    for cls in range(3):
        env = kernels[:, cls]
        direction = np.array([np.cos(class_dirs[cls]), np.sin(class_dirs[cls])])
        for _ in range(n_per_class):
            fields = []
            for t in range(n_fields):
                ramp = np.sin(np.pi * (t + 1) / (n_fields + 1))
                base = signal * ramp * env[:, None] * direction[None, :]
                jitter = rng.normal(0.0, noise * signal, size=(n, 2))
                fields.append(
                    DisplacementField(
                        (t, t + 1), pts, base + jitter, np.ones(n, dtype=bool)
                    )
                )
            sequences.append(fields)
            labels.append(f"class{cls}")
    return sequences, labels
