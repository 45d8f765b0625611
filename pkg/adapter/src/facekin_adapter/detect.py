"""Face-mesh detection backends.

A backend provides a fixed triangulation over its 468 landmark indices and
a `detect(pixels, frame_index)` method returning the (468, 2) landmark
positions for one frame. The canonical model emitted alongside the
per-frame landmarks is the mean detected shape rescaled into the raster
(see emit.py), so it is consistent with whichever backend produced the
detections.

`MomentBackend` is the built-in deterministic detector: it locates a single
bright face region by intensity moments and places the packaged canonical
layout through the matching affine frame. It exists so the adapter (and its
committed fixtures) run without any neural dependency and always emits the
468-landmark / 854-triangle topology.

`MediapipeBackend` wraps the neural detector when the optional `mediapipe`
extra is installed; its triangulation is reconstructed from the detector's
tessellation, so its triangle count follows the detector version.
"""

from __future__ import annotations

import numpy as np

from .topology import LANDMARK_COUNT, canonical_layout, whitened_layout


class AdapterError(Exception):
    pass


class NoFaceDetected(AdapterError):
    def __init__(self, frame_index: int):
        super().__init__(f"no face detected in frame {frame_index}")
        self.frame_index = frame_index


class MultipleFaces(AdapterError):
    def __init__(self, frame_index: int, count: int):
        super().__init__(f"{count} faces detected in frame {frame_index}, expected 1")
        self.frame_index = frame_index


class MomentBackend:
    """Single-face detector from intensity moments.

    Pixels brighter than (mean + 0.25 * std) vote for the face; their
    centroid and second moments give the face frame. The canonical layout is
    whitened to unit point covariance, so mapping it through
    sqrtm(covariance) reproduces the detected region's moment structure (a
    uniform ellipse with semi-axes a, b has covariance diag(a^2, b^2) / 4,
    and the whitened layout is itself a uniform ellipse of covariance I).
    """

    name = "moment"
    version = "1"
    min_support = 0.002  # fraction of pixels that must vote

    def __init__(self):
        self.triangles = canonical_layout()[1]

    def detect(self, pixels: np.ndarray, frame_index: int) -> np.ndarray:
        img = np.asarray(pixels, dtype=np.float64)
        h, w = img.shape
        weights = np.clip(img - (img.mean() + 0.25 * img.std()), 0.0, None)
        support = int((weights > 0).sum())
        mass = weights.sum()
        if support < self.min_support * h * w or mass <= 0:
            raise NoFaceDetected(frame_index)
        ys, xs = np.mgrid[0:h, 0:w]
        coords = np.column_stack([(xs + 0.5).ravel(), (ys + 0.5).ravel()])
        wflat = weights.ravel() / mass
        center = wflat @ coords
        diff = coords - center
        cov = (diff * wflat[:, None]).T @ diff
        vals, vecs = np.linalg.eigh(cov)
        if vals.min() <= 1e-9:
            raise NoFaceDetected(frame_index)
        # Deterministic eigenvector signs: largest component positive.
        for j in range(2):
            k = int(np.argmax(np.abs(vecs[:, j])))
            if vecs[k, j] < 0:
                vecs[:, j] = -vecs[:, j]
        if np.linalg.det(vecs) < 0:
            vecs[:, 0] = -vecs[:, 0]
        frame_axes = vecs @ np.diag(np.sqrt(vals)) @ vecs.T
        return center + whitened_layout() @ frame_axes.T


class MediapipeBackend:
    """Neural 468-landmark detector (optional dependency)."""

    name = "mediapipe"

    def __init__(self):  # pragma: no cover - optional extra
        try:
            import mediapipe as mp
        except ImportError as exc:
            raise AdapterError(
                "mediapipe is not installed; use the built-in backend or "
                "install facekin-adapter[mediapipe]"
            ) from exc
        self._mp = mp
        self.version = getattr(mp, "__version__", "unknown")
        self._mesh = mp.solutions.face_mesh.FaceMesh(
            static_image_mode=True, max_num_faces=2, refine_landmarks=False
        )
        self.triangles = self._tessellation_triangles()

    def _tessellation_triangles(self):  # pragma: no cover - optional extra
        edges = self._mp.solutions.face_mesh_connections.FACEMESH_TESSELATION
        adj = {}
        for a, b in edges:
            adj.setdefault(a, set()).add(b)
            adj.setdefault(b, set()).add(a)
        tris = set()
        for a, b in edges:
            for c in adj[a] & adj[b]:
                tris.add(tuple(sorted((a, b, c))))
        return np.array(sorted(tris), dtype=np.int32)

    def detect(self, pixels, frame_index):  # pragma: no cover - optional extra
        img8 = np.clip(np.asarray(pixels) * 255.0, 0, 255).astype(np.uint8)
        rgb = np.repeat(img8[:, :, None], 3, axis=2)
        res = self._mesh.process(rgb)
        faces = res.multi_face_landmarks or []
        if not faces:
            raise NoFaceDetected(frame_index)
        if len(faces) > 1:
            raise MultipleFaces(frame_index, len(faces))
        h, w = pixels.shape
        return np.array(
            [[lm.x * w, lm.y * h] for lm in faces[0].landmark[:LANDMARK_COUNT]]
        )


def make_backend(name: str):
    if name == "moment":
        return MomentBackend()
    if name == "mediapipe":
        return MediapipeBackend()
    if name == "auto":
        try:
            return MediapipeBackend()
        except AdapterError:
            return MomentBackend()
    raise AdapterError(f"unknown backend {name!r}")
