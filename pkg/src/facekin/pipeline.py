"""End-to-end orchestration: warp -> flow -> polar/spectral/wavelet/kernel
smoothing -> inverse mapping -> overlays -> features, plus the single-stage
runners the CLI exposes. Stage runs that consume the intermediate CSVs
reproduce the one-shot pipeline outputs byte-exactly.
"""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import features as feat
from . import flow as flowmod
from . import geometry, ingest, render, smoothing
from .core import (
    CanonicalFaceModel,
    FrameImage,
    MuscleDescriptorSet,
    PipelineConfig,
    VideoSequence,
)
from .errors import SchemaError


class StageFailure(Exception):
    """Wraps an error with the pipeline stage it occurred in."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


class _Stage:
    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageFailure):
            raise StageFailure(self.name, exc) from exc
        return False


def _parallel_map(fn, items, threads: int):
    items = list(items)
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# ---------------------------------------------------------------------------
# descriptor helpers and digests

def uniform_descriptors(
    model: CanonicalFaceModel, m: int, gamma: float | None = None
) -> MuscleDescriptorSet:
    """Uniform-weight descriptor set for runs without an external weights
    file: m anchors at evenly spaced canonical mesh landmarks, weight 1."""
    if m < 1:
        raise ValueError("need at least one descriptor")
    n = model.mesh.landmark_count
    idx = (np.arange(m, dtype=np.int64) * n) // m
    positions = model.mesh.landmarks[idx]
    if gamma is None:
        gamma = PipelineConfig().resolved_gamma(model.raster_width)
    names = tuple(f"m{i:02d}" for i in range(m))
    return MuscleDescriptorSet(names, positions, np.ones(m), gamma)


def config_digest(config: PipelineConfig) -> str:
    blob = json.dumps(config.as_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def descriptor_digest(descriptors: MuscleDescriptorSet) -> str:
    blob = json.dumps(
        ingest.descriptor_doc(descriptors), sort_keys=True, separators=(",", ":")
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _raw_comments(config):
    return (f"config=sha256:{config_digest(config)}",)


def _smoothed_comments(config, k_eff, gamma, descriptors):
    return (
        f"config=sha256:{config_digest(config)}",
        f"smoothing: spectral_k={k_eff} gamma={gamma!r} "
        f"threshold={config.wavelet_threshold_mode} "
        f"descriptors=sha256:{descriptor_digest(descriptors)}",
    )


def _write_overlay_sidecar(out_dir, config, skipped):
    doc = {
        "config_digest": config_digest(config),
        "overlay_scale": config.overlay_scale,
        "skipped_points_per_field": list(skipped),
    }
    with open(Path(out_dir) / "overlay_metadata.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# shared assembly steps

def resolve_descriptors(
    model: CanonicalFaceModel,
    descriptors_path=None,
    uniform_m: int | None = None,
    gamma_override: float | None = None,
    config: PipelineConfig | None = None,
) -> MuscleDescriptorSet:
    """Load or synthesize the descriptor set; --gamma overrides the file."""
    if descriptors_path is not None:
        dset = ingest.load_descriptors(
            descriptors_path, raster=(model.raster_width, model.raster_height)
        )
        if gamma_override is not None:
            dset = MuscleDescriptorSet(
                dset.names, dset.positions, dset.weights, gamma_override
            )
        return dset
    if uniform_m is None:
        raise SchemaError(
            "no descriptor file given; pass one or use --uniform-descriptors M"
        )
    gamma = gamma_override
    if gamma is None and config is not None:
        gamma = config.resolved_gamma(model.raster_width)
    return uniform_descriptors(model, uniform_m, gamma)


def warp_sequence(
    video: VideoSequence, meshes, model: CanonicalFaceModel, threads: int = 1
):
    if len(meshes) != video.frame_count:
        raise SchemaError(
            f"{len(meshes)} landmark frames for {video.frame_count} video frames"
        )
    return _parallel_map(
        lambda pair: geometry.warp_to_canonical(pair[0], pair[1], model),
        zip(video.frames, meshes),
        threads,
    )


def spectral_k_effective(config: PipelineConfig, n_points: int) -> int:
    """The configured mode count, clamped to the dense landmark count so the
    default works on small meshes; the achieved value lands in metadata."""
    return min(config.spectral_modes, n_points)


# ---------------------------------------------------------------------------
# one-shot pipeline

@dataclass
class PipelineRun:
    out_dir: Path
    dense: geometry.DenseLandmarkSet
    raw_fields: list
    smoothed_fields: list
    smoothed_parts: list
    mapped: list
    features: feat.SequenceFeatures
    metadata: dict
    elapsed: float = 0.0


def run_pipeline(
    frames_path,
    landmarks_path,
    canonical_path,
    out_dir,
    config: PipelineConfig | None = None,
    descriptors_path=None,
    uniform_m: int | None = None,
    gamma_override: float | None = None,
    anchor: str = "consecutive",
    threads: int = 1,
    emit_canonical: bool = False,
    emit_y4m: bool = False,
    with_heat: bool = False,
    label: str = "",
) -> PipelineRun:
    """Run every stage and write all artifacts under out_dir."""
    t0 = time.monotonic()
    config = config or PipelineConfig()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    with _Stage("ingest"):
        video = ingest.load_frames(frames_path)
        meshes, sizes = ingest.load_landmark_file(landmarks_path)
        model = ingest.load_canonical_model(canonical_path)
        for i, (w, h) in enumerate(sizes):
            if (w, h) != (video.width, video.height):
                raise SchemaError(
                    f"landmark frame {i} declares {w}x{h}, video is "
                    f"{video.width}x{video.height}"
                )
        descriptors = resolve_descriptors(
            model, descriptors_path, uniform_m, gamma_override, config
        )

    with _Stage("warp"):
        canonical_frames = warp_sequence(video, meshes, model, threads)
        if emit_canonical:
            for i, f in enumerate(canonical_frames):
                ingest.save_pgm(f, out / f"canonical_{i:06d}.pgm")

    with _Stage("densify"):
        dense = geometry.densify_landmarks(model, config.subdivision_depth)

    with _Stage("flow"):
        raw_fields = flowmod.flow_sequence(
            canonical_frames, dense, config, anchor=anchor, threads=threads
        )
        flowmod.write_fields_csv(
            raw_fields, out / "raw_fields.csv", comments=_raw_comments(config)
        )

    k_eff = spectral_k_effective(config, dense.count)
    gamma = descriptors.gamma
    with _Stage("smooth"):
        smoothed_fields, smoothed_parts = smoothing.smooth_sequence(
            raw_fields,
            dense.points,
            dense.edges,
            descriptors,
            k_eff,
            config.wavelet_threshold_mode,
        )
        flowmod.write_fields_csv(
            smoothed_fields,
            out / "smoothed_fields.csv",
            comments=_smoothed_comments(config, k_eff, gamma, descriptors),
        )

    with _Stage("overlay"):
        mapped, overlays = render_overlays(
            video, meshes, model, smoothed_fields, config, threads, with_heat
        )
        for t, ov in enumerate(overlays):
            render.write_png(ov.image, out / f"overlay_{t:06d}.png")
        _write_overlay_sidecar(out, config, [m.skipped for m in mapped])
        if emit_y4m:
            gray = [
                FrameImage(ov.image.mean(axis=2) / 255.0, t)
                for t, ov in enumerate(overlays)
            ]
            ingest.save_y4m(gray, out / "overlays.y4m")

    with _Stage("features"):
        seq_features = feat.extract_features(
            polar_parts(smoothed_fields), descriptors, dense.points
        )
        feat.write_features_csv([(seq_features, label)], out / "features.csv")

    metadata = {
        "config_digest": config_digest(config),
        "config": config.as_dict(),
        "anchor": anchor,
        "dense_landmark_count": dense.count,
        "spectral_k_effective": k_eff,
        "gamma": gamma,
        "descriptor_digest": descriptor_digest(descriptors),
        "descriptor_count": descriptors.count,
        "frame_count": video.frame_count,
        "field_count": len(raw_fields),
        "skipped_points_per_field": [m.skipped for m in mapped],
        "magnitude_smoothing": "graph-laplacian-lowpass",
    }
    with open(out / "run_metadata.json", "w", encoding="utf-8") as fh:
        json.dump(metadata, fh, indent=1, sort_keys=True)
        fh.write("\n")

    return PipelineRun(
        out, dense, raw_fields, smoothed_fields, smoothed_parts, mapped,
        seq_features, metadata, time.monotonic() - t0,
    )


def render_overlays(
    video, meshes, model, smoothed_fields, config, threads=1, with_heat=False
):
    """Map each field into its anchor frame's coordinates and draw it."""
    charts_cache = {}

    def charts_for(idx):
        if idx not in charts_cache:
            charts_cache[idx] = geometry.build_charts(meshes[idx], model.mesh)
        return charts_cache[idx]

    mapped = [
        render.field_to_frame(f, charts_for(f.frame_pair[0]), model)
        for f in smoothed_fields
    ]
    overlays = _parallel_map(
        lambda pair: render.render_overlay(
            video.frames[pair[0].frame_pair[0]],
            pair[1],
            config.overlay_scale,
            with_heat,
        ),
        zip(smoothed_fields, mapped),
        threads,
    )
    return mapped, overlays


# ---------------------------------------------------------------------------
# stage runners (consume/produce the documented file formats)

def run_warp_stage(frames_path, landmarks_path, canonical_path, out_dir, threads=1):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with _Stage("ingest"):
        video = ingest.load_frames(frames_path)
        meshes = ingest.load_landmarks(landmarks_path)
        model = ingest.load_canonical_model(canonical_path)
    with _Stage("warp"):
        canonical_frames = warp_sequence(video, meshes, model, threads)
        for i, f in enumerate(canonical_frames):
            ingest.save_pgm(f, out / f"canonical_{i:06d}.pgm")
    return len(canonical_frames)


def run_flow_stage(
    frames_path, landmarks_path, canonical_path, out_csv,
    config=None, anchor="consecutive", threads=1,
):
    config = config or PipelineConfig()
    with _Stage("ingest"):
        video = ingest.load_frames(frames_path)
        meshes = ingest.load_landmarks(landmarks_path)
        model = ingest.load_canonical_model(canonical_path)
    with _Stage("warp"):
        canonical_frames = warp_sequence(video, meshes, model, threads)
    with _Stage("densify"):
        dense = geometry.densify_landmarks(model, config.subdivision_depth)
    with _Stage("flow"):
        fields = flowmod.flow_sequence(
            canonical_frames, dense, config, anchor=anchor, threads=threads
        )
        flowmod.write_fields_csv(fields, out_csv, comments=_raw_comments(config))
    return len(fields)


def polar_parts(fields):
    """Polar view of final smoothed fields, as feature-extraction input.

    The magnitude of a smoothed vector is r'' and its angle is theta'
    (invalid points are zero), so deriving the parts from the Cartesian
    fields keeps staged and one-shot feature runs byte-identical: both
    consume exactly the values the smoothed CSV carries.
    """
    parts = []
    for f in fields:
        polar = smoothing.to_polar(f)
        parts.append(
            smoothing.SmoothedField(
                polar.magnitudes, polar.angles, polar.magnitudes, f.valid
            )
        )
    return parts


def _dense_matching_fields(model, config, fields):
    dense = geometry.densify_landmarks(model, config.subdivision_depth)
    n = fields[0].count
    if dense.count != n:
        raise SchemaError(
            f"field CSV has {n} points but canonical model densifies to "
            f"{dense.count}; check --subdivision"
        )
    if not np.allclose(dense.points, fields[0].points, atol=1e-9):
        raise SchemaError(
            "field CSV point positions do not match the canonical model's "
            "dense landmarks"
        )
    return dense


def run_smooth_stage(
    fields_csv, canonical_path, out_csv,
    config=None, descriptors_path=None, uniform_m=None, gamma_override=None,
):
    config = config or PipelineConfig()
    with _Stage("ingest"):
        fields = flowmod.read_fields_csv(fields_csv)
        model = ingest.load_canonical_model(canonical_path)
        descriptors = resolve_descriptors(
            model, descriptors_path, uniform_m, gamma_override, config
        )
    with _Stage("densify"):
        dense = _dense_matching_fields(model, config, fields)
    k_eff = spectral_k_effective(config, dense.count)
    with _Stage("smooth"):
        smoothed_fields, _ = smoothing.smooth_sequence(
            fields, dense.points, dense.edges, descriptors, k_eff,
            config.wavelet_threshold_mode,
        )
        flowmod.write_fields_csv(
            smoothed_fields, out_csv,
            comments=_smoothed_comments(config, k_eff, descriptors.gamma, descriptors),
        )
    return len(smoothed_fields)


def run_overlay_stage(
    fields_csv, frames_path, landmarks_path, canonical_path, out_dir,
    config=None, threads=1, with_heat=False,
):
    config = config or PipelineConfig()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with _Stage("ingest"):
        fields = flowmod.read_fields_csv(fields_csv)
        video = ingest.load_frames(frames_path)
        meshes = ingest.load_landmarks(landmarks_path)
        model = ingest.load_canonical_model(canonical_path)
    with _Stage("overlay"):
        mapped, overlays = render_overlays(
            video, meshes, model, fields, config, threads, with_heat
        )
        for t, ov in enumerate(overlays):
            render.write_png(ov.image, out / f"overlay_{t:06d}.png")
        skipped = [m.skipped for m in mapped]
        _write_overlay_sidecar(out, config, skipped)
    return skipped


def run_features_stage(
    fields_csv, canonical_path, out_csv,
    config=None, descriptors_path=None, uniform_m=None, gamma_override=None,
    label="",
):
    """Features from a *smoothed* field CSV. The polar components are
    recovered from the Cartesian rows; for fields produced by the smooth
    stage this reproduces r'' and theta' exactly (r'' = |d|, theta' is the
    vector angle)."""
    config = config or PipelineConfig()
    with _Stage("ingest"):
        fields = flowmod.read_fields_csv(fields_csv)
        model = ingest.load_canonical_model(canonical_path)
        descriptors = resolve_descriptors(
            model, descriptors_path, uniform_m, gamma_override, config
        )
    with _Stage("densify"):
        dense = _dense_matching_fields(model, config, fields)
    with _Stage("features"):
        seq = feat.extract_features(polar_parts(fields), descriptors, dense.points)
        feat.write_features_csv([(seq, label)], out_csv)
    return seq
