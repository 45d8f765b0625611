"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line. Tolerances are pinned here and nowhere else.

Run with `pytest tests/test_acceptance.py -v -s`.
"""

import time

import numpy as np
import pytest

from facekin import (
    DisplacementField,
    FrameImage,
    MuscleDescriptorSet,
    PipelineConfig,
    SpectralFilter,
    densify_landmarks,
    flow_sequence,
    lucas_kanade,
    mks,
    smooth_sequence,
    warp_to_canonical,
)
from facekin.cli import main
from facekin.features import cross_validate, extract_features
from facekin.ingest import save_canonical_model, save_descriptors, save_landmark_file, save_pgm
from facekin.pipeline import polar_parts, run_pipeline

import meshes
import oracles
import synthdata


def _report(name: str, ok: bool, detail: str = ""):
    status = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {name}: {status}" + (f" ({detail})" if detail else ""))
    assert ok, f"{name}: {detail}"


def _write_inputs(root, model, frames, mesh_per_frame, descriptors=None):
    frames_dir = root / "frames"
    frames_dir.mkdir()
    size = (frames[0].width, frames[0].height)
    for i, f in enumerate(frames):
        save_pgm(f, frames_dir / f"frame_{i:03d}.pgm")
    save_landmark_file(mesh_per_frame, [size] * len(frames), root / "landmarks.json")
    save_canonical_model(model, root / "canonical.json")
    if descriptors is not None:
        save_descriptors(descriptors, root / "descriptors.json")
    return frames_dir


# ---------------------------------------------------------------------------
# 1. synthetic end-to-end recovery

E2E_MEDIAN_TOL = 0.1
E2E_P95_TOL = 0.3
E2E_RUNTIME_S = 60.0


def test_a1_synthetic_end_to_end_recovery(tmp_path):
    model = meshes.face_model_468()
    raster = model.raster_width
    img = synthdata.smooth_noise(raster, raster, seed=42)

    # Smooth interior displacement, max ~3 px, tapering to zero at the face
    # rim (the canonical face outline is fixed, so rim motion must vanish).
    center = np.array([raster / 2, raster / 2 + 0.04 * raster])
    radii = np.array([0.33 * raster, 0.41 * raster])
    base = synthdata.sinusoid_field(2.1, raster / 2.2)

    def field_fn(pts):
        rel = (pts - center) / radii
        rho = np.sqrt(np.sum(rel * rel, axis=1))
        envelope = np.clip((1.0 - rho) / 0.3, 0.0, 1.0)[:, None]
        return base(pts) * envelope

    moved = synthdata.warp_image_by_field(img, field_fn)
    frames = synthdata.frames_from(img, moved)

    dense_probe = densify_landmarks(model, 3)
    truth = field_fn(dense_probe.points)
    assert np.hypot(truth[:, 0], truth[:, 1]).max() <= 3.0

    root = tmp_path
    _write_inputs(root, model, frames, [model.mesh] * 2)
    dset = MuscleDescriptorSet(
        ("all",), np.array([center]), np.array([1.0]), 1e-12
    )
    save_descriptors(dset, root / "descriptors.json")

    config = PipelineConfig(
        spectral_modes=dense_probe.count,  # full basis: projection = identity
        wavelet_threshold_mode="none",
    )
    t0 = time.monotonic()
    run = run_pipeline(
        root / "frames",
        root / "landmarks.json",
        root / "canonical.json",
        root / "out",
        config=config,
        descriptors_path=root / "descriptors.json",
        threads=1,
    )
    elapsed = time.monotonic() - t0

    field = run.smoothed_fields[0]
    ok = field.valid
    err = np.hypot(
        field.displacements[ok, 0] - truth[ok, 0],
        field.displacements[ok, 1] - truth[ok, 1],
    )
    med = float(np.median(err))
    p95 = float(np.percentile(err, 95))
    _report(
        "synthetic-end-to-end-recovery",
        med < E2E_MEDIAN_TOL and p95 < E2E_P95_TOL and elapsed < E2E_RUNTIME_S,
        f"median={med:.4f}px p95={p95:.4f}px valid={int(ok.sum())}/{field.count} "
        f"runtime={elapsed:.1f}s",
    )


# ---------------------------------------------------------------------------
# 2. head-motion cancellation

HEAD_MOTION_MEDIAN_TOL = 0.15


def test_a2_head_motion_cancellation():
    model = meshes.face_model_468()
    frame_size = 640
    offset = np.array([64.0, 40.0])  # integer: frame 1 warp resamples exactly
    mesh1 = meshes.translated_mesh(model.mesh, *offset)

    img1 = synthdata.smooth_noise(frame_size, frame_size, seed=43)
    angle = np.deg2rad(5.0)
    rot = np.array(
        [[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]]
    )
    face_center = mesh1.landmarks.mean(axis=0)
    shift = np.array([8.0, -6.0])
    t = face_center - rot @ face_center + shift
    mesh2 = meshes.affine_mesh(mesh1, rot, t)
    img2 = synthdata.affine_image(img1, rot, t)

    canon1 = warp_to_canonical(FrameImage(img1, 0), mesh1, model)
    canon2 = warp_to_canonical(FrameImage(img2, 1), mesh2, model)
    dense = densify_landmarks(model, 3)
    field = lucas_kanade(canon1, canon2, dense, PipelineConfig())
    mags = np.hypot(field.displacements[:, 0], field.displacements[:, 1])
    med = float(np.median(mags[field.valid]))
    _report(
        "head-motion-cancellation",
        med < HEAD_MOTION_MEDIAN_TOL,
        f"median residual={med:.4f}px over {int(field.valid.sum())} valid points "
        f"(5deg rotation + (8,-6)px translation)",
    )


# ---------------------------------------------------------------------------
# 3. smoothing-stack identity degeneration

STACK_IDENTITY_TOL = 1e-6


def test_a3_smoothing_stack_identity():
    model = meshes.small_face_model()
    dense = densify_landmarks(model, 2)
    n = dense.count
    rng = np.random.default_rng(44)
    fields = []
    for t in range(8):
        valid = rng.random(n) > 0.08
        fields.append(
            DisplacementField(
                (t, t + 1), dense.points, rng.normal(0.0, 1.5, (n, 2)), valid
            )
        )
    dset = MuscleDescriptorSet(
        ("one",), np.array([[32.0, 32.0]]), np.array([1.0]), 1e-15
    )
    smoothed, _ = smooth_sequence(
        fields, dense.points, dense.edges, dset, spectral_k=n, wavelet_mode="none"
    )
    worst = max(
        float(np.max(np.abs(out.displacements - raw.displacements)))
        for raw, out in zip(fields, smoothed)
    )
    _report(
        "smoothing-stack-identity",
        worst < STACK_IDENTITY_TOL,
        f"max |final - raw| = {worst:.2e} over 8 fields with invalid points",
    )


# ---------------------------------------------------------------------------
# 4. kernel-gate invariant suite

MKS_CASES = 1000
MKS_EXACT_TOL = 1e-12


def test_a4_mks_invariants():
    rng = np.random.default_rng(45)
    hom_worst = 0.0
    bound_ok = True
    zero_ok = True
    for _ in range(MKS_CASES):
        n = int(rng.integers(1, 40))
        m = int(rng.integers(1, 8))
        pts = rng.uniform(0, 200, (n, 2))
        gamma = float(rng.uniform(1e-5, 0.2))
        dset = MuscleDescriptorSet(
            tuple(f"d{i}" for i in range(m)),
            rng.uniform(0, 200, (m, 2)),
            np.ones(m),
            gamma,
        )
        r = rng.uniform(0, 10, n)
        alpha = float(rng.uniform(0, 4))
        scaled = mks(alpha * r, pts, dset)
        direct = alpha * mks(r, pts, dset)
        denom = np.maximum(np.abs(direct), 1.0)
        hom_worst = max(hom_worst, float(np.max(np.abs(scaled - direct) / denom)))
        out = mks(r, pts, dset)
        bound_ok &= bool(np.all(out >= 0.0) and np.all(out <= r + MKS_EXACT_TOL))
        # Zero-distance identity: put a point exactly on descriptor 0, m = 1.
        one = MuscleDescriptorSet(("z",), dset.positions[:1], np.ones(1), gamma)
        rj = float(rng.uniform(0, 10))
        got = mks(np.array([rj]), dset.positions[:1], one)[0]
        zero_ok &= abs(got - rj) <= MKS_EXACT_TOL * max(1.0, rj)
    _report(
        "mks-invariants",
        hom_worst <= MKS_EXACT_TOL and bound_ok and zero_ok,
        f"{MKS_CASES} cases: homogeneity worst rel err {hom_worst:.2e}, "
        f"uniform-weight bound {'ok' if bound_ok else 'violated'}, "
        f"zero-distance {'ok' if zero_ok else 'violated'}",
    )


# ---------------------------------------------------------------------------
# 5. spectral projector suite

SPECTRAL_IDEMPOTENCE_TOL = 1e-8
SPECTRAL_ORACLE_TOL = 1e-7


def test_a5_spectral_projector_suite():
    rng = np.random.default_rng(46)
    idem_worst = 0.0
    energy_ok = True
    const_worst = 0.0
    oracle_worst = 0.0
    sizes = [24, 90, 230, 500]
    for i, n_total in enumerate(sizes):
        mesh = meshes.disk_mesh(
            n_boundary=max(8, n_total // 12),
            n_total=n_total,
            center=(100.0, 100.0),
            radii=(80.0, 70.0),
            seed=i,
        )
        edges = mesh.edges
        n = mesh.landmark_count
        # Pick k at a clear spectral gap so the projector is well defined.
        lap = np.zeros((n, n))
        for a, b in edges:
            lap[a, a] += 1
            lap[b, b] += 1
            lap[a, b] -= 1
            lap[b, a] -= 1
        vals = np.linalg.eigh(lap)[0]
        gaps = np.diff(np.sort(vals))
        want = max(2, n // 6)
        k = int(
            min(
                range(1, n - 1),
                key=lambda j: (gaps[j - 1] < 1e-6, abs(j - want)),
            )
        )
        filt = SpectralFilter(n, edges, k)
        r = rng.normal(0, 1, n)
        once = filt.project(r)
        twice = filt.project(once)
        idem_worst = max(idem_worst, float(np.max(np.abs(twice - once))))
        energy_ok &= np.linalg.norm(once) <= np.linalg.norm(r) + 1e-12
        const = np.full(n, 2.75)
        const_worst = max(
            const_worst, float(np.max(np.abs(filt.project(const) - const)))
        )
        full = SpectralFilter(n, edges, n).project(r)
        const_worst = max(const_worst, float(np.max(np.abs(full - r))))
        expected = oracles.laplacian_projector(n, edges, k) @ r
        oracle_worst = max(oracle_worst, float(np.max(np.abs(once - expected))))
    _report(
        "spectral-projector-suite",
        idem_worst < SPECTRAL_IDEMPOTENCE_TOL
        and energy_ok
        and const_worst < 1e-9
        and oracle_worst < SPECTRAL_ORACLE_TOL,
        f"meshes {sizes}: idempotence {idem_worst:.2e}, "
        f"constant/full-basis {const_worst:.2e}, oracle gap {oracle_worst:.2e}",
    )


# ---------------------------------------------------------------------------
# 6. sparse-flow suite

LK_ZERO_TOL = 1e-6
LK_MEDIAN_TOL = 0.05
LK_P95_TOL = 0.2


def test_a6_lucas_kanade_suite():
    cfg = PipelineConfig()
    img = synthdata.smooth_noise(160, 160, seed=47)
    xs = np.arange(40, 121, 8, dtype=float)
    gx, gy = np.meshgrid(xs, xs)
    pts = np.column_stack([gx.ravel(), gy.ravel()])

    zero = lucas_kanade(FrameImage(img), FrameImage(img, 1), pts, cfg)
    zero_worst = float(np.max(np.abs(zero.displacements)))

    errors = []
    for u, v in [(1, 0), (0, -2), (3, 0), (2, 2), (-3, 1), (0.5, 1.5), (-1.25, -2.5)]:
        shifted = synthdata.shift_image(img, float(u), float(v))
        field = lucas_kanade(FrameImage(img), FrameImage(shifted, 1), pts, cfg)
        err = np.hypot(
            field.displacements[:, 0] - u, field.displacements[:, 1] - v
        )[field.valid]
        errors.append(err)
    err = np.concatenate(errors)
    med = float(np.median(err))
    p95 = float(np.percentile(err, 95))
    _report(
        "lucas-kanade-suite",
        zero_worst <= LK_ZERO_TOL and med < LK_MEDIAN_TOL and p95 < LK_P95_TOL,
        f"zero-motion {zero_worst:.2e}, shifts<=3px median {med:.4f}px p95 {p95:.4f}px",
    )


# ---------------------------------------------------------------------------
# 7. classification analogue

CV_ACCURACY_FLOOR = 0.95


def test_a7_classification_analogue():
    model = meshes.small_face_model(raster=64, n_boundary=12, n_total=40)
    dense = densify_landmarks(model, 3)
    pts = dense.points
    positions = np.array([[20.0, 22.0], [44.0, 22.0], [32.0, 48.0]])
    gamma = 0.02

    def dset_with_weights(w):
        return MuscleDescriptorSet(("a", "b", "c"), positions, np.asarray(w, float), gamma)

    uniform = dset_with_weights([1.0, 1.0, 1.0])
    sequences, labels = synthdata.make_displacement_dataset(
        pts, uniform, n_per_class=40, n_fields=6, noise=0.2, signal=2.0, seed=48
    )

    def featurize(descriptor_sets):
        rows = []
        for seq, dset in zip(sequences, descriptor_sets):
            smoothed, _ = smooth_sequence(
                seq, pts, dense.edges, dset, spectral_k=min(16, dense.count)
            )
            rows.append(extract_features(polar_parts(smoothed), dset, pts).values)
        return np.asarray(rows)

    uniform_rows = featurize([uniform] * len(sequences))
    acc_uniform = cross_validate(uniform_rows, labels, k=10)

    informed = []
    for lab in labels:  # labels are class0/class1/class2
        w = np.ones(3)
        w[int(lab[-1])] = 2.0
        informed.append(dset_with_weights(w))
    informed_rows = featurize(informed)
    acc_informed = cross_validate(informed_rows, labels, k=10)

    _report(
        "classification-analogue",
        acc_uniform >= CV_ACCURACY_FLOOR and acc_informed >= acc_uniform,
        f"120 sequences, noise 20%: uniform 10-fold CV {acc_uniform:.3f}, "
        f"weighted {acc_informed:.3f} (weighted >= uniform mirrors the "
        f"informed-weights ordering)",
    )


# ---------------------------------------------------------------------------
# 8. determinism across thread counts

def test_a8_thread_determinism(tmp_path):
    model = meshes.small_face_model(raster=128, n_boundary=20, n_total=80)
    img = synthdata.smooth_noise(128, 128, seed=49)
    frames = synthdata.frames_from(
        img,
        synthdata.shift_image(img, 0.7, -0.4),
        synthdata.shift_image(img, 1.4, -0.8),
    )
    _write_inputs(tmp_path, model, frames, [model.mesh] * 3)

    outs = {}
    for threads in (1, 8):
        out = tmp_path / f"out_t{threads}"
        rc = main([
            "pipeline",
            "--frames", str(tmp_path / "frames"),
            "--landmarks", str(tmp_path / "landmarks.json"),
            "--canonical", str(tmp_path / "canonical.json"),
            "--uniform-descriptors", "5",
            "--out", str(out),
            "--threads", str(threads),
            "--emit-canonical",
        ])
        assert rc == 0
        outs[threads] = {
            p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.is_file()
        }
    same = outs[1] == outs[8]
    _report(
        "thread-determinism",
        same,
        f"{len(outs[1])} artifacts byte-identical across --threads 1 and 8",
    )
