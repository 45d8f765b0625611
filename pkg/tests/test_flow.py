import numpy as np
import pytest

from facekin import DisplacementField, FrameImage, PipelineConfig, flow_sequence, lucas_kanade
from facekin.errors import SchemaError, SizeMismatch
from facekin.flow import read_fields_csv, write_fields_csv

import synthdata


CFG = PipelineConfig()


def _grid_points(lo, hi, step):
    xs = np.arange(lo, hi, step, dtype=float)
    gx, gy = np.meshgrid(xs, xs)
    return np.column_stack([gx.ravel(), gy.ravel()])


def test_zero_motion_fixed_point():
    img = synthdata.smooth_noise(128, 128, seed=0)
    frame = FrameImage(img)
    pts = _grid_points(20, 108, 8)
    field = lucas_kanade(frame, FrameImage(img, 1), pts, CFG)
    assert field.valid.all()
    assert np.max(np.abs(field.displacements)) <= 1e-6


def test_integer_shift_recovered():
    img = synthdata.smooth_noise(128, 128, seed=1)
    shifted = synthdata.shift_image(img, 2.0, 1.0)
    pts = _grid_points(28, 100, 6)
    field = lucas_kanade(FrameImage(img), FrameImage(shifted, 1), pts, CFG)
    assert field.valid.all()
    err = np.hypot(
        field.displacements[:, 0] - 2.0, field.displacements[:, 1] - 1.0
    )
    assert np.max(err) < 0.1


def test_shift_sweep_error_budget():
    img = synthdata.smooth_noise(160, 160, seed=2)
    pts = _grid_points(40, 120, 8)
    errors = []
    for u, v in [(-3, 0), (0, 3), (2, -2), (3, 3), (-1, -3), (1, 2)]:
        shifted = synthdata.shift_image(img, float(u), float(v))
        field = lucas_kanade(FrameImage(img), FrameImage(shifted, 1), pts, CFG)
        err = np.hypot(
            field.displacements[:, 0] - u, field.displacements[:, 1] - v
        )[field.valid]
        errors.append(err)
    err = np.concatenate(errors)
    assert np.median(err) < 0.05
    assert np.percentile(err, 95) < 0.2


def test_constant_region_rejected():
    img = synthdata.smooth_noise(128, 128, seed=3)
    img[40:88, 40:88] = 0.5
    frame = FrameImage(img)
    field = lucas_kanade(frame, FrameImage(img, 1), np.array([[64.0, 64.0]]), CFG)
    assert not field.valid[0]
    np.testing.assert_array_equal(field.displacements[0], (0.0, 0.0))


def test_pyramid_consistency_small_motion():
    img = synthdata.smooth_noise(160, 160, seed=4)
    shifted = synthdata.shift_image(img, 0.5, 0.0)
    pts = _grid_points(40, 120, 10)
    multi = lucas_kanade(FrameImage(img), FrameImage(shifted, 1), pts, CFG)
    single = lucas_kanade(
        FrameImage(img), FrameImage(shifted, 1), pts,
        PipelineConfig(lk_pyramid_levels=1),
    )
    diff = np.hypot(
        multi.displacements[:, 0] - single.displacements[:, 0],
        multi.displacements[:, 1] - single.displacements[:, 1],
    )
    assert np.max(diff[multi.valid & single.valid]) < 0.05


def test_size_mismatch():
    a = FrameImage(np.zeros((8, 8)))
    b = FrameImage(np.zeros((8, 10)), 1)
    with pytest.raises(SizeMismatch):
        lucas_kanade(a, b, np.array([[4.0, 4.0]]), CFG)


def test_flow_sequence_counts_and_zero_fields():
    img = synthdata.smooth_noise(96, 96, seed=5)
    frames = synthdata.frames_from(img, img, img, img)
    pts = _grid_points(24, 72, 8)
    fields = flow_sequence(frames, pts, CFG)
    assert len(fields) == 3
    for f in fields:
        assert np.max(np.abs(f.displacements)) <= 1e-6
    assert [f.frame_pair for f in fields] == [(0, 1), (1, 2), (2, 3)]


def test_flow_sequence_moving_fixture():
    img = synthdata.smooth_noise(128, 128, seed=6)
    step = synthdata.shift_image(img, 1.0, 0.0)
    frames = synthdata.frames_from(img, step, step)
    pts = _grid_points(32, 96, 8)
    fields = flow_sequence(frames, pts, CFG)
    ok = fields[0].valid
    assert np.median(np.abs(fields[0].displacements[ok, 0] - 1.0)) < 0.05
    assert np.max(np.abs(fields[1].displacements)) <= 1e-6


def test_flow_sequence_anchor_first_sums_motion():
    img = synthdata.smooth_noise(128, 128, seed=7)
    one = synthdata.shift_image(img, 1.0, 0.0)
    two = synthdata.shift_image(img, 2.0, 0.0)
    frames = synthdata.frames_from(img, one, two)
    pts = _grid_points(32, 96, 8)
    anchored = flow_sequence(frames, pts, CFG, anchor="first")
    assert [f.frame_pair for f in anchored] == [(0, 1), (0, 2)]
    ok = anchored[1].valid
    assert np.median(np.abs(anchored[1].displacements[ok, 0] - 2.0)) < 0.05


def test_determinism_and_thread_invariance():
    img = synthdata.smooth_noise(128, 128, seed=8)
    shifted = synthdata.shift_image(img, 1.5, -0.75)
    pts = _grid_points(30, 100, 3)  # enough points for several chunks
    a = lucas_kanade(FrameImage(img), FrameImage(shifted, 1), pts, CFG, threads=1)
    b = lucas_kanade(FrameImage(img), FrameImage(shifted, 1), pts, CFG, threads=1)
    c = lucas_kanade(FrameImage(img), FrameImage(shifted, 1), pts, CFG, threads=4)
    assert a.displacements.tobytes() == b.displacements.tobytes()
    assert a.displacements.tobytes() == c.displacements.tobytes()
    assert a.valid.tobytes() == c.valid.tobytes()


def test_invalid_points_carry_zero():
    pts = np.array([[5.0, 5.0]])
    field = DisplacementField((0, 1), pts, np.array([[3.0, 4.0]]), np.array([False]))
    np.testing.assert_array_equal(field.displacements, [[0.0, 0.0]])


def test_fields_csv_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    pts = rng.uniform(0, 64, (12, 2))
    fields = [
        DisplacementField(
            (i, i + 1), pts, rng.normal(0, 1, (12, 2)), rng.random(12) > 0.2
        )
        for i in range(3)
    ]
    path = tmp_path / "fields.csv"
    write_fields_csv(fields, path, comments=("hello",))
    loaded = read_fields_csv(path)
    assert len(loaded) == 3
    for a, b in zip(fields, loaded):
        assert a.frame_pair == b.frame_pair
        assert a.points.tobytes() == b.points.tobytes()
        assert a.displacements.tobytes() == b.displacements.tobytes()
        assert a.valid.tobytes() == b.valid.tobytes()


def test_fields_csv_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("frame,stuff\n")
    with pytest.raises(SchemaError):
        read_fields_csv(path)
