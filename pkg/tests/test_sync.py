import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import frame_stream, meta, pose_stream, session
from g0forge.errors import EmptyStream, NoTemporalOverlap
from g0forge.sync import FRAME_GAP, align_streams, resample_poses, sample_stream, tick_grid
from g0forge.transforms import axis_angle_quat, quat_angle, slerp

unit = st.floats(-1, 1, allow_nan=False)


def random_quats(rng, n):
    q = rng.normal(size=(n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def test_knot_identity_on_tick_grid(rng):
    t = tick_grid(0.0, 3.0, 30.0)
    left = pose_stream(t, rng.normal(size=(len(t), 3)), random_quats(rng, len(t)), rng.uniform(0, 1, len(t)))
    right = pose_stream(t, rng.normal(size=(len(t), 3)), random_quats(rng, len(t)))
    seq = align_streams(session(left, right, {"ego": frame_stream(t)}), 30.0)
    assert len(seq) == len(t)
    for k, tick in enumerate(seq.ticks):
        assert tick.poses["left"] is left[k]
        assert tick.poses["right"] is right[k]
        assert tick.flags == frozenset()


def test_frame_match_bound_120_30():
    pose_t = np.arange(1201) / 120.0
    video_t = np.arange(301) / 30.0
    s = session(pose_stream(pose_t), pose_stream(pose_t), {"ego": frame_stream(video_t)}, meta(120.0, 30.0))
    seq = align_streams(s, 30.0)
    assert all(FRAME_GAP not in tk.flags for tk in seq.ticks)
    assert max(abs(tk.frames["ego"].t - tk.t) for tk in seq.ticks) <= 1 / 240 + 1e-12
    # a finer grid still matches every tick within half a video period
    fine = align_streams(s, 120.0)
    assert all(FRAME_GAP not in tk.flags for tk in fine.ticks)
    assert max(abs(tk.frames["ego"].t - tk.t) for tk in fine.ticks) <= 1 / 60 + 1e-9


def test_linear_midpoint():
    left = pose_stream([0.0, 1.0], [[0, 0, 0], [1, 0, 0]])
    out, flags = sample_stream(left, [0.5])
    assert out[0].pose.translation == (0.5, 0.0, 0.0)
    assert flags == [False]


def test_slerp_midpoint_45_degrees():
    q90 = axis_angle_quat((0, 0, 1), math.pi / 2)
    stream = pose_stream([0.0, 1.0], quats=[(1, 0, 0, 0), q90])
    mid = resample_poses(stream, 2.0)[1]
    assert mid.t == 0.5
    expect = axis_angle_quat((0, 0, 1), math.pi / 4)
    assert np.allclose(mid.pose.rotation, expect, atol=1e-9)
    assert quat_angle((1, 0, 0, 0), mid.pose.rotation) == pytest.approx(math.pi / 4, abs=1e-9)


def test_resample_own_knots_is_identity(rng):
    t = np.arange(50) / 10.0
    stream = pose_stream(t, rng.normal(size=(50, 3)), random_quats(rng, 50))
    assert resample_poses(stream, 10.0) == list(stream)


def test_resample_is_idempotent(rng):
    t = np.cumsum(rng.uniform(0.005, 0.02, 200))
    stream = pose_stream(t, rng.normal(size=(200, 3)), random_quats(rng, 200), rng.uniform(0, 1, 200))
    once = resample_poses(stream, 30.0)
    twice = resample_poses(once, 30.0)
    assert once == twice


def test_grid_is_intersection_and_count():
    left = pose_stream(np.arange(0.0, 5.0, 0.01))
    right = pose_stream(np.arange(1.03, 7.0, 0.01))
    seq = align_streams(session(left, right, {"ego": frame_stream(np.arange(0, 7, 1 / 30))}), 30.0)
    start, end = right[0].t, left[-1].t
    assert seq.ticks[0].t == start
    assert seq.ticks[-1].t <= end
    assert len(seq) == math.floor((end - start) * 30.0) + 1
    assert np.allclose(np.diff(seq.times), 1 / 30, atol=1e-6)


def test_missing_frames_flag_gap():
    t = np.arange(121) / 60.0
    video = [x for x in np.arange(61) / 30.0 if not 0.9 < x < 1.3]
    seq = align_streams(session(pose_stream(t), pose_stream(t), {"ego": frame_stream(video)}), 30.0)
    gaps = [tk.t for tk in seq.ticks if FRAME_GAP in tk.flags]
    assert gaps and all(0.9 < g < 1.3 for g in gaps)
    assert all(tk.frames["ego"] is None for tk in seq.ticks if FRAME_GAP in tk.flags)


def test_camera_order_does_not_matter():
    t = np.arange(61) / 30.0
    frames = {"ego": frame_stream(t), "b_wrist": frame_stream(t, "b_wrist"), "a_wrist": frame_stream(t, "a_wrist")}
    s1 = session(pose_stream(t), pose_stream(t), frames)
    s2 = session(pose_stream(t), pose_stream(t), dict(reversed(list(frames.items()))))
    assert align_streams(s1) == align_streams(s2)


def test_empty_stream_and_no_overlap():
    with pytest.raises(EmptyStream):
        align_streams(session(pose_stream([0.0]), pose_stream([0.0, 1.0])))
    with pytest.raises(NoTemporalOverlap):
        align_streams(session(pose_stream([0.0, 1.0]), pose_stream([2.0, 3.0])))
    with pytest.raises(EmptyStream):
        resample_poses(pose_stream([0.0]), 30.0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(unit, unit, unit, unit), min_size=2, max_size=2), st.floats(0, 1))
def test_slerp_properties(qs, u):
    a, b = (np.array(q) for q in qs)
    if np.linalg.norm(a) < 1e-3 or np.linalg.norm(b) < 1e-3:
        return
    a, b = a / np.linalg.norm(a), b / np.linalg.norm(b)
    q = slerp(a, b, u)
    assert abs(np.linalg.norm(q) - 1.0) <= 1e-9
    span = quat_angle(a, b)
    assert quat_angle(a, q) <= span + 1e-9
    assert quat_angle(q, b) <= span + 1e-9


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=6, max_size=6), st.floats(0.01, 1.0), st.floats(0, 1))
def test_translation_within_bracket_hull(xyz, dt, u):
    stream = pose_stream([0.0, dt], [xyz[:3], xyz[3:]])
    mid = sample_stream(stream, [u * dt])[0][0]
    for axis in range(3):
        lo, hi = sorted((xyz[axis], xyz[axis + 3]))
        assert lo - 1e-12 <= mid.pose.translation[axis] <= hi + 1e-12
