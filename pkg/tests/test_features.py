"""Feature extraction: kinematic features, summaries, dimension contracts."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rehabcoach.errors import GeometryError, InsufficientDataError
from rehabcoach.features import (
    COMP_FEATURE_NAMES,
    MOUTH_DROP_TORSO,
    ROM_FEATURE_NAMES,
    SMOOTHNESS_FEATURE_NAMES,
    SUMMARY_STATS,
    FeatureMatrix,
    FeatureVector,
    acceleration,
    arm_length,
    compensation_features,
    compensation_matrix,
    joint_angle,
    rom_features,
    smoothness_features,
    summarize,
    target_point,
    velocity,
    wrist_accel_zero_crossings,
    zero_crossing_ratio,
)
from rehabcoach.skeleton import (
    Arm,
    Exercise,
    Joint,
    MotionClip,
    Side,
    SkeletonFrame,
    torso_length,
)

from helpers import clip_from_tracks as _clip_from_tracks
from helpers import rest_pose as _rest_pose


# ---------------------------------------------------------------------------
# zero crossings
# ---------------------------------------------------------------------------

def test_zero_crossing_oracles():
    assert zero_crossing_ratio([1.0, 2.0, -3.0, -4.0]) == pytest.approx(1 / 3)
    assert zero_crossing_ratio([1.0, -1.0, 1.0, -1.0, 1.0]) == pytest.approx(1.0)
    # zeros inherit the previous sign: one flip over two gaps
    assert zero_crossing_ratio([1.0, 0.0, -1.0]) == pytest.approx(0.5)
    assert zero_crossing_ratio([2.0, 2.0, 2.0]) == pytest.approx(0.0)
    assert zero_crossing_ratio([0.0, 0.0, 1.0]) == pytest.approx(0.0)


def test_zero_crossing_needs_two_samples():
    with pytest.raises(InsufficientDataError):
        zero_crossing_ratio([1.0])


def test_sinusoid_zero_crossing_rate():
    # a pure f Hz tone sampled at 30 Hz flips sign about 2f times a second
    fps, f, n = 30.0, 4.0, 300
    t = np.arange(n) / fps
    zcr = zero_crossing_ratio(np.sin(2 * np.pi * f * t + 0.1))
    expected = 2 * f / fps
    assert abs(zcr - expected) <= 0.1 * expected


# ---------------------------------------------------------------------------
# summaries
# ---------------------------------------------------------------------------

def test_summarize_oracle():
    m = FeatureMatrix(("a",), np.array([[0.0], [2.0]]))
    out = summarize(m)
    assert out.names == ("a_max", "a_min", "a_range", "a_mean", "a_std")
    np.testing.assert_allclose(out.values, [2.0, 0.0, 2.0, 1.0, 1.0])


def test_summarize_ordering_and_lookup():
    m = FeatureMatrix(("a", "b"), np.array([[1.0, 10.0], [3.0, 30.0]]))
    out = summarize(m)
    assert out["a_max"] == 3.0
    assert out["b_min"] == 10.0
    assert out["b_range"] == 20.0
    assert out.names[:5] == tuple(f"a_{s}" for s in SUMMARY_STATS)


def test_summarize_empty_matrix():
    with pytest.raises(InsufficientDataError):
        summarize(FeatureMatrix(("a",), np.zeros((0, 1))))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=40))
def test_summarize_identities(values):
    out = summarize(FeatureMatrix(("x",), np.asarray(values).reshape(-1, 1)))
    assert out["x_max"] >= out["x_mean"] >= out["x_min"]
    assert out["x_range"] == pytest.approx(out["x_max"] - out["x_min"])
    assert out["x_std"] >= 0.0
    assert out["x_std"] == pytest.approx(float(np.std(values)))


# ---------------------------------------------------------------------------
# dimension contracts
# ---------------------------------------------------------------------------

def test_feature_counts_on_generated_clip(clean_clip, arm):
    rom = rom_features(clean_clip, arm)
    smo = smoothness_features(clean_clip, arm)
    comp = compensation_matrix(clean_clip, arm)
    assert rom.values.shape == (clean_clip.n_frames, 6)
    assert smo.values.shape == (clean_clip.n_frames, 12)
    assert comp.values.shape == (clean_clip.n_frames, 9)
    assert len(summarize(rom).values) == 30
    assert len(summarize(smo).values) == 60
    assert len(COMP_FEATURE_NAMES) == 9
    assert rom.names == ROM_FEATURE_NAMES
    assert smo.names == SMOOTHNESS_FEATURE_NAMES


def test_feature_matrix_shape_guard():
    with pytest.raises(ValueError):
        FeatureMatrix(("a", "b"), np.zeros((4, 3)))
    with pytest.raises(ValueError):
        FeatureVector(("a",), np.zeros(2))


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------

def test_joint_angle_oracles():
    b = np.zeros(3)
    assert joint_angle([1, 0, 0], b, [0, 1, 0]) == pytest.approx(90.0)
    assert joint_angle([1, 0, 0], b, [-1, 0, 0]) == pytest.approx(180.0)
    assert joint_angle([1, 0, 0], b, [1, 0, 0]) == pytest.approx(0.0)
    with pytest.raises(GeometryError):
        joint_angle(b, b, [1, 0, 0])


def test_target_point_formulas():
    frame = SkeletonFrame(0.0, _rest_pose())
    torso = torso_length(frame)
    assert torso == pytest.approx(0.5)
    reach = arm_length(frame, Arm.RIGHT)
    assert reach == pytest.approx(0.5)

    t1 = target_point(frame, Exercise.E1, Arm.RIGHT)
    np.testing.assert_allclose(
        t1, frame.p(Joint.HEAD) + [0.0, -MOUTH_DROP_TORSO * torso, 0.0])

    sh = frame.p(Joint.SHOULDER_RIGHT)
    t2 = target_point(frame, Exercise.E2, Arm.RIGHT)
    np.testing.assert_allclose(t2, sh + [0.0, 0.0, reach])

    t3 = target_point(frame, Exercise.E3, Arm.RIGHT)
    k = reach / np.sqrt(2.0)
    np.testing.assert_allclose(t3, sh + [0.0, -k, k])


def test_target_point_rejects_degenerate_torso():
    joints = _rest_pose()
    joints[Joint.SPINE_BASE] = joints[Joint.SPINE_SHOULDER]
    with pytest.raises(GeometryError):
        target_point(SkeletonFrame(0.0, joints), Exercise.E1, Arm.RIGHT)


# ---------------------------------------------------------------------------
# differentiation
# ---------------------------------------------------------------------------

def test_velocity_constant_motion():
    n = 10
    track = np.zeros((n, 3))
    track[:, 1] = 0.9 + 0.03 * np.arange(n)  # 0.9 m/s upward at 30 fps
    clip = _clip_from_tracks({Joint.WRIST_RIGHT: track})
    v = velocity(clip, Joint.WRIST_RIGHT)
    np.testing.assert_allclose(v[0], 0.0)
    np.testing.assert_allclose(v[1:, 1], 0.9, atol=1e-9)
    np.testing.assert_allclose(v[1:, 0], 0.0, atol=1e-9)


def test_acceleration_padding_and_value():
    n = 12
    t = np.arange(n) / 30.0
    track = np.zeros((n, 3))
    track[:, 1] = 0.5 * 2.0 * t ** 2  # constant 2 m/s^2
    clip = _clip_from_tracks({Joint.WRIST_RIGHT: track})
    a = acceleration(clip, Joint.WRIST_RIGHT)
    np.testing.assert_allclose(a[:2], 0.0)
    np.testing.assert_allclose(a[2:, 1], 2.0, atol=1e-6)


def test_velocity_rejects_bad_input():
    clip = _clip_from_tracks({Joint.WRIST_RIGHT: np.zeros((1, 3))})
    with pytest.raises(InsufficientDataError):
        velocity(clip, Joint.WRIST_RIGHT)
    frames = [SkeletonFrame(0.0, _rest_pose()), SkeletonFrame(0.0, _rest_pose())]
    clip = MotionClip("s", Exercise.E1, Side.AFFECTED, tuple(frames))
    with pytest.raises(GeometryError):
        velocity(clip, Joint.WRIST_RIGHT)


def test_wrist_zero_crossings_skip_padded_rows():
    rng = np.random.default_rng(9)
    n = 60
    track = np.zeros((n, 3))
    track[:, 1] = 0.9 + np.cumsum(rng.normal(0, 0.01, n))
    track[:, 0] = 0.2 + 0.01 * np.sin(np.arange(n))
    track[:, 2] = 0.02 * np.cos(np.arange(n) / 3)
    clip = _clip_from_tracks({Joint.WRIST_RIGHT: track})
    out = wrist_accel_zero_crossings(clip, Arm.RIGHT)
    acc = acceleration(clip, Joint.WRIST_RIGHT)
    for i, axis in enumerate("xyz"):
        assert out[axis] == pytest.approx(zero_crossing_ratio(acc[2:, i]))


# ---------------------------------------------------------------------------
# compensation displacements
# ---------------------------------------------------------------------------

def test_compensation_signed_and_normalized():
    initial = SkeletonFrame(0.0, _rest_pose())
    moved = _rest_pose()
    moved[Joint.HEAD] += (0.0, 0.1, 0.0)
    moved[Joint.SPINE_MID] += (-0.05, 0.0, 0.0)
    moved[Joint.SHOULDER_RIGHT] += (0.0, 0.0, 0.02)
    frame = SkeletonFrame(1 / 30.0, moved)
    torso = torso_length(initial)
    out = compensation_features(frame, initial, torso, Arm.RIGHT)
    assert out["comp_head_y"] == pytest.approx(0.1 / torso)
    assert out["comp_spine_x"] == pytest.approx(-0.05 / torso)
    assert out["comp_shoulder_z"] == pytest.approx(0.02 / torso)
    assert out["comp_head_x"] == pytest.approx(0.0)
    # left arm reads the other shoulder, which did not move
    out_l = compensation_features(frame, initial, torso, Arm.LEFT)
    assert out_l["comp_shoulder_z"] == pytest.approx(0.0)


def test_compensation_rejects_zero_torso():
    frame = SkeletonFrame(0.0, _rest_pose())
    with pytest.raises(GeometryError):
        compensation_features(frame, frame, 0.0, Arm.RIGHT)


def test_compensation_matrix_matches_per_frame(clean_clip, arm):
    mat = compensation_matrix(clean_clip, arm)
    initial = clean_clip.frames[0]
    torso = torso_length(initial)
    for i in (0, 1, len(clean_clip) // 2, len(clean_clip) - 1):
        row = compensation_features(clean_clip.frames[i], initial, torso, arm)
        np.testing.assert_allclose(mat.values[i], row.values)
    np.testing.assert_allclose(mat.values[0], 0.0)


def test_rom_features_track_target():
    # wrist gliding onto the E1 target drives wrist_target_dist to zero
    initial = SkeletonFrame(0.0, _rest_pose())
    target = target_point(initial, Exercise.E1, Arm.RIGHT)
    start = initial.p(Joint.WRIST_RIGHT)
    n = 20
    track = start[None, :] + (target - start)[None, :] * \
        np.linspace(0.0, 1.0, n)[:, None]
    clip = _clip_from_tracks({Joint.WRIST_RIGHT: track})
    rom = rom_features(clip, Arm.RIGHT)
    dist = rom.column("wrist_target_dist")
    assert dist[0] == pytest.approx(float(np.linalg.norm(target - start)))
    assert dist[-1] == pytest.approx(0.0, abs=1e-12)
    assert (np.diff(dist) <= 1e-12).all()
