"""Kinematic feature extraction for exercise quality assessment.

Three feature families feed the models:

* range-of-motion: joint angles plus distances to an exercise-specific
  target point, 6 per-frame columns;
* smoothness: per-axis wrist/elbow velocity and acceleration sign-flip
  indicator streams, 12 per-frame columns;
* compensation: torso-normalized displacement of head, spine-mid and the
  exercising shoulder from their initial pose, 9 values per frame.

Clip-level families are condensed with :func:`summarize`, which emits
(max, min, range, mean, std) per column, so ROM yields 30 values and
smoothness 60.  All distances are meters and angles degrees.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, InsufficientDataError
from .skeleton import (AXES, Arm, Exercise, Joint, MotionClip, SkeletonFrame,
                       infer_arm, torso_length)

logger = logging.getLogger(__name__)

_EPS = 1e-12

# Vertical drop from the head center to the mouth, in torso units.
MOUTH_DROP_TORSO = 0.08

ROM_FEATURE_NAMES = (
    "elbow_flexion_deg",
    "shoulder_flexion_deg",
    "elbow_extension_deg",
    "wrist_target_dist",
    "head_wrist_norm",
    "head_elbow_norm",
)

SMOOTHNESS_FEATURE_NAMES = (
    "vel_wrist_x", "vel_wrist_y", "vel_wrist_z",
    "vel_elbow_x", "vel_elbow_y", "vel_elbow_z",
    "accflip_wrist_x", "accflip_wrist_y", "accflip_wrist_z",
    "accflip_elbow_x", "accflip_elbow_y", "accflip_elbow_z",
)

COMP_JOINTS = ("head", "spine", "shoulder")
COMP_FEATURE_NAMES = tuple(f"comp_{j}_{a}" for j in COMP_JOINTS for a in AXES)

SUMMARY_STATS = ("max", "min", "range", "mean", "std")


@dataclass
class FeatureMatrix:
    """Per-frame feature values; ``values`` has shape (T, len(names))."""

    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.names):
            raise ValueError(
                f"feature matrix shape {self.values.shape} does not match "
                f"{len(self.names)} names")

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]


@dataclass
class FeatureVector:
    """Flat clip-level feature values, one entry per name."""

    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if self.values.shape[0] != len(self.names):
            raise ValueError("feature vector names/values length mismatch")

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])


def joint_angle(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> float:
    """Angle at vertex ``b`` spanned by points ``a`` and ``c``, degrees."""
    u = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    v = np.asarray(c, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu < _EPS or nv < _EPS:
        raise GeometryError("joint_angle: zero-length segment at vertex")
    cos = float(np.dot(u, v) / (nu * nv))
    return float(np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))))


def _angles(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Row-wise joint_angle for (T, 3) stacks."""
    u = a - b
    v = c - b
    nu = np.linalg.norm(u, axis=1)
    nv = np.linalg.norm(v, axis=1)
    if (nu < _EPS).any() or (nv < _EPS).any():
        frame = int(np.argmax((nu < _EPS) | (nv < _EPS)))
        raise GeometryError(f"zero-length limb segment at frame {frame}")
    cos = np.clip(np.einsum("ij,ij->i", u, v) / (nu * nv), -1.0, 1.0)
    return np.degrees(np.arccos(cos))


def _sign_change_flags(seq: np.ndarray) -> np.ndarray:
    """Boolean flags, one per adjacent pair, for strict sign changes.

    Zeros inherit the most recent nonzero sign, so 1, 0, -1 counts one
    change and a run of zeros counts none.
    """
    s = np.sign(np.asarray(seq, dtype=np.float64))
    n = s.shape[0]
    idx = np.where(s != 0, np.arange(n), -1)
    idx = np.maximum.accumulate(idx)
    resolved = np.where(idx >= 0, s[np.maximum(idx, 0)], 0.0)
    return (resolved[1:] != resolved[:-1]) & (resolved[:-1] != 0)


def zero_crossing_ratio(seq) -> float:
    """Fraction of adjacent pairs whose sign strictly flips.

    Count of sign changes divided by len(seq) - 1.  Zeros keep the previous
    sign so touching zero without crossing does not count.
    """
    seq = np.asarray(seq, dtype=np.float64).reshape(-1)
    if seq.shape[0] < 2:
        raise InsufficientDataError(
            f"zero_crossing_ratio needs >= 2 samples, got {seq.shape[0]}")
    flags = _sign_change_flags(seq)
    return float(np.count_nonzero(flags)) / float(seq.shape[0] - 1)


def arm_length(frame: SkeletonFrame, arm: Arm) -> float:
    """Shoulder-elbow plus elbow-wrist length at one frame."""
    sh = frame.p(arm.joint("SHOULDER"))
    el = frame.p(arm.joint("ELBOW"))
    wr = frame.p(arm.joint("WRIST"))
    upper = float(np.linalg.norm(el - sh))
    fore = float(np.linalg.norm(wr - el))
    if upper < _EPS or fore < _EPS:
        raise GeometryError("degenerate arm segment in initial frame")
    return upper + fore


def target_point(initial: SkeletonFrame, exercise: Exercise, arm: Arm) -> np.ndarray:
    """Exercise goal position, fixed from the initial frame.

    E1: just below the head center (a mouth proxy).
    E2: shoulder height, one arm length straight forward of the shoulder.
    E3: one arm length below-forward of the shoulder, along the cane line.
    """
    torso = torso_length(initial)
    if torso < _EPS:
        raise GeometryError("torso reference length is zero")
    exercise = Exercise(exercise)
    if exercise is Exercise.E1:
        return initial.p(Joint.HEAD) + np.array([0.0, -MOUTH_DROP_TORSO * torso, 0.0])
    reach = arm_length(initial, arm)
    sh = initial.p(arm.joint("SHOULDER"))
    if exercise is Exercise.E2:
        return sh + np.array([0.0, 0.0, reach])
    # E3: 45 degrees below horizontal, in the forward (z) plane
    k = reach / np.sqrt(2.0)
    return sh + np.array([0.0, -k, k])


def velocity(clip: MotionClip, joint: Joint) -> np.ndarray:
    """(T, 3) finite-difference velocity; first row is zero."""
    pos = clip.positions()[:, int(joint), :]
    t = clip.timestamps()
    if pos.shape[0] < 2:
        raise InsufficientDataError("velocity needs >= 2 frames")
    dt = np.diff(t)
    if (dt <= 0).any():
        raise GeometryError("timestamps must strictly increase")
    v = np.zeros_like(pos)
    v[1:] = (pos[1:] - pos[:-1]) / dt[:, None]
    return v


def acceleration(clip: MotionClip, joint: Joint) -> np.ndarray:
    """(T, 3) finite-difference acceleration; first two rows are zero."""
    v = velocity(clip, joint)
    t = clip.timestamps()
    if v.shape[0] < 3:
        raise InsufficientDataError("acceleration needs >= 3 frames")
    a = np.zeros_like(v)
    a[2:] = (v[2:] - v[1:-1]) / np.diff(t)[1:, None]
    return a


def wrist_accel_zero_crossings(clip: MotionClip, arm: Arm | None = None) -> dict[str, float]:
    """Whole-clip zero-crossing ratio of wrist acceleration, per axis.

    This is the quantity the smoothness rules threshold.  The leading
    padded rows of :func:`acceleration` are excluded.
    """
    arm = arm or infer_arm(clip)
    acc = acceleration(clip, arm.joint("WRIST"))
    return {axis: zero_crossing_ratio(acc[2:, i]) for i, axis in enumerate(AXES)}


def rom_features(clip: MotionClip, arm: Arm | None = None) -> FeatureMatrix:
    """Per-frame range-of-motion features, 6 columns."""
    arm = arm or infer_arm(clip)
    pos = clip.positions()
    initial = clip.frames[0]
    torso = torso_length(initial)
    if torso < _EPS:
        raise GeometryError("torso reference length is zero")
    target = target_point(initial, clip.exercise, arm)

    sh = pos[:, int(arm.joint("SHOULDER")), :]
    el = pos[:, int(arm.joint("ELBOW")), :]
    wr = pos[:, int(arm.joint("WRIST")), :]
    hip = pos[:, int(arm.joint("HIP")), :]
    head = pos[:, int(Joint.HEAD), :]

    elbow_flexion = _angles(sh, el, wr)
    shoulder_flexion = _angles(el, sh, hip)
    elbow_extension = 180.0 - elbow_flexion
    wrist_target = np.linalg.norm(wr - target[None, :], axis=1)
    head_wrist = np.linalg.norm(head - wr, axis=1) / torso
    head_elbow = np.linalg.norm(head - el, axis=1) / torso

    values = np.column_stack([elbow_flexion, shoulder_flexion, elbow_extension,
                              wrist_target, head_wrist, head_elbow])
    return FeatureMatrix(ROM_FEATURE_NAMES, values)


def smoothness_features(clip: MotionClip, arm: Arm | None = None) -> FeatureMatrix:
    """Per-frame smoothness features, 12 columns.

    Six signed per-axis velocities (wrist then elbow) and six 0/1 streams
    marking frames where the per-axis acceleration sign flipped.
    """
    arm = arm or infer_arm(clip)
    if clip.n_frames < 3:
        raise InsufficientDataError("smoothness features need >= 3 frames")
    cols = []
    for name in ("WRIST", "ELBOW"):
        cols.append(velocity(clip, arm.joint(name)))
    for name in ("WRIST", "ELBOW"):
        acc = acceleration(clip, arm.joint(name))
        flips = np.zeros_like(acc)
        # row t flags a sign change between accel samples t-1 and t
        for i in range(3):
            flags = _sign_change_flags(acc[2:, i])
            flips[3:, i] = flags.astype(np.float64)
        cols.append(flips)
    values = np.column_stack([c for c in cols])
    return FeatureMatrix(SMOOTHNESS_FEATURE_NAMES, values)


def compensation_features(frame: SkeletonFrame, initial: SkeletonFrame,
                          torso_ref: float, arm: Arm) -> FeatureVector:
    """Signed displacement of head, spine-mid and the exercising shoulder
    from their initial position, per axis, in torso units (9 values)."""
    if torso_ref <= _EPS:
        raise GeometryError(f"torso_ref must be positive, got {torso_ref}")
    joints = (Joint.HEAD, Joint.SPINE_MID, arm.joint("SHOULDER"))
    vals = np.concatenate([
        (frame.p(j) - initial.p(j)) / torso_ref for j in joints])
    return FeatureVector(COMP_FEATURE_NAMES, vals)


def compensation_matrix(clip: MotionClip, arm: Arm | None = None,
                        initial: SkeletonFrame | None = None) -> FeatureMatrix:
    """Vectorized per-frame compensation features for a whole clip."""
    arm = arm or infer_arm(clip)
    initial = initial or clip.frames[0]
    torso = torso_length(initial)
    if torso < _EPS:
        raise GeometryError("torso reference length is zero")
    pos = clip.positions()
    joints = (Joint.HEAD, Joint.SPINE_MID, arm.joint("SHOULDER"))
    blocks = [(pos[:, int(j), :] - initial.p(j)[None, :]) / torso for j in joints]
    return FeatureMatrix(COMP_FEATURE_NAMES, np.hstack(blocks))


def summarize(matrix: FeatureMatrix) -> FeatureVector:
    """Collapse per-frame columns to (max, min, range, mean, std) each.

    std is the population form (divide by n).  Output ordering is all five
    stats of column 1, then column 2, and so on.
    """
    v = matrix.values
    if v.shape[0] == 0:
        raise InsufficientDataError("cannot summarize an empty feature matrix")
    mx = v.max(axis=0)
    mn = v.min(axis=0)
    stats = np.stack([mx, mn, mx - mn, v.mean(axis=0), v.std(axis=0)])
    names = tuple(f"{name}_{stat}" for name in matrix.names
                  for stat in SUMMARY_STATS)
    return FeatureVector(names, stats.T.reshape(-1))
