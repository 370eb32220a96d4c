"""Skeleton motion data model.

Frames of 25 tracked joints at a nominal 30 Hz, grouped into motion clips
with optional per-clip and per-frame quality labels.  This module owns the
clip file format (JSON lines, one record per frame) and the causal moving
average filter every downstream consumer runs before extracting features.

Coordinates are meters.  y points up, z points from the subject toward the
sensor, x completes a right-handed frame (subject's left is +x).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ClipFormatError, ConfigError, SchemaVersionError

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
NOMINAL_FPS = 30.0
# Streams may drop frames; anything beyond 3 nominal periods is a hole.
MAX_FRAME_GAP_S = 3.0 / NOMINAL_FPS
MIN_CLIP_FRAMES = 10
SMOOTH_WINDOW = 5


class Joint(IntEnum):
    """Fixed joint index order used everywhere, including the file format."""

    HEAD = 0
    NECK = 1
    SPINE_SHOULDER = 2
    SPINE_MID = 3
    SPINE_BASE = 4
    SHOULDER_LEFT = 5
    ELBOW_LEFT = 6
    WRIST_LEFT = 7
    HAND_LEFT = 8
    HIP_LEFT = 9
    KNEE_LEFT = 10
    ANKLE_LEFT = 11
    FOOT_LEFT = 12
    HAND_TIP_LEFT = 13
    THUMB_LEFT = 14
    SHOULDER_RIGHT = 15
    ELBOW_RIGHT = 16
    WRIST_RIGHT = 17
    HAND_RIGHT = 18
    HIP_RIGHT = 19
    KNEE_RIGHT = 20
    ANKLE_RIGHT = 21
    FOOT_RIGHT = 22
    HAND_TIP_RIGHT = 23
    THUMB_RIGHT = 24


N_JOINTS = len(Joint)

AXES = ("x", "y", "z")
AXIS_INDEX = {"x": 0, "y": 1, "z": 2}


class Exercise(str, Enum):
    E1 = "E1"  # bring wrist to the mouth
    E2 = "E2"  # raise wrist forward to shoulder height
    E3 = "E3"  # seated elbow extension, wrist pushed down-forward

    def __str__(self) -> str:  # keeps log lines short
        return self.value


class Side(str, Enum):
    AFFECTED = "affected"
    UNAFFECTED = "unaffected"

    def __str__(self) -> str:
        return self.value


class Arm(str, Enum):
    """Which physical arm performs the motion."""

    LEFT = "left"
    RIGHT = "right"

    def __str__(self) -> str:
        return self.value

    def joint(self, name: str) -> Joint:
        """Resolve a side-specific joint, e.g. arm.joint('WRIST')."""
        return Joint[f"{name}_{self.name}"]


@dataclass
class SkeletonFrame:
    """One sample of the tracked skeleton.

    ``joints`` is a (25, 3) float array in :class:`Joint` order.  The
    constructor only coerces dtype; content checks live in
    :func:`validate_clip` so partially corrupt data can still be inspected.
    """

    t: float
    joints: np.ndarray

    def __post_init__(self) -> None:
        self.joints = np.asarray(self.joints, dtype=np.float64)

    def p(self, joint: Joint, axis: str | None = None):
        """Position of a joint; full (3,) vector or a single axis value."""
        row = self.joints[int(joint)]
        if axis is None:
            return row
        return float(row[AXIS_INDEX[axis]])


@dataclass
class PerformanceLabels:
    """Ground-truth quality labels for one clip.

    ``rom`` and ``smoothness`` are clip-level (1 = performed correctly).
    ``comp`` holds one (head, spine, shoulder) triple per frame, each entry
    1 = no compensation at that frame for that body part.
    """

    rom: int
    smoothness: int
    comp: tuple[tuple[int, int, int], ...]

    def __post_init__(self) -> None:
        if self.rom not in (0, 1) or self.smoothness not in (0, 1):
            raise ValueError("rom and smoothness labels must be 0 or 1")
        self.comp = tuple(tuple(int(v) for v in triple) for triple in self.comp)
        for triple in self.comp:
            if len(triple) != 3 or any(v not in (0, 1) for v in triple):
                raise ValueError(f"bad compensation triple {triple!r}")

    def comp_array(self) -> np.ndarray:
        """(T, 3) int array, columns head/spine/shoulder."""
        return np.asarray(self.comp, dtype=np.int64).reshape(len(self.comp), 3)


@dataclass
class MotionClip:
    """A time-ordered sequence of skeleton frames for one motion repetition."""

    subject_id: str
    exercise: Exercise
    side: Side
    frames: tuple[SkeletonFrame, ...]
    labels: PerformanceLabels | None = None
    _pos_cache: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.exercise = Exercise(self.exercise)
        self.side = Side(self.side)
        self.frames = tuple(self.frames)
        if self.labels is not None and len(self.labels.comp) != len(self.frames):
            raise ValueError(
                f"compensation labels cover {len(self.labels.comp)} frames, "
                f"clip has {len(self.frames)}"
            )

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    def positions(self) -> np.ndarray:
        """Stacked (T, 25, 3) position array. Cached; treat as read-only."""
        if self._pos_cache is None:
            self._pos_cache = np.stack([f.joints for f in self.frames])
        return self._pos_cache

    def timestamps(self) -> np.ndarray:
        return np.array([f.t for f in self.frames], dtype=np.float64)

    def with_frames(self, frames: Sequence[SkeletonFrame]) -> "MotionClip":
        return MotionClip(self.subject_id, self.exercise, self.side,
                          tuple(frames), self.labels)


@dataclass
class Finding:
    kind: str
    message: str
    frame: int | None = None


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings

    def add(self, kind: str, message: str, frame: int | None = None) -> None:
        self.findings.append(Finding(kind, message, frame))

    def summary(self) -> str:
        if self.ok:
            return "ok"
        return "; ".join(f"{f.kind}@{f.frame}: {f.message}" if f.frame is not None
                         else f"{f.kind}: {f.message}" for f in self.findings)


def validate_clip(clip: MotionClip) -> ValidationReport:
    """Check structural soundness of a clip without raising.

    Flags: too few frames, wrong joint array shape, non-finite coordinates,
    non-increasing timestamps, frame gaps beyond ``MAX_FRAME_GAP_S``, and
    label/frame count mismatch.
    """
    report = ValidationReport()
    if len(clip.frames) < MIN_CLIP_FRAMES:
        report.add("frame-count",
                   f"clip has {len(clip.frames)} frames, need >= {MIN_CLIP_FRAMES}")
    prev_t: float | None = None
    for i, frame in enumerate(clip.frames):
        if frame.joints.shape != (N_JOINTS, 3):
            report.add("shape", f"joint array shape {frame.joints.shape}", i)
        elif not np.isfinite(frame.joints).all():
            bad = np.argwhere(~np.isfinite(frame.joints))
            j, c = bad[0]
            report.add("non-finite",
                       f"{Joint(j).name.lower()} {AXES[c]} is not finite", i)
        if not math.isfinite(frame.t):
            report.add("timestamp-order", "timestamp is not finite", i)
        elif prev_t is not None:
            if frame.t <= prev_t:
                report.add("timestamp-order",
                           f"t={frame.t:.6f} does not increase past {prev_t:.6f}", i)
            # tiny epsilon so a gap of exactly 3 periods is accepted
            elif frame.t - prev_t > MAX_FRAME_GAP_S + 1e-9:
                report.add("timestamp-gap",
                           f"gap of {frame.t - prev_t:.4f}s exceeds "
                           f"{MAX_FRAME_GAP_S:.4f}s", i)
        if math.isfinite(frame.t):
            prev_t = frame.t
    if clip.labels is not None and len(clip.labels.comp) != len(clip.frames):
        report.add("label-length",
                   f"{len(clip.labels.comp)} label triples for "
                   f"{len(clip.frames)} frames")
    return report


def smooth_positions(pos: np.ndarray, window: int = SMOOTH_WINDOW) -> np.ndarray:
    """Trailing moving average along axis 0.

    Frame t averages the last ``min(window, t+1)`` samples, so early frames
    use whatever prefix exists and the filter stays causal.
    """
    if window < 1:
        raise ConfigError(f"smoothing window must be >= 1, got {window}")
    pos = np.asarray(pos, dtype=np.float64)
    n = pos.shape[0]
    if n == 0 or window == 1:
        return pos.copy()
    c = np.cumsum(pos, axis=0)
    out = np.empty_like(pos)
    head = min(window, n)
    denom = np.arange(1, head + 1, dtype=np.float64)
    denom = denom.reshape((head,) + (1,) * (pos.ndim - 1))
    out[:head] = c[:head] / denom
    if n > window:
        out[window:] = (c[window:] - c[:-window]) / float(window)
    return out


def smooth_clip(clip: MotionClip, window: int = SMOOTH_WINDOW) -> MotionClip:
    """Apply the causal moving average to every joint track of a clip.

    Timestamps, metadata and labels pass through untouched.
    """
    smoothed = smooth_positions(clip.positions(), window)
    frames = tuple(SkeletonFrame(f.t, smoothed[i])
                   for i, f in enumerate(clip.frames))
    return clip.with_frames(frames)


# ---------------------------------------------------------------------------
# Clip file format: JSON lines, UTF-8.  First record is a header, every
# following record is one frame.  Floats are written with repr-level
# precision so a load/save cycle is lossless.
# ---------------------------------------------------------------------------

def save_clip(clip: MotionClip, path: str | Path) -> None:
    path = Path(path)
    header: dict = {
        "schema_version": SCHEMA_VERSION,
        "subject_id": clip.subject_id,
        "exercise": clip.exercise.value,
        "side": clip.side.value,
        "has_labels": clip.labels is not None,
    }
    if clip.labels is not None:
        header["rom"] = int(clip.labels.rom)
        header["smoothness"] = int(clip.labels.smoothness)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, separators=(",", ":")) + "\n")
        for i, frame in enumerate(clip.frames):
            rec: dict = {
                "t": frame.t,
                "joints": [[float(v) for v in row] for row in frame.joints],
            }
            if clip.labels is not None:
                rec["comp"] = list(clip.labels.comp[i])
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def _parse_line(raw: str, lineno: int) -> dict:
    try:
        rec = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ClipFormatError(f"line {lineno}: not valid JSON ({exc.msg})") from exc
    if not isinstance(rec, dict):
        raise ClipFormatError(f"line {lineno}: expected a JSON object")
    return rec


def load_clip(path: str | Path) -> MotionClip:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    # allow trailing blank lines, nothing else
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise ClipFormatError("line 1: file is empty")

    header = _parse_line(lines[0], 1)
    version = header.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(
            f"line 1: schema_version {version!r} unsupported "
            f"(this build reads {SCHEMA_VERSION})")
    try:
        subject_id = str(header["subject_id"])
        exercise = Exercise(header["exercise"])
        side = Side(header["side"])
        has_labels = bool(header["has_labels"])
    except (KeyError, ValueError) as exc:
        raise ClipFormatError(f"line 1: bad header field ({exc})") from exc
    if has_labels and ("rom" not in header or "smoothness" not in header):
        raise ClipFormatError("line 1: has_labels set but rom/smoothness missing")

    frames: list[SkeletonFrame] = []
    comp: list[tuple[int, int, int]] = []
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            raise ClipFormatError(f"line {lineno}: blank line inside clip body")
        rec = _parse_line(raw, lineno)
        try:
            t = float(rec["t"])
            joints = rec["joints"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ClipFormatError(f"line {lineno}: bad frame record ({exc})") from exc
        if not isinstance(joints, list) or len(joints) != N_JOINTS or any(
                not isinstance(row, list) or len(row) != 3 for row in joints):
            raise ClipFormatError(
                f"line {lineno}: joints must be {N_JOINTS} [x,y,z] rows")
        frames.append(SkeletonFrame(t, np.asarray(joints, dtype=np.float64)))
        if has_labels:
            triple = rec.get("comp")
            if (not isinstance(triple, list) or len(triple) != 3
                    or any(v not in (0, 1) for v in triple)):
                raise ClipFormatError(
                    f"line {lineno}: labeled clip needs a comp triple of 0/1")
            comp.append((int(triple[0]), int(triple[1]), int(triple[2])))

    labels = None
    if has_labels:
        try:
            labels = PerformanceLabels(int(header["rom"]),
                                       int(header["smoothness"]), tuple(comp))
        except ValueError as exc:
            raise ClipFormatError(f"bad labels: {exc}") from exc
    try:
        return MotionClip(subject_id, exercise, side, tuple(frames), labels)
    except ValueError as exc:
        raise ClipFormatError(str(exc)) from exc


def torso_length(frame: SkeletonFrame) -> float:
    """Spine-base to spine-shoulder distance; the per-subject scale unit."""
    d = frame.p(Joint.SPINE_BASE) - frame.p(Joint.SPINE_SHOULDER)
    return float(np.linalg.norm(d))


def infer_arm(clip: MotionClip) -> Arm:
    """Guess which arm performs the motion: the wrist that travels farther.

    The clip format does not record handedness, so consumers that need a
    side (feature extraction, rules) infer it from wrist displacement
    relative to the first frame.  Callers that know the arm can pass it
    explicitly everywhere this default is used.
    """
    pos = clip.positions()
    travel = {}
    for arm in (Arm.LEFT, Arm.RIGHT):
        w = int(arm.joint("WRIST"))
        track = pos[:, w, :]
        travel[arm] = float(np.max(np.linalg.norm(track - track[0], axis=1)))
    return max(travel, key=travel.get)
