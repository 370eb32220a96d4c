"""Hand-built skeleton poses for tests that need known geometry."""

import numpy as np

from rehabcoach.skeleton import (
    N_JOINTS,
    Arm,
    Exercise,
    Joint,
    MotionClip,
    Side,
    SkeletonFrame,
)


def rest_pose():
    """Simple upright skeleton with known geometry (right-handed, y up).

    Torso reference length is exactly 0.5 and each full arm is 0.5.
    """
    joints = np.zeros((N_JOINTS, 3))
    joints[Joint.HEAD] = (0.0, 1.6, 0.0)
    joints[Joint.NECK] = (0.0, 1.45, 0.0)
    joints[Joint.SPINE_SHOULDER] = (0.0, 1.4, 0.0)
    joints[Joint.SPINE_MID] = (0.0, 1.1, 0.0)
    joints[Joint.SPINE_BASE] = (0.0, 0.9, 0.0)
    for arm, sx in ((Arm.LEFT, -1.0), (Arm.RIGHT, 1.0)):
        joints[arm.joint("SHOULDER")] = (0.2 * sx, 1.4, 0.0)
        joints[arm.joint("ELBOW")] = (0.2 * sx, 1.15, 0.0)
        joints[arm.joint("WRIST")] = (0.2 * sx, 0.9, 0.0)
        joints[arm.joint("HAND")] = (0.2 * sx, 0.82, 0.0)
        joints[arm.joint("HIP")] = (0.1 * sx, 0.9, 0.0)
        joints[arm.joint("KNEE")] = (0.1 * sx, 0.5, 0.05)
        joints[arm.joint("ANKLE")] = (0.1 * sx, 0.1, 0.0)
        joints[arm.joint("FOOT")] = (0.1 * sx, 0.05, 0.1)
        joints[arm.joint("HAND_TIP")] = (0.2 * sx, 0.78, 0.0)
        joints[arm.joint("THUMB")] = (0.17 * sx, 0.84, 0.0)
    return joints


def clip_from_tracks(tracks, exercise=Exercise.E1, side=Side.AFFECTED):
    """Build a clip from per-joint track overrides on the rest pose.

    ``tracks`` maps Joint -> (T, 3) array; unlisted joints stay put.
    """
    n = len(next(iter(tracks.values())))
    base = rest_pose()
    frames = []
    for i in range(n):
        joints = base.copy()
        for joint, track in tracks.items():
            joints[int(joint)] = track[i]
        frames.append(SkeletonFrame(i / 30.0, joints))
    return MotionClip("s", exercise, side, tuple(frames))
