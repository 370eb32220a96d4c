"""Streaming session service: frames in, coaching events out.

A :class:`CoachSession` owns one user's session.  Callers feed it
control events (begin, ready, start cue, quit) and skeleton frames; it
advances the state machine, runs the per-frame compensation pipeline,
and returns wire-ready messages.  Every outbound message is also
appended to the session log, timestamped with stream time so that
replaying the same frame stream reproduces the log byte for byte.

The per-frame pipeline mirrors the batch assessment path exactly: a
trailing moving-average window over raw positions, displacement
features against the first smoothed frame, rule evaluation plus the
optional learned model, fusion, then majority voting per joint.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from . import mlp
from .errors import (CoachError, ConfigError, InsufficientDataError,
                     ProfileError)
from .features import compensation_features
from .fsm import CoachEvent, CoachState, FeedbackKind, feedback_text, step_fsm
from .hybrid import (COMP_JOINTS, DECISION_THRESHOLD, ExerciseModels,
                     VOTE_WINDOW_DEFAULT, VotingBuffer, _check_window,
                     assess_motion)
from .rules import (UserProfile, assess_comp_frame, build_profile,
                    tune_thresholds)
from .skeleton import (Arm, Exercise, MIN_CLIP_FRAMES, MotionClip, Side,
                       SMOOTH_WINDOW, SkeletonFrame, torso_length)

logger = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
FRAME_DEADLINE_S = 1.0 / 30.0

EXERCISE_NAMES: dict[Exercise, str] = {
    Exercise.E1: "hand-to-mouth reach",
    Exercise.E2: "forward reach",
    Exercise.E3: "seated cane reach",
}


# ---------------------------------------------------------------------------
# Configuration and log
# ---------------------------------------------------------------------------

@dataclass
class SessionConfig:
    """What one session is supposed to cover."""

    subject_id: str
    prescription: tuple[tuple[Exercise, int], ...]
    arm: Arm
    v_f: int = VOTE_WINDOW_DEFAULT
    verbosity: str = "full"
    demo_requested: bool = False
    deadline_s: float = FRAME_DEADLINE_S

    def __post_init__(self) -> None:
        if not self.prescription:
            raise ConfigError("prescription must name at least one exercise")
        fixed = []
        for exercise, reps in self.prescription:
            exercise = Exercise(exercise)
            reps = int(reps)
            if reps < 1:
                raise ConfigError(f"repetitions must be >= 1, got {reps}")
            fixed.append((exercise, reps))
        self.prescription = tuple(fixed)
        self.arm = Arm(self.arm)
        self.v_f = _check_window(self.v_f)
        if self.verbosity not in ("full", "terse"):
            raise ConfigError(f"unknown verbosity {self.verbosity!r}")
        if self.deadline_s <= 0:
            raise ConfigError("deadline_s must be positive")

    def to_json(self) -> dict:
        return {
            "subject_id": self.subject_id,
            "prescription": [[ex.value, reps] for ex, reps in self.prescription],
            "arm": self.arm.value,
            "v_f": self.v_f,
            "verbosity": self.verbosity,
            "demo_requested": self.demo_requested,
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "SessionConfig":
        try:
            return cls(
                subject_id=str(data["subject_id"]),
                prescription=tuple((Exercise(ex), int(reps))
                                   for ex, reps in data["prescription"]),
                arm=Arm(data["arm"]),
                v_f=int(data.get("v_f", VOTE_WINDOW_DEFAULT)),
                verbosity=str(data.get("verbosity", "full")),
                demo_requested=bool(data.get("demo_requested", False)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad session config: {exc}")


class SessionLog:
    """Append-only event log, one JSON object per line on disk."""

    def __init__(self, events: list[dict] | None = None):
        self.events: list[dict] = list(events or [])

    def append(self, event: dict) -> None:
        self.events.append(event)

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[dict]:
        return iter(self.events)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, SessionLog) and self.events == other.events

    def feedback(self, kind: str | None = None) -> list[dict]:
        out = [e for e in self.events if e.get("type") == "feedback"]
        if kind is not None:
            out = [e for e in out if e.get("kind") == str(kind)]
        return out

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [json.dumps(e, sort_keys=True) for e in self.events]
        path.write_text("\n".join(lines) + ("\n" if lines else ""),
                        encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: str | Path) -> "SessionLog":
        events = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    events.append(json.loads(line))
        return cls(events)


# ---------------------------------------------------------------------------
# Per-repetition streaming pipeline
# ---------------------------------------------------------------------------

@dataclass
class FrameAssessment:
    """Voted per-joint labels for one frame, with current violations."""

    voted: dict[str, int]
    raw: dict[str, int]
    violated: list[tuple[str, float]]  # (rule_id, violation) of abnormal joints


class _RepPipeline:
    """Incremental smoothing, features, rules, fusion and voting."""

    def __init__(self, exercise: Exercise, arm: Arm,
                 models: ExerciseModels | None, profile: UserProfile | None,
                 v_f: int):
        self.exercise = exercise
        self.arm = arm
        self.models = models
        self.profile = profile
        self.frames: list[SkeletonFrame] = []
        self._window: list[np.ndarray] = []
        self._initial: SkeletonFrame | None = None
        self._torso = 0.0
        self._buffers = {j: VotingBuffer(v_f) for j in COMP_JOINTS}
        if models is not None:
            w = models.weight("compensation")
            if w.rho_ml + w.rho_rb <= 0:
                raise ConfigError("compensation fusion weights sum to zero")
            self._w = w
        else:
            self._w = None

    def push(self, frame: SkeletonFrame) -> FrameAssessment:
        self.frames.append(frame)
        row = frame.joints
        self._window.append(row)
        if len(self._window) > SMOOTH_WINDOW:
            self._window.pop(0)
        smoothed = SkeletonFrame(frame.t,
                                 np.mean(self._window, axis=0))
        if self._initial is None:
            self._initial = smoothed
            self._torso = torso_length(smoothed)
        feat9 = compensation_features(smoothed, self._initial,
                                      self._torso, self.arm).values
        voted: dict[str, int] = {}
        raw: dict[str, int] = {}
        violated: list[tuple[str, float]] = []
        for joint in COMP_JOINTS:
            rb = assess_comp_frame(feat9, joint, self.exercise, self.profile)
            if self.models is None:
                label = rb.label
            else:
                p_ml = float(mlp.predict_proba(self.models.comp[joint], feat9))
                p = (self._w.rho_ml * p_ml + self._w.rho_rb * rb.p) \
                    / (self._w.rho_ml + self._w.rho_rb)
                label = 1 if p >= DECISION_THRESHOLD else 0
            raw[joint] = label
            voted[joint] = self._buffers[joint].push(label)
            if voted[joint] == 0:
                violated.extend((o.rule_id, o.violation) for o in rb.violated)
        violated.sort(key=lambda item: item[1], reverse=True)
        return FrameAssessment(voted, raw, violated)

    def clip(self) -> MotionClip:
        if len(self.frames) < MIN_CLIP_FRAMES:
            raise InsufficientDataError(
                f"only {len(self.frames)} frames buffered, "
                f"need {MIN_CLIP_FRAMES} to assess")
        return MotionClip(subject_id="live", exercise=self.exercise,
                          side=Side.AFFECTED, frames=tuple(self.frames))


# ---------------------------------------------------------------------------
# The session itself
# ---------------------------------------------------------------------------

class CoachSession:
    """One user's coaching session, driven by control events and frames."""

    def __init__(self, config: SessionConfig,
                 models: Mapping[str, ExerciseModels] | None = None,
                 profile: UserProfile | None = None):
        self.config = config
        self.models = dict(models) if models else None
        self.profile = profile
        self.session_id = f"{config.subject_id}-session"
        self.state = CoachState.GREETING
        self.log = SessionLog()
        self.t = 0.0
        self.ex_idx = 0
        self.rep_done = 0
        self.reps_completed: dict[str, int] = {
            ex.value: 0 for ex, _ in config.prescription}
        self.corrective_count = 0
        self.overruns = 0
        self.frames_ignored = 0
        self._pipeline: _RepPipeline | None = None
        self._episode = False
        self._instructed = False
        self._finished = False

    # -- helpers ----------------------------------------------------------

    @property
    def exercise(self) -> Exercise:
        idx = min(self.ex_idx, len(self.config.prescription) - 1)
        return self.config.prescription[idx][0]

    @property
    def rep_total(self) -> int:
        idx = min(self.ex_idx, len(self.config.prescription) - 1)
        return self.config.prescription[idx][1]

    def _emit(self, out: list[dict], type_: str, **payload) -> None:
        msg = {"type": type_, **payload}
        self.log.append({"t": round(self.t, 6), "state": self.state.value,
                         **msg})
        out.append(msg)

    def _emit_state(self, out: list[dict]) -> None:
        self._emit(out, "state", name=self.state.value)

    def _emit_feedback(self, out: list[dict], kind: FeedbackKind, text: str,
                       rules: Sequence[str] = ()) -> None:
        if kind is FeedbackKind.CORRECTIVE:
            self.corrective_count += 1
        self._emit(out, "feedback", kind=kind.value, text=text,
                   rules=list(rules))

    def _apply(self, out: list[dict], event: CoachEvent, **kw) -> tuple:
        step = step_fsm(self.state, event, **kw)
        for state in step.visited:
            self.state = state
            self._emit_state(out)
        return step.visited

    def _ready_prompt(self, out: list[dict]) -> None:
        name = EXERCISE_NAMES[self.exercise]
        self._emit_feedback(
            out, FeedbackKind.INSTRUCTION,
            f"Repetition {self.rep_done + 1} of {self.rep_total}: {name}. "
            "Confirm when you are ready.")

    # -- control events ---------------------------------------------------

    def begin(self) -> list[dict]:
        """Session start: briefing, then demonstration or initial state."""
        out: list[dict] = []
        if self.state is not CoachState.GREETING:
            logger.warning("begin() ignored in state %s", self.state)
            return out
        self._emit_state(out)
        plan = ", ".join(f"{reps} x {EXERCISE_NAMES[ex]}"
                         for ex, reps in self.config.prescription)
        self._emit_feedback(out, FeedbackKind.INSTRUCTION,
                            f"Welcome. Today's plan: {plan}.")
        if self.profile is None:
            self._emit_feedback(
                out, FeedbackKind.INSTRUCTION,
                "No tuned profile found. Consider recording a few "
                "repetitions with your unaffected side first so "
                "thresholds can be personalized.")
        self._apply(out, CoachEvent.SESSION_START,
                    demo_requested=self.config.demo_requested)
        if self.state is CoachState.DEMONSTRATION:
            self._emit_feedback(
                out, FeedbackKind.INSTRUCTION,
                f"Watch the demonstration of the "
                f"{EXERCISE_NAMES[self.exercise]}.")
        else:
            self._ready_prompt(out)
        return out

    def demo_done(self, skipped: bool = False) -> list[dict]:
        out: list[dict] = []
        event = CoachEvent.DEMO_SKIP if skipped else CoachEvent.DEMO_END
        if self._apply(out, event):
            self._ready_prompt(out)
        return out

    def confirm_ready(self) -> list[dict]:
        out: list[dict] = []
        if self._apply(out, CoachEvent.READY_CONFIRM):
            self._emit_feedback(out, FeedbackKind.ALERT,
                                "Monitoring is on. Begin on the start cue.")
        return out

    def start_cue(self) -> list[dict]:
        out: list[dict] = []
        if self._apply(out, CoachEvent.START_CUE):
            self._pipeline = _RepPipeline(self.exercise, self.config.arm,
                                          self._models_for(self.exercise),
                                          self.profile, self.config.v_f)
            self._episode = False
            self._instructed = False
        return out

    def _models_for(self, exercise: Exercise) -> ExerciseModels | None:
        if self.models is None:
            return None
        return self.models.get(exercise.value)

    # -- frames -----------------------------------------------------------

    def push_frame(self, frame: SkeletonFrame) -> list[dict]:
        out: list[dict] = []
        if self.state not in (CoachState.MOVEMENT, CoachState.CORRECTION,
                              CoachState.FEEDBACK) or self._pipeline is None:
            self.frames_ignored += 1
            return out
        started = time.perf_counter()
        self.t = max(self.t, float(frame.t))
        try:
            assessed = self._pipeline.push(frame)
        except CoachError as exc:
            return self.abort(f"frame processing failed: {exc}")
        if not self._instructed:
            # first assessed frame: deliver the exercise instruction in
            # the feedback state, then fall straight back to movement
            self._instructed = True
            if self.config.verbosity == "full":
                self._apply(out, CoachEvent.FRAME_ASSESSED)
                self._emit_feedback(out, FeedbackKind.INSTRUCTION,
                                    feedback_text([], FeedbackKind.INSTRUCTION,
                                                  self.exercise))
        abnormal = [j for j in COMP_JOINTS if assessed.voted[j] == 0]
        if self.state is CoachState.MOVEMENT and abnormal and not self._episode:
            self._episode = True
            self._apply(out, CoachEvent.COMPENSATION_DETECTED)
            rules = list(dict.fromkeys(rid for rid, _ in assessed.violated))
            if not rules:
                # voting can hold a joint abnormal after the instant
                # violation cleared; name the joints generically then
                rules = [f"comp_{j}_x" for j in abnormal]
            self._emit_feedback(out, FeedbackKind.CORRECTIVE,
                                feedback_text(rules, FeedbackKind.CORRECTIVE),
                                rules=rules)
        elif self.state is CoachState.CORRECTION and not abnormal:
            self._episode = False
            self._apply(out, CoachEvent.FRAME_ASSESSED)
        elapsed = time.perf_counter() - started
        if elapsed > self.config.deadline_s:
            self.overruns += 1
            logger.warning("frame at t=%.3f took %.1f ms (budget %.1f ms)",
                           frame.t, elapsed * 1e3,
                           self.config.deadline_s * 1e3)
        return out

    # -- end of one motion --------------------------------------------------

    def end_motion(self) -> list[dict]:
        out: list[dict] = []
        if self.state not in (CoachState.MOVEMENT, CoachState.CORRECTION,
                              CoachState.FEEDBACK) or self._pipeline is None:
            logger.warning("end_motion() ignored in state %s", self.state)
            return out
        try:
            clip = self._pipeline.clip()
            assessment = assess_motion(clip, self._models_for(self.exercise),
                                       profile=self.profile,
                                       arm=self.config.arm,
                                       v_f=self.config.v_f)
        except CoachError as exc:
            return self.abort(f"cannot assess the motion: {exc}")
        finally:
            self._pipeline = None

        visited = self._apply(out, CoachEvent.MOTION_COMPLETE)
        results: dict[str, int] = {}
        for state in visited:
            if state is CoachState.NOTIFY:
                results = self._emit_verdicts(out, assessment)
            elif state is CoachState.ENCOURAGE:
                done = sum(self.reps_completed.values())
                if self.config.verbosity == "full":
                    self._emit_feedback(
                        out, FeedbackKind.ENCOURAGEMENT,
                        feedback_text([], FeedbackKind.ENCOURAGEMENT,
                                      index=done))
        self.rep_done += 1
        self.reps_completed[self.exercise.value] += 1
        self._emit(out, "progress", exercise=self.exercise.value,
                   rep=self.rep_done, total=self.rep_total)
        del results
        if self.rep_done >= self.rep_total:
            self.ex_idx += 1
            self.rep_done = 0
        if self.ex_idx >= len(self.config.prescription):
            self._apply(out, CoachEvent.PRESCRIPTION_COMPLETE)
            self._emit_end(out)
        else:
            self._apply(out, CoachEvent.REP_REMAINING)
            self._ready_prompt(out)
        return out

    def _emit_verdicts(self, out: list[dict], assessment) -> dict[str, int]:
        rom, smooth = assessment.rom, assessment.smoothness
        self._emit(out, "verdict", component="rom", label=rom.label,
                   score=round(rom.p, 6), violated=list(rom.violated))
        self._emit(out, "verdict", component="smoothness", label=smooth.label,
                   score=round(smooth.p, 6), violated=list(smooth.violated))
        comp_clean = 1
        for joint in COMP_JOINTS:
            track = assessment.comp[joint]
            bad = track.label_voted == 0
            label = 0 if bool(bad.any()) else 1
            comp_clean &= label
            score = float(1.0 - bad.mean()) if len(bad) else 1.0
            rules: list[str] = []
            for idx in np.flatnonzero(bad):
                for rid in track.violated[idx]:
                    if rid not in rules:
                        rules.append(rid)
            self._emit(out, "verdict", component=f"comp_{joint}", label=label,
                       score=round(score, 6), violated=rules)
        results = {"rom": rom.label, "smoothness": smooth.label,
                   "compensation": comp_clean}
        self._emit_feedback(out, FeedbackKind.SUMMARY,
                            feedback_text([], FeedbackKind.SUMMARY,
                                          results=results))
        return results

    # -- termination --------------------------------------------------------

    def _emit_end(self, out: list[dict]) -> None:
        if self._finished:
            return
        self._finished = True
        self._emit(out, "end", summary={
            "completed": dict(self.reps_completed),
            "corrective_events": self.corrective_count,
            "overruns": self.overruns,
            "frames_ignored": self.frames_ignored,
            "duration_s": round(self.t, 6),
        })

    def quit(self) -> list[dict]:
        out: list[dict] = []
        if self.state is CoachState.WRAP_UP:
            return out
        self._apply(out, CoachEvent.USER_QUIT)
        done = sum(self.reps_completed.values())
        self._emit_feedback(out, FeedbackKind.SUMMARY,
                            f"Session ended early with {done} "
                            f"repetition{'s' if done != 1 else ''} completed.")
        self._emit_end(out)
        return out

    def abort(self, reason: str) -> list[dict]:
        out: list[dict] = []
        logger.error("session aborted: %s", reason)
        self._emit_feedback(out, FeedbackKind.ALERT, reason)
        if self.state is not CoachState.WRAP_UP:
            self._apply(out, CoachEvent.USER_QUIT)
            self._emit_end(out)
        return out

    @property
    def done(self) -> bool:
        return self.state is CoachState.WRAP_UP


# ---------------------------------------------------------------------------
# Offline drivers
# ---------------------------------------------------------------------------

def run_session(config: SessionConfig,
                frame_source: Iterable[SkeletonFrame | None],
                models: Mapping[str, ExerciseModels] | None = None,
                profile: UserProfile | None = None,
                log_path: str | Path | None = None) -> SessionLog:
    """Drive a full scripted session from an ordered frame source.

    The source yields frames in timestamp order; a ``None`` marks the
    end of one motion (repetition).  Exhaustion after the final motion
    ends the session normally; exhaustion with repetitions still
    prescribed aborts with an alert, as does an empty source.
    """
    session = CoachSession(config, models, profile)
    session.begin()
    if session.state is CoachState.DEMONSTRATION:
        session.demo_done()
    frames = iter(frame_source)
    saw_any = False
    while not session.done:
        session.confirm_ready()
        session.start_cue()
        if session.state is not CoachState.MOVEMENT:
            session.abort("session did not reach the movement state")
            break
        pushed = 0
        for frame in frames:
            if frame is None:
                break
            saw_any = True
            pushed += 1
            session.push_frame(frame)
            if session.done:
                break
        if session.done:
            break
        if pushed == 0:
            session.abort("frame source is exhausted" if saw_any
                          else "frame source yielded no frames")
            break
        session.end_motion()
    if log_path is not None:
        session.log.save(log_path)
    return session.log


def clip_frame_source(clips: Sequence[MotionClip]) -> Iterator[SkeletonFrame | None]:
    """Frame source for :func:`run_session`, one motion per clip."""
    for i, clip in enumerate(clips):
        if i:
            yield None
        yield from clip.frames


# ---------------------------------------------------------------------------
# Profile persistence and tuning entry point
# ---------------------------------------------------------------------------

class ProfileStore:
    """Directory of per-subject tuned-threshold profiles."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)

    def path(self, subject_id: str) -> Path:
        return self.directory / f"{subject_id}.json"

    def exists(self, subject_id: str) -> bool:
        return self.path(subject_id).is_file()

    def load(self, subject_id: str) -> UserProfile | None:
        """The stored profile, or None if the subject has none yet."""
        if not self.exists(subject_id):
            return None
        return UserProfile.load(self.directory, subject_id)

    def save(self, profile: UserProfile) -> Path:
        self.directory.mkdir(parents=True, exist_ok=True)
        return profile.save(self.directory)


def tune_user(store: ProfileStore, subject_id: str,
              clips: Sequence[MotionClip], k: int | None = None,
              arm: Arm | None = None) -> UserProfile:
    """Fit per-user thresholds from unaffected-side clips and persist them.

    With ``k=None`` each rule uses the standard per-component sigma
    policy; passing ``k`` forces one multiplier everywhere.
    """
    if not clips:
        raise InsufficientDataError("no unaffected-side clips supplied")
    if k is None:
        profile = build_profile(subject_id, clips, arm=arm)
    else:
        profile = tune_thresholds(subject_id, clips, k, arm=arm)
    store.save(profile)
    return profile


def load_profile_or_none(store: ProfileStore, subject_id: str) -> UserProfile | None:
    """Load a profile, treating a corrupt file as absent (with a warning)."""
    try:
        return store.load(subject_id)
    except ProfileError as exc:
        logger.warning("profile for %s unusable, using generic thresholds: %s",
                       subject_id, exc)
        return None
