"""Fusion of the learned classifier and the rule model, plus frame voting.

The hybrid probability is a convex combination of the two model outputs,
weighted by each model's F1 measured on training data: a model that has
earned more trust contributes more.  Frame-level streams are stabilized
by majority voting over a trailing window before any feedback fires.
"""

from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from . import mlp, rules
from .errors import ClipValidationError, ConfigError, WeightsError
from .features import (compensation_matrix, rom_features, smoothness_features,
                       summarize)
from .skeleton import (Arm, Exercise, MotionClip, infer_arm, smooth_clip,
                       validate_clip)

logger = logging.getLogger(__name__)

VOTE_WINDOW_MAX = 30
VOTE_WINDOW_DEFAULT = 29
DECISION_THRESHOLD = 0.5

COMPONENTS = ("rom", "smoothness", "compensation")
COMP_JOINTS = ("head", "spine", "shoulder")


@dataclass(frozen=True)
class ModelWeights:
    """Per-model trust weights; at least one must be positive."""

    rho_ml: float
    rho_rb: float

    def __post_init__(self) -> None:
        if self.rho_ml < 0 or self.rho_rb < 0:
            raise WeightsError("model weights must be non-negative")


def hybrid_score(p_ml: float, p_rb: float, weights: ModelWeights) -> float:
    """Trust-weighted average of the two model probabilities."""
    total = weights.rho_ml + weights.rho_rb
    if total <= 0:
        raise WeightsError("cannot fuse models when both weights are zero")
    return (weights.rho_ml * p_ml + weights.rho_rb * p_rb) / total


def compute_model_weights(ml_preds, rb_preds, truths) -> ModelWeights:
    """Weights from each model's F1 against the same ground truth."""
    from .evaluation import f1_score  # local import, evaluation imports us
    ml_preds = np.asarray(ml_preds)
    rb_preds = np.asarray(rb_preds)
    truths = np.asarray(truths)
    if not (ml_preds.shape == rb_preds.shape == truths.shape):
        raise ConfigError("prediction/truth arrays must share a shape")
    return ModelWeights(f1_score(truths, ml_preds), f1_score(truths, rb_preds))


def decide(p: float) -> int:
    """Probability to hard label at the shared 0.5 threshold."""
    return 1 if p >= DECISION_THRESHOLD else 0


# ---------------------------------------------------------------------------
# Frame-level ensemble voting
# ---------------------------------------------------------------------------

def _check_window(v_f: int) -> int:
    if not isinstance(v_f, (int, np.integer)) or not 1 <= int(v_f) <= VOTE_WINDOW_MAX:
        raise ConfigError(
            f"voting window must be an int in 1..{VOTE_WINDOW_MAX}, got {v_f!r}")
    return int(v_f)


class VotingBuffer:
    """Majority vote over the last ``v_f`` frame labels.

    Before the window fills, the vote runs over whatever prefix exists.
    Ties resolve to the newest label, so a window of 1 is the identity.
    """

    def __init__(self, v_f: int = VOTE_WINDOW_DEFAULT):
        self.v_f = _check_window(v_f)
        self._buf: deque[int] = deque(maxlen=self.v_f)

    def push(self, label: int) -> int:
        label = int(label)
        if label not in (0, 1):
            raise ConfigError(f"vote labels must be 0/1, got {label}")
        self._buf.append(label)
        ones = sum(self._buf)
        size = len(self._buf)
        if 2 * ones > size:
            return 1
        if 2 * ones < size:
            return 0
        return label

    def reset(self) -> None:
        self._buf.clear()


def frame_vote(preds, v_f: int = VOTE_WINDOW_DEFAULT) -> int:
    """Voted label for the newest frame of a prediction stream."""
    preds = list(preds)
    if not preds:
        raise ConfigError("frame_vote needs at least one prediction")
    buf = VotingBuffer(v_f)
    out = 0
    for p in preds:
        out = buf.push(p)
    return out


def vote_stream(labels, v_f: int = VOTE_WINDOW_DEFAULT) -> np.ndarray:
    """Vectorized per-frame voted labels for a whole 0/1 stream."""
    v_f = _check_window(v_f)
    arr = np.asarray(labels, dtype=np.int64).reshape(-1)
    if not np.isin(arr, (0, 1)).all():
        raise ConfigError("vote labels must be 0/1")
    n = arr.shape[0]
    if n == 0:
        return arr.copy()
    c = np.concatenate([[0], np.cumsum(arr)])
    t = np.arange(n)
    start = np.maximum(0, t - v_f + 1)
    ones = c[t + 1] - c[start]
    size = t + 1 - start
    out = np.where(2 * ones > size, 1, np.where(2 * ones < size, 0, arr))
    return out.astype(np.int64)


# ---------------------------------------------------------------------------
# Whole-motion assessment
# ---------------------------------------------------------------------------

@dataclass
class Verdict:
    """Outcome for one component of one motion."""

    component: str
    label: int
    p: float
    p_ml: float
    p_rb: float
    violated: tuple[str, ...] = ()
    rb_label: int = 1        # the rule model's own majority-vote opinion

    @property
    def ml_label(self) -> int:
        return decide(self.p_ml)


@dataclass
class CompTrack:
    """Per-frame compensation assessment for one joint."""

    joint: str
    p: np.ndarray            # hybrid probability per frame
    label_raw: np.ndarray    # thresholded per frame
    label_voted: np.ndarray  # after majority voting
    violated: list[tuple[str, ...]]  # rule ids per frame, worst first
    p_ml: np.ndarray | None = None       # model probability per frame
    rb_labels: np.ndarray | None = None  # rule majority vote per frame


@dataclass
class MotionAssessment:
    rom: Verdict
    smoothness: Verdict
    comp: dict[str, CompTrack]

    def comp_frame_labels(self) -> np.ndarray:
        """(T, 3) voted labels in head/spine/shoulder column order."""
        return np.stack([self.comp[j].label_voted for j in COMP_JOINTS], axis=1)


@dataclass
class ExerciseModels:
    """Trained models and fusion weights for one exercise."""

    exercise: Exercise
    rom: mlp.MlpModel
    smoothness: mlp.MlpModel
    comp: dict[str, mlp.MlpModel]
    weights: dict[str, ModelWeights]

    def weight(self, component: str) -> ModelWeights:
        try:
            return self.weights[component]
        except KeyError:
            raise WeightsError(f"no fusion weights for component {component!r}")


def comp_rb_track(comp_values: np.ndarray, joint: str, exercise: Exercise,
                  profile: rules.UserProfile | None = None,
                  ruleset: rules.RuleSet = rules.DEFAULT_RULESET):
    """Vectorized frame-level rule assessment for one compensation joint.

    Returns (p_rb (T,), label (T,), violated list of per-frame rule-id
    tuples ordered worst violation first).
    """
    if joint not in rules.COMP_RULE_IDS:
        raise ConfigError(f"unknown compensation joint {joint!r}")
    rule_ids = rules.COMP_RULE_IDS[joint]
    col_base = {"head": 0, "spine": 3, "shoulder": 6}[joint]
    x = np.abs(comp_values[:, col_base:col_base + 3])  # (T, 3)
    taus = []
    for rid in rule_ids:
        rule = ruleset.by_id(rid)
        tau = None
        if profile is not None:
            tau = profile.tau_for(exercise, rid)
        taus.append(rule.threshold if tau is None else tau)
    taus = np.asarray(taus, dtype=np.float64)
    if (taus <= 0).any():
        raise WeightsError("compensation thresholds must be positive")
    scores = np.minimum(taus[None, :] / np.maximum(x, rules.EPSILON), 1.0)
    passed = x <= taus[None, :]
    p_rb = scores.mean(axis=1)
    label = (passed.sum(axis=1) * 2 > 3).astype(np.int64)
    violated: list[tuple[str, ...]] = []
    severity = (x - taus[None, :]) / taus[None, :]
    for t in range(x.shape[0]):
        bad = [(severity[t, i], rule_ids[i]) for i in range(3) if not passed[t, i]]
        bad.sort(key=lambda kv: kv[0], reverse=True)
        violated.append(tuple(rid for _, rid in bad))
    return p_rb, label, violated


def _clip_verdict(component: str, summary_values: np.ndarray,
                  model: mlp.MlpModel | None, rb: rules.RbResult,
                  weights: ModelWeights | None) -> Verdict:
    if model is None:
        # rule-only operation: the majority vote is the decision
        violated = tuple(o.rule_id for o in rb.violated) if rb.label == 0 else ()
        return Verdict(component, rb.label, rb.p, float("nan"), rb.p,
                       violated, rb_label=rb.label)
    p_ml = float(mlp.predict_proba(model, summary_values))
    p = hybrid_score(p_ml, rb.p, weights)
    label = decide(p)
    violated = tuple(o.rule_id for o in rb.violated) if label == 0 else ()
    return Verdict(component, label, p, p_ml, rb.p, violated,
                   rb_label=rb.label)


def assess_motion(clip: MotionClip, models: ExerciseModels | None,
                  profile: rules.UserProfile | None = None,
                  arm: Arm | None = None,
                  v_f: int = VOTE_WINDOW_DEFAULT) -> MotionAssessment:
    """Full three-component assessment of one motion clip.

    The clip must validate; it is smoothed here, so pass raw sensor data.
    With ``models=None`` the rule model operates alone and its majority
    votes become the decisions.
    """
    report = validate_clip(clip)
    if not report.ok:
        raise ClipValidationError(f"clip failed validation: {report.summary()}")
    if models is not None and Exercise(models.exercise) is not clip.exercise:
        raise ConfigError(
            f"model bundle is for {models.exercise}, clip is {clip.exercise}")
    arm = arm or infer_arm(clip)
    smoothed = smooth_clip(clip)

    rom_rb = rules.assess_clip_component(smoothed, rules.Component.ROM,
                                         profile, arm)
    smooth_rb = rules.assess_clip_component(smoothed, rules.Component.SMOOTHNESS,
                                            profile, arm)
    if models is None:
        rom_verdict = _clip_verdict("rom", np.empty(0), None, rom_rb, None)
        smooth_verdict = _clip_verdict("smoothness", np.empty(0), None,
                                       smooth_rb, None)
    else:
        rom_summary = summarize(rom_features(smoothed, arm))
        rom_verdict = _clip_verdict("rom", rom_summary.values, models.rom,
                                    rom_rb, models.weight("rom"))
        smooth_summary = summarize(smoothness_features(smoothed, arm))
        smooth_verdict = _clip_verdict("smoothness", smooth_summary.values,
                                       models.smoothness, smooth_rb,
                                       models.weight("smoothness"))

    comp_matrix = compensation_matrix(smoothed, arm)
    if models is not None:
        w = models.weight("compensation")
        total = w.rho_ml + w.rho_rb
        if total <= 0:
            raise WeightsError("cannot fuse models when both weights are zero")
    comp: dict[str, CompTrack] = {}
    for joint in COMP_JOINTS:
        p_rb, rb_labels, violated = comp_rb_track(comp_matrix.values, joint,
                                                  clip.exercise, profile)
        if models is None:
            raw = np.asarray(rb_labels, dtype=np.int64)
            comp[joint] = CompTrack(joint, p_rb, raw, vote_stream(raw, v_f),
                                    violated, p_ml=None, rb_labels=raw)
            continue
        p_ml = np.atleast_1d(mlp.predict_proba(models.comp[joint],
                                               comp_matrix.values))
        p = (w.rho_ml * p_ml + w.rho_rb * p_rb) / total
        raw = (p >= DECISION_THRESHOLD).astype(np.int64)
        voted = vote_stream(raw, v_f)
        comp[joint] = CompTrack(joint, p, raw, voted, violated,
                                p_ml=p_ml, rb_labels=rb_labels)
    return MotionAssessment(rom_verdict, smooth_verdict, comp)


# ---------------------------------------------------------------------------
# Model bundle persistence
# ---------------------------------------------------------------------------

_COMPONENT_FILES = ("rom", "smoothness")


def save_models(models: Mapping[str, ExerciseModels],
                directory: str | Path) -> Path:
    """Write one subdirectory per exercise with nets and fusion weights."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for key, bundle in models.items():
        ex_dir = directory / Exercise(key).value
        ex_dir.mkdir(exist_ok=True)
        bundle.rom.save(ex_dir / "rom.json")
        bundle.smoothness.save(ex_dir / "smoothness.json")
        for joint in COMP_JOINTS:
            bundle.comp[joint].save(ex_dir / f"comp_{joint}.json")
        weights = {name: {"rho_ml": w.rho_ml, "rho_rb": w.rho_rb}
                   for name, w in bundle.weights.items()}
        tmp = ex_dir / "weights.json.tmp"
        tmp.write_text(json.dumps(weights, indent=1, sort_keys=True))
        tmp.replace(ex_dir / "weights.json")
    return directory


def load_models(directory: str | Path) -> dict[str, ExerciseModels]:
    """Load every exercise bundle found under ``directory``."""
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigError(f"model directory {directory} does not exist")
    out: dict[str, ExerciseModels] = {}
    for exercise in Exercise:
        ex_dir = directory / exercise.value
        if not ex_dir.is_dir():
            continue
        try:
            weights_raw = json.loads((ex_dir / "weights.json").read_text())
            weights = {name: ModelWeights(float(w["rho_ml"]), float(w["rho_rb"]))
                       for name, w in weights_raw.items()}
            out[exercise.value] = ExerciseModels(
                exercise=exercise,
                rom=mlp.MlpModel.load(ex_dir / "rom.json"),
                smoothness=mlp.MlpModel.load(ex_dir / "smoothness.json"),
                comp={joint: mlp.MlpModel.load(ex_dir / f"comp_{joint}.json")
                      for joint in COMP_JOINTS},
                weights=weights,
            )
        except (OSError, KeyError, ValueError) as exc:
            raise ConfigError(f"model bundle {ex_dir} is unreadable: {exc}")
    if not out:
        raise ConfigError(f"no exercise bundles found under {directory}")
    return out
