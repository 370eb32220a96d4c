"""Therapist rule model: encoded checks, scoring, and per-user tuning.

Fifteen rules cover the three quality components.  Range-of-motion rules
compare the wrist's best position against a landmark of the subject's own
skeleton, smoothness rules bound the zero-crossing ratio of wrist
acceleration per axis, and compensation rules bound the displacement of
head, spine and shoulder from the starting pose.

Each rule produces a pass/fail plus a continuous score in [0, 1]; a rule
group's probability is the mean score and its label the majority of the
pass flags (groups are kept odd-sized so no tie-break is needed).

Generic thresholds suit a typical subject.  ``tune_thresholds`` replaces
them with per-user values fitted by maximum likelihood on the subject's
unaffected-side clips: a rule's samples get a Gaussian fit (population
sigma) and the threshold moves to mu +/- k*sigma, k in {2, 3}.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (ConfigError, InsufficientDataError, ProfileError,
                     ThresholdError)
from .features import (AXES, compensation_matrix, wrist_accel_zero_crossings)
from .skeleton import (Arm, Exercise, Joint, MotionClip, Side, infer_arm,
                       smooth_clip)

logger = logging.getLogger(__name__)

EPSILON = 1e-9

GENERIC_SMOOTHNESS_TAU = 0.2   # max tolerated accel zero-crossing ratio
GENERIC_COMPENSATION_TAU = 0.15  # max displacement, torso units

ALLOWED_K = (2, 3)


class Component(str, Enum):
    ROM = "rom"
    SMOOTHNESS = "smoothness"
    COMPENSATION = "compensation"

    def __str__(self) -> str:
        return self.value


class Direction(str, Enum):
    AT_LEAST = "at_least"
    AT_MOST = "at_most"


@dataclass(frozen=True)
class Rule:
    rule_id: str
    component: Component
    direction: Direction
    exercises: tuple[Exercise, ...]
    threshold: float | None          # generic static threshold
    dynamic: str | None = None       # clip-derived threshold, ROM rules only
    feedback_key: str = ""
    description: str = ""

    def applies_to(self, exercise: Exercise) -> bool:
        return Exercise(exercise) in self.exercises


_ALL = (Exercise.E1, Exercise.E2, Exercise.E3)


def _comp_rules() -> list[Rule]:
    out = []
    for joint in ("head", "spine", "shoulder"):
        for axis in AXES:
            out.append(Rule(
                rule_id=f"comp_{joint}_{axis}",
                component=Component.COMPENSATION,
                direction=Direction.AT_MOST,
                exercises=_ALL,
                threshold=GENERIC_COMPENSATION_TAU,
                feedback_key=f"comp_{joint}_{axis}",
                description=f"{joint} stays within 15% torso displacement "
                            f"along {axis}",
            ))
    return out


DEFAULT_RULES: tuple[Rule, ...] = tuple(
    [
        Rule("rom_e1", Component.ROM, Direction.AT_LEAST, (Exercise.E1,),
             threshold=None, dynamic="max_spine_shoulder_y",
             feedback_key="rom_e1",
             description="wrist rises at least to spine-shoulder height"),
        Rule("rom_e2", Component.ROM, Direction.AT_LEAST, (Exercise.E2,),
             threshold=None, dynamic="max_shoulder_y",
             feedback_key="rom_e2",
             description="wrist rises above the exercising shoulder"),
        Rule("rom_e3", Component.ROM, Direction.AT_LEAST, (Exercise.E3,),
             threshold=None, dynamic="initial_knee_z",
             feedback_key="rom_e3",
             description="wrist reaches forward at least to the knee"),
        Rule("smooth_x", Component.SMOOTHNESS, Direction.AT_MOST, _ALL,
             threshold=GENERIC_SMOOTHNESS_TAU, feedback_key="smooth",
             description="wrist x acceleration flips sign on at most 20% "
                         "of frames"),
        Rule("smooth_y", Component.SMOOTHNESS, Direction.AT_MOST, _ALL,
             threshold=GENERIC_SMOOTHNESS_TAU, feedback_key="smooth",
             description="wrist y acceleration flips sign on at most 20% "
                         "of frames"),
        Rule("smooth_z", Component.SMOOTHNESS, Direction.AT_MOST, _ALL,
             threshold=GENERIC_SMOOTHNESS_TAU, feedback_key="smooth",
             description="wrist z acceleration flips sign on at most 20% "
                         "of frames"),
    ] + _comp_rules()
)


@dataclass(frozen=True)
class RuleSet:
    rules: tuple[Rule, ...] = DEFAULT_RULES

    def __post_init__(self) -> None:
        ids = [r.rule_id for r in self.rules]
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate rule ids in rule set")

    def by_id(self, rule_id: str) -> Rule:
        for r in self.rules:
            if r.rule_id == rule_id:
                return r
        raise KeyError(rule_id)

    def select(self, exercise: Exercise,
               component: Component | None = None) -> list[Rule]:
        out = [r for r in self.rules if r.applies_to(exercise)]
        if component is not None:
            out = [r for r in out if r.component is Component(component)]
        return out


DEFAULT_RULESET = RuleSet()

COMP_RULE_IDS = {
    "head": ("comp_head_x", "comp_head_y", "comp_head_z"),
    "spine": ("comp_spine_x", "comp_spine_y", "comp_spine_z"),
    "shoulder": ("comp_shoulder_x", "comp_shoulder_y", "comp_shoulder_z"),
}
SMOOTH_RULE_IDS = ("smooth_x", "smooth_y", "smooth_z")
ROM_RULE_ID = {Exercise.E1: "rom_e1", Exercise.E2: "rom_e2",
               Exercise.E3: "rom_e3"}


# ---------------------------------------------------------------------------
# Rule inputs: the per-clip scalar each rule thresholds, plus the value of
# any clip-derived generic threshold.
# ---------------------------------------------------------------------------

@dataclass
class RuleInput:
    x: float
    dynamic_tau: float | None = None


def clip_rule_inputs(clip: MotionClip, arm: Arm | None = None) -> dict[str, RuleInput]:
    """Extract every applicable rule's scalar from an already-smoothed clip.

    Compensation rules use the clip's worst (largest absolute) displacement,
    which is also the sample definition threshold tuning relies on.
    """
    arm = arm or infer_arm(clip)
    pos = clip.positions()
    inputs: dict[str, RuleInput] = {}

    wrist_y_max = float(pos[:, int(arm.joint("WRIST")), 1].max())
    ex = clip.exercise
    if ex is Exercise.E1:
        tau = float(pos[:, int(Joint.SPINE_SHOULDER), 1].max())
        inputs["rom_e1"] = RuleInput(wrist_y_max, tau)
    elif ex is Exercise.E2:
        tau = float(pos[:, int(arm.joint("SHOULDER")), 1].max())
        inputs["rom_e2"] = RuleInput(wrist_y_max, tau)
    else:
        wrist_z_max = float(pos[:, int(arm.joint("WRIST")), 2].max())
        tau = float(clip.frames[0].p(arm.joint("KNEE"), "z"))
        inputs["rom_e3"] = RuleInput(wrist_z_max, tau)

    zcr = wrist_accel_zero_crossings(clip, arm)
    for axis in AXES:
        inputs[f"smooth_{axis}"] = RuleInput(zcr[axis])

    comp = compensation_matrix(clip, arm)
    worst = np.abs(comp.values).max(axis=0)
    for i, name in enumerate(comp.names):
        inputs[name] = RuleInput(float(worst[i]))
    return inputs


def frame_comp_inputs(feat9: np.ndarray) -> dict[str, RuleInput]:
    """Rule inputs for one frame's 9 compensation features (signed)."""
    feat9 = np.asarray(feat9, dtype=np.float64).reshape(-1)
    if feat9.shape[0] != 9:
        raise ConfigError(f"expected 9 compensation features, got {feat9.shape[0]}")
    names = [f"comp_{j}_{a}" for j in ("head", "spine", "shoulder") for a in AXES]
    return {name: RuleInput(abs(float(v))) for name, v in zip(names, feat9)}


# ---------------------------------------------------------------------------
# Evaluation and scoring
# ---------------------------------------------------------------------------

@dataclass
class RuleOutcome:
    rule_id: str
    x: float
    tau: float
    passed: bool
    score: float

    @property
    def violation(self) -> float:
        """Normalized distance from the threshold; orders corrective feedback."""
        return abs(self.x - self.tau) / self.tau


def evaluate_rule(x: float, tau: float, direction: Direction) -> tuple[bool, float]:
    """Pass flag and ratio score in [0, 1] for one rule.

    At-least rules score x/tau, at-most rules score tau/x; both saturate
    at 1 when satisfied.  Thresholds must be positive for the ratio to
    mean anything.
    """
    direction = Direction(direction)
    if tau <= 0:
        raise ThresholdError(f"rule threshold must be positive, got {tau}")
    if direction is Direction.AT_LEAST:
        passed = x >= tau
        score = min(max(x, 0.0) / tau, 1.0)
    else:
        passed = x <= tau
        score = min(tau / max(x, EPSILON), 1.0)
    return passed, float(score)


def rb_score(scores: Sequence[float]) -> float:
    """Rule-model probability: mean of the per-rule scores."""
    scores = list(scores)
    if not scores:
        raise ConfigError("rb_score needs at least one rule score")
    return float(np.mean(scores))


def majority_label(passes: Sequence[bool]) -> int:
    """Majority vote over pass flags; the group size must be odd."""
    passes = list(passes)
    if len(passes) % 2 == 0:
        raise ConfigError(
            f"majority vote needs an odd rule group, got {len(passes)}")
    return 1 if sum(passes) * 2 > len(passes) else 0


@dataclass
class RbResult:
    """Rule-group assessment: probability, majority label, detail."""

    p: float
    label: int
    outcomes: list[RuleOutcome]

    @property
    def violated(self) -> list[RuleOutcome]:
        out = [o for o in self.outcomes if not o.passed]
        return sorted(out, key=lambda o: o.violation, reverse=True)


def _resolve_tau(rule: Rule, rule_input: RuleInput,
                 profile: "UserProfile | None", exercise: Exercise) -> float:
    if profile is not None:
        tuned = profile.tau_for(exercise, rule.rule_id)
        if tuned is not None:
            return tuned
    if rule.dynamic is not None:
        if rule_input.dynamic_tau is None:
            raise ThresholdError(
                f"rule {rule.rule_id} needs its clip-derived threshold")
        return rule_input.dynamic_tau
    if rule.threshold is None:
        raise ThresholdError(f"rule {rule.rule_id} has no usable threshold")
    return rule.threshold


def evaluate_group(rules: Sequence[Rule], inputs: Mapping[str, RuleInput],
                   exercise: Exercise,
                   profile: "UserProfile | None" = None) -> RbResult:
    """Evaluate a rule group against extracted inputs."""
    outcomes = []
    for rule in rules:
        if rule.rule_id not in inputs:
            raise ConfigError(f"no input extracted for rule {rule.rule_id}")
        ri = inputs[rule.rule_id]
        tau = _resolve_tau(rule, ri, profile, exercise)
        passed, score = evaluate_rule(ri.x, tau, rule.direction)
        outcomes.append(RuleOutcome(rule.rule_id, ri.x, tau, passed, score))
    label = majority_label([o.passed for o in outcomes])
    return RbResult(rb_score([o.score for o in outcomes]), label, outcomes)


def assess_clip_component(clip: MotionClip, component: Component,
                          profile: "UserProfile | None" = None,
                          arm: Arm | None = None,
                          ruleset: RuleSet = DEFAULT_RULESET) -> RbResult:
    """Clip-level rule assessment for ROM or smoothness."""
    component = Component(component)
    if component is Component.COMPENSATION:
        raise ConfigError("compensation is assessed per frame, per joint")
    arm = arm or infer_arm(clip)
    inputs = clip_rule_inputs(clip, arm)
    rules = ruleset.select(clip.exercise, component)
    return evaluate_group(rules, inputs, clip.exercise, profile)


def assess_comp_frame(feat9: np.ndarray, joint: str, exercise: Exercise,
                      profile: "UserProfile | None" = None,
                      ruleset: RuleSet = DEFAULT_RULESET) -> RbResult:
    """Frame-level rule assessment for one compensation joint."""
    if joint not in COMP_RULE_IDS:
        raise ConfigError(f"unknown compensation joint {joint!r}")
    inputs = frame_comp_inputs(feat9)
    rules = [ruleset.by_id(rid) for rid in COMP_RULE_IDS[joint]]
    return evaluate_group(rules, inputs, exercise, profile)


# ---------------------------------------------------------------------------
# Per-user threshold tuning
# ---------------------------------------------------------------------------

@dataclass
class RuleStats:
    mu: float
    sigma: float
    tau: float
    n: int
    k: int


@dataclass
class UserProfile:
    """Tuned thresholds for one subject, keyed by (exercise, rule id)."""

    subject_id: str
    entries: dict[tuple[str, str], RuleStats] = field(default_factory=dict)

    def tau_for(self, exercise: Exercise, rule_id: str) -> float | None:
        stats = self.entries.get((Exercise(exercise).value, rule_id))
        return None if stats is None else stats.tau

    def stats_for(self, exercise: Exercise, rule_id: str) -> RuleStats | None:
        return self.entries.get((Exercise(exercise).value, rule_id))

    def to_json(self) -> dict:
        exercises: dict[str, dict] = {}
        for (ex, rule_id), s in sorted(self.entries.items()):
            exercises.setdefault(ex, {})[rule_id] = {
                "mu": s.mu, "sigma": s.sigma, "tau": s.tau, "n": s.n, "k": s.k}
        return {"subject_id": self.subject_id, "exercises": exercises}

    @classmethod
    def from_json(cls, data: dict) -> "UserProfile":
        try:
            profile = cls(str(data["subject_id"]))
            for ex, per_rule in data["exercises"].items():
                Exercise(ex)
                for rule_id, s in per_rule.items():
                    profile.entries[(ex, rule_id)] = RuleStats(
                        float(s["mu"]), float(s["sigma"]), float(s["tau"]),
                        int(s["n"]), int(s["k"]))
            return profile
        except (KeyError, TypeError, ValueError) as exc:
            raise ProfileError(f"malformed profile: {exc}") from exc

    def save(self, directory: str | Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / f"{self.subject_id}.json"
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(self.to_json(), indent=2) + "\n",
                       encoding="utf-8")
        os.replace(tmp, path)  # atomic on POSIX
        return path

    @classmethod
    def load(cls, directory: str | Path, subject_id: str) -> "UserProfile":
        path = Path(directory) / f"{subject_id}.json"
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ProfileError(f"no profile stored for {subject_id!r}") from None
        except (OSError, json.JSONDecodeError) as exc:
            raise ProfileError(f"cannot read profile {path}: {exc}") from exc
        return cls.from_json(data)


def default_k(exercise: Exercise, component: Component) -> int:
    """Sigma multiplier per exercise and component.

    Compensation always gets the looser 3-sigma band; ROM and smoothness
    use 2 sigma for E1 and E2 and 3 sigma for E3, which tolerates the wider
    variability of the seated cane motion.
    """
    exercise = Exercise(exercise)
    component = Component(component)
    if component is Component.COMPENSATION:
        return 3
    return 2 if exercise in (Exercise.E1, Exercise.E2) else 3


def fit_threshold(samples: Sequence[float], k: int,
                  direction: Direction) -> RuleStats:
    """Gaussian MLE over per-clip samples; threshold at mu +/- k*sigma."""
    if k not in ALLOWED_K:
        raise ConfigError(f"k must be one of {ALLOWED_K}, got {k}")
    arr = np.asarray(list(samples), dtype=np.float64)
    if arr.shape[0] < 2:
        raise InsufficientDataError(
            f"threshold tuning needs >= 2 samples, got {arr.shape[0]}")
    mu = float(arr.mean())
    sigma = float(arr.std())  # population form: this is the MLE
    if Direction(direction) is Direction.AT_MOST:
        tau = mu + k * sigma
    else:
        tau = mu - k * sigma
        if tau <= 0:
            logger.warning("at-least threshold fit gave %.6f; clamping", tau)
            tau = EPSILON
    return RuleStats(mu, sigma, float(tau), int(arr.shape[0]), int(k))


def _collect_samples(clips: Sequence[MotionClip], ruleset: RuleSet,
                     arm: Arm | None) -> dict[tuple[str, str], list[float]]:
    clips = list(clips)
    if len(clips) < 2:
        raise InsufficientDataError(
            f"tuning needs >= 2 unaffected clips, got {len(clips)}")
    for clip in clips:
        if clip.side is not Side.UNAFFECTED:
            raise ConfigError(
                "threshold tuning expects unaffected-side clips only")
    samples: dict[tuple[str, str], list[float]] = {}
    for clip in clips:
        inputs = clip_rule_inputs(smooth_clip(clip), arm)
        for rule in ruleset.select(clip.exercise):
            samples.setdefault((clip.exercise.value, rule.rule_id), []) \
                   .append(inputs[rule.rule_id].x)
    for (ex, rule_id), vals in samples.items():
        if len(vals) < 2:
            raise InsufficientDataError(
                f"exercise {ex} has only {len(vals)} clip(s); tuning needs >= 2")
    return samples


def tune_thresholds(subject_id: str, clips: Sequence[MotionClip], k: int,
                    ruleset: RuleSet = DEFAULT_RULESET,
                    arm: Arm | None = None) -> UserProfile:
    """Fit per-user thresholds from unaffected-side clips with one k.

    Each clip contributes one sample per applicable rule under its own
    exercise, so thresholds are personal to both the subject and the
    exercise.  Use :func:`build_profile` for the standard per-component k
    policy.
    """
    if k not in ALLOWED_K:
        raise ConfigError(f"k must be one of {ALLOWED_K}, got {k}")
    profile = UserProfile(subject_id)
    for (ex, rule_id), vals in _collect_samples(clips, ruleset, arm).items():
        rule = ruleset.by_id(rule_id)
        profile.entries[(ex, rule_id)] = fit_threshold(vals, k, rule.direction)
    return profile


def build_profile(subject_id: str, clips: Sequence[MotionClip],
                  ruleset: RuleSet = DEFAULT_RULESET,
                  arm: Arm | None = None) -> UserProfile:
    """Tune with the standard k policy (see :func:`default_k`)."""
    profile = UserProfile(subject_id)
    for (ex, rule_id), vals in _collect_samples(clips, ruleset, arm).items():
        rule = ruleset.by_id(rule_id)
        k = default_k(Exercise(ex), rule.component)
        profile.entries[(ex, rule_id)] = fit_threshold(vals, k, rule.direction)
    return profile
