"""Coaching-session state machine and feedback phrasing.

The session is modeled as ten states.  Transitions are driven by a small
event vocabulary: user inputs (start, ready, quit), the start cue, and
outcomes of the per-frame assessment.  Some transitions pass through
intermediate states that only deliver output and advance on their own;
``step_fsm`` returns the whole visited path so the caller can emit one
message per state entered.

Unknown (state, event) pairs are ignored with a logged warning rather
than raised: a live session must not crash because an event arrived in
an unexpected state.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

from .errors import ConfigError
from .skeleton import Exercise

logger = logging.getLogger(__name__)


class CoachState(str, Enum):
    """The ten session states."""

    GREETING = "greeting_briefing"
    DEMONSTRATION = "demonstration"
    INITIAL = "initial"
    MOVEMENT = "movement"
    TERMINATE = "terminate"
    FEEDBACK = "feedback"
    NOTIFY = "notify"
    ENCOURAGE = "encourage"
    CORRECTION = "correction"
    WRAP_UP = "wrap_up"

    def __str__(self) -> str:
        return self.value


class CoachEvent(str, Enum):
    """Everything that can drive a transition."""

    SESSION_START = "session-start"
    DEMO_REQUEST = "demo-request"
    DEMO_SKIP = "demo-skip"
    DEMO_END = "demo-end"
    READY_CONFIRM = "ready-confirm"
    START_CUE = "start-cue"
    FRAME_ASSESSED = "frame-assessed"
    COMPENSATION_DETECTED = "compensation-detected"
    MOTION_COMPLETE = "motion-complete"
    REP_REMAINING = "rep-remaining"
    PRESCRIPTION_COMPLETE = "prescription-complete"
    USER_QUIT = "user-quit"

    def __str__(self) -> str:
        return self.value


S = CoachState
E = CoachEvent

# Each value is the path of states entered, in order.  Paths longer than
# one encode pass-through states that deliver output and move on without
# waiting for another event: completing a motion lands in Terminate,
# reports the verdict summary in Notify, then rests in Encourage.  A
# frame assessed during movement detours through Feedback and returns.
_TABLE: dict[tuple[CoachState, CoachEvent], tuple[CoachState, ...]] = {
    (S.GREETING, E.DEMO_REQUEST): (S.DEMONSTRATION,),
    (S.DEMONSTRATION, E.DEMO_SKIP): (S.INITIAL,),
    (S.DEMONSTRATION, E.DEMO_END): (S.INITIAL,),
    (S.INITIAL, E.DEMO_REQUEST): (S.DEMONSTRATION,),
    (S.INITIAL, E.READY_CONFIRM): (S.NOTIFY,),
    (S.NOTIFY, E.START_CUE): (S.MOVEMENT,),
    (S.MOVEMENT, E.FRAME_ASSESSED): (S.FEEDBACK, S.MOVEMENT),
    (S.MOVEMENT, E.COMPENSATION_DETECTED): (S.CORRECTION,),
    (S.FEEDBACK, E.FRAME_ASSESSED): (S.MOVEMENT,),
    (S.FEEDBACK, E.COMPENSATION_DETECTED): (S.CORRECTION,),
    (S.CORRECTION, E.FRAME_ASSESSED): (S.MOVEMENT,),
    (S.MOVEMENT, E.MOTION_COMPLETE): (S.TERMINATE, S.NOTIFY, S.ENCOURAGE),
    (S.CORRECTION, E.MOTION_COMPLETE): (S.TERMINATE, S.NOTIFY, S.ENCOURAGE),
    (S.ENCOURAGE, E.REP_REMAINING): (S.INITIAL,),
    (S.ENCOURAGE, E.PRESCRIPTION_COMPLETE): (S.WRAP_UP,),
}
# The quit edge exists from every state except the terminal one.
for _state in CoachState:
    if _state is not S.WRAP_UP:
        _TABLE[(_state, E.USER_QUIT)] = (S.WRAP_UP,)


@dataclass(frozen=True)
class FsmStep:
    """Result of feeding one event to the machine."""

    state: CoachState
    visited: tuple[CoachState, ...]

    @property
    def handled(self) -> bool:
        return bool(self.visited)


def step_fsm(state: CoachState, event: CoachEvent, *,
             demo_requested: bool = False) -> FsmStep:
    """Advance the machine by one event.

    ``demo_requested`` only matters for the session-start event, which
    branches on whether the user asked to see the motion demonstrated.
    Unhandled events leave the state unchanged and return an empty path.
    """
    state = CoachState(state)
    event = CoachEvent(event)
    if state is S.GREETING and event is E.SESSION_START:
        path = (S.DEMONSTRATION,) if demo_requested else (S.INITIAL,)
        return FsmStep(path[-1], path)
    path = _TABLE.get((state, event))
    if path is None:
        logger.warning("ignoring event %s in state %s", event, state)
        return FsmStep(state, ())
    return FsmStep(path[-1], path)


def transition_table() -> dict[tuple[CoachState, CoachEvent],
                               tuple[CoachState, ...]]:
    """Copy of the transition table, for audits and exhaustive checks."""
    table = dict(_TABLE)
    table[(S.GREETING, E.SESSION_START)] = (S.INITIAL,)
    return table


# ---------------------------------------------------------------------------
# Feedback phrasing
# ---------------------------------------------------------------------------

class FeedbackKind(str, Enum):
    CORRECTIVE = "corrective"
    SUMMARY = "summary"
    ENCOURAGEMENT = "encouragement"
    INSTRUCTION = "instruction"
    ALERT = "alert"

    def __str__(self) -> str:
        return self.value


# One phrase per rule id, lowercase; sentences are assembled below.
RULE_PHRASES: dict[str, str] = {
    "comp_head_x": "keep your head centered",
    "comp_head_y": "keep your head level",
    "comp_head_z": "keep your head straight",
    "comp_spine_x": "keep your back from leaning sideways",
    "comp_spine_y": "keep your torso upright",
    "comp_spine_z": "keep your back from leaning forward",
    "comp_shoulder_x": "keep your shoulder from pulling sideways",
    "comp_shoulder_y": "do not raise your shoulder",
    "comp_shoulder_z": "keep your shoulder from rolling forward",
    "rom_e1": "try to reach all the way to your mouth",
    "rom_e2": "try to raise your arm higher",
    "rom_e3": "try to extend your elbow further, reaching down past your knee",
    "smooth_x": "move your arm smoothly without shaking",
    "smooth_y": "move your arm smoothly without shaking",
    "smooth_z": "move your arm smoothly without shaking",
}

_GENERIC_PHRASE = "mind your movement form"

INSTRUCTIONS: dict[Exercise, str] = {
    Exercise.E1: "Bring your hand up to your mouth, as if taking a drink.",
    Exercise.E2: "Raise your arm forward, as if reaching for a light switch.",
    Exercise.E3: "Extend your elbow down and forward, as if pushing on a cane.",
}

ENCOURAGEMENTS: tuple[str, ...] = (
    "Great job, keep it up.",
    "Well done, you are making steady progress.",
    "Nice work, stay with it.",
)

_SUMMARY_PHRASES: dict[str, tuple[str, str]] = {
    # component -> (achieved phrase, missed phrase)
    "rom": ("full range of motion achieved", "range of motion fell short"),
    "smoothness": ("motion was smooth", "motion was shaky"),
    "compensation": ("posture stayed clean", "compensation was detected"),
}


def _sentence(phrases: Sequence[str]) -> str:
    # dedupe while keeping order; the three smoothness rules share a phrase
    seen: list[str] = []
    for p in phrases:
        if p not in seen:
            seen.append(p)
    if len(seen) == 1:
        body = seen[0]
    elif len(seen) == 2:
        body = f"{seen[0]} and {seen[1]}"
    else:
        body = ", ".join(seen[:-1]) + f" and {seen[-1]}"
    return body[0].upper() + body[1:] + "."


def feedback_text(rules: Sequence[str], kind: FeedbackKind | str,
                  exercise: Exercise | None = None, *,
                  results: Mapping[str, int] | None = None,
                  index: int = 0,
                  detail: str = "") -> str:
    """Deterministic feedback sentence for one event.

    Corrective text is assembled from per-rule phrases in the order
    given (callers pass rules worst-violation first).  Summary text
    reads out per-component results.  Instruction text names the goal
    of the prescribed exercise.
    """
    kind = FeedbackKind(kind)
    if kind is FeedbackKind.CORRECTIVE:
        if not rules:
            raise ConfigError("corrective feedback needs at least one rule")
        phrases = []
        for rid in rules:
            phrase = RULE_PHRASES.get(rid)
            if phrase is None:
                logger.warning("no phrase for rule %r, using generic", rid)
                phrase = _GENERIC_PHRASE
            phrases.append(phrase)
        return _sentence(phrases)
    if kind is FeedbackKind.INSTRUCTION:
        if exercise is None:
            raise ConfigError("instruction feedback needs an exercise")
        return INSTRUCTIONS[Exercise(exercise)]
    if kind is FeedbackKind.SUMMARY:
        if not results:
            return "Motion complete."
        phrases = [_SUMMARY_PHRASES[c][0 if bool(v) else 1]
                   for c, v in results.items() if c in _SUMMARY_PHRASES]
        return _sentence(phrases) if phrases else "Motion complete."
    if kind is FeedbackKind.ENCOURAGEMENT:
        return ENCOURAGEMENTS[index % len(ENCOURAGEMENTS)]
    return detail or "Something needs attention."
