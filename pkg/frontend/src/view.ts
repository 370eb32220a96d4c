// Pure view model for the operator console.
//
// Every server message folds into an immutable ConsoleView; the DOM
// layer renders whatever the latest view says. Because the service
// replays the complete event history on reconnect, the client resets
// the view whenever a connection opens and replays what arrives, so a
// rebuilt view after a drop equals the view an uninterrupted client
// would hold.

import type {
  CoachStateName,
  ControlType,
  EndSummary,
  ProgressMsg,
  ServerMessage,
  VerdictMsg,
} from "./protocol.js";

export type ConnectionPhase =
  | "idle"
  | "connecting"
  | "live"
  | "reconnecting"
  | "closed";

export interface FeedEntry {
  kind: string; // feedback kind, or "verdict" / "progress" / "error"
  text: string;
  rules: string[];
  corrective: boolean;
}

export interface ConsoleView {
  connection: ConnectionPhase;
  sessionState: CoachStateName | null;
  visited: CoachStateName[]; // order of first visits
  feed: FeedEntry[];
  verdicts: VerdictMsg[]; // verdicts of the most recent motion
  progress: ProgressMsg | null;
  correctiveCount: number;
  summary: EndSummary | null;
  lastError: string | null;
  ended: boolean;
}

export function initialView(): ConsoleView {
  return {
    connection: "idle",
    sessionState: null,
    visited: [],
    feed: [],
    verdicts: [],
    progress: null,
    correctiveCount: 0,
    summary: null,
    lastError: null,
    ended: false,
  };
}

export function reduceConnection(
  view: ConsoleView,
  phase: ConnectionPhase,
): ConsoleView {
  return { ...view, connection: phase };
}

/** Reset session-derived fields, keeping the connection phase. */
export function resetSession(view: ConsoleView): ConsoleView {
  return { ...initialView(), connection: view.connection };
}

export function reduceMessage(
  view: ConsoleView,
  msg: ServerMessage,
): ConsoleView {
  switch (msg.type) {
    case "state": {
      const visited = view.visited.includes(msg.name)
        ? view.visited
        : [...view.visited, msg.name];
      // a fresh motion starts a fresh verdict panel
      const verdicts =
        msg.name === "movement" && view.sessionState !== "movement"
          ? []
          : view.verdicts;
      return { ...view, sessionState: msg.name, visited, verdicts };
    }
    case "feedback": {
      const corrective = msg.kind === "corrective";
      const entry: FeedEntry = {
        kind: msg.kind,
        text: msg.text,
        rules: msg.rules,
        corrective,
      };
      return {
        ...view,
        feed: [...view.feed, entry],
        correctiveCount: view.correctiveCount + (corrective ? 1 : 0),
      };
    }
    case "verdict":
      return { ...view, verdicts: [...view.verdicts, msg] };
    case "progress":
      return { ...view, progress: msg };
    case "end":
      return { ...view, summary: msg.summary, ended: true };
    case "error":
      return { ...view, lastError: msg.message };
  }
}

export function reduceAll(
  view: ConsoleView,
  msgs: Iterable<ServerMessage>,
): ConsoleView {
  let out = view;
  for (const msg of msgs) {
    out = reduceMessage(out, msg);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Control gating: which operator buttons make sense in each state
// ---------------------------------------------------------------------------

const CONTROLS_BY_STATE: Partial<Record<CoachStateName, ControlType[]>> = {
  demonstration: ["demo_end", "demo_skip"],
  initial: ["ready"],
  notify: ["start_cue"],
  movement: ["rep_end"],
  feedback: ["rep_end"],
  correction: ["rep_end"],
};

export function availableControls(view: ConsoleView): ControlType[] {
  if (view.connection !== "live" || view.ended) {
    return [];
  }
  const base = view.sessionState
    ? (CONTROLS_BY_STATE[view.sessionState] ?? [])
    : [];
  // quitting is allowed anywhere before wrap-up
  if (view.sessionState && view.sessionState !== "wrap_up") {
    return [...base, "quit"];
  }
  return base;
}
