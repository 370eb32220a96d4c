// Wire types for the coaching session WebSocket protocol.
//
// The service speaks JSON text frames. The client opens with a hello
// carrying the protocol version, a session id and the session config;
// every later client message is a control event or a skeleton frame.
// Server messages are session events. When a client reconnects with a
// known session id the server first replays the whole logged history;
// replayed events carry two extra bookkeeping keys (`t`, `state`) that
// live events do not, so the reducers here ignore unknown keys.

export const PROTOCOL_VERSION = 1;

export type ExerciseCode = "E1" | "E2" | "E3";
export type ArmSide = "left" | "right";
export type Verbosity = "full" | "terse";

/** The ten coach states, by wire name. */
export const COACH_STATES = [
  "greeting_briefing",
  "demonstration",
  "initial",
  "movement",
  "terminate",
  "feedback",
  "notify",
  "encourage",
  "correction",
  "wrap_up",
] as const;

export type CoachStateName = (typeof COACH_STATES)[number];

export type FeedbackKind =
  | "corrective"
  | "summary"
  | "encouragement"
  | "instruction"
  | "alert";

// ---------------------------------------------------------------------------
// Server -> client messages
// ---------------------------------------------------------------------------

export interface StateMsg {
  type: "state";
  name: CoachStateName;
}

export interface FeedbackMsg {
  type: "feedback";
  kind: FeedbackKind;
  text: string;
  rules: string[];
}

export interface VerdictMsg {
  type: "verdict";
  component: string; // rom | smoothness | comp_head | comp_spine | comp_shoulder
  label: 0 | 1;
  score: number;
  violated: string[];
}

export interface ProgressMsg {
  type: "progress";
  exercise: ExerciseCode;
  rep: number;
  total: number;
}

export interface EndSummary {
  completed: Record<string, number>;
  corrective_events: number;
  overruns: number;
  frames_ignored: number;
  duration_s: number;
}

export interface EndMsg {
  type: "end";
  summary: EndSummary;
}

export interface ErrorMsg {
  type: "error";
  message: string;
}

export type ServerMessage =
  | StateMsg
  | FeedbackMsg
  | VerdictMsg
  | ProgressMsg
  | EndMsg
  | ErrorMsg;

// ---------------------------------------------------------------------------
// Type guards
// ---------------------------------------------------------------------------

function isRecord(x: unknown): x is Record<string, unknown> {
  return typeof x === "object" && x !== null && !Array.isArray(x);
}

export function isCoachStateName(x: unknown): x is CoachStateName {
  return typeof x === "string" && (COACH_STATES as readonly string[]).includes(x);
}

export function isStateMsg(x: unknown): x is StateMsg {
  return isRecord(x) && x.type === "state" && isCoachStateName(x.name);
}

export function isFeedbackMsg(x: unknown): x is FeedbackMsg {
  return (
    isRecord(x) &&
    x.type === "feedback" &&
    typeof x.kind === "string" &&
    typeof x.text === "string" &&
    Array.isArray(x.rules)
  );
}

export function isVerdictMsg(x: unknown): x is VerdictMsg {
  return (
    isRecord(x) &&
    x.type === "verdict" &&
    typeof x.component === "string" &&
    (x.label === 0 || x.label === 1) &&
    typeof x.score === "number" &&
    Array.isArray(x.violated)
  );
}

export function isProgressMsg(x: unknown): x is ProgressMsg {
  return (
    isRecord(x) &&
    x.type === "progress" &&
    typeof x.exercise === "string" &&
    typeof x.rep === "number" &&
    typeof x.total === "number"
  );
}

export function isEndMsg(x: unknown): x is EndMsg {
  return (
    isRecord(x) &&
    x.type === "end" &&
    isRecord(x.summary) &&
    isRecord((x.summary as Record<string, unknown>).completed)
  );
}

export function isErrorMsg(x: unknown): x is ErrorMsg {
  return isRecord(x) && x.type === "error" && typeof x.message === "string";
}

/**
 * Parse one raw text frame into a typed server message.
 * Returns null for frames that are not valid JSON objects or whose
 * type is unknown; the caller decides whether that is worth logging.
 */
export function parseServerMessage(raw: string): ServerMessage | null {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    return null;
  }
  if (isStateMsg(data)) return data;
  if (isFeedbackMsg(data)) return data;
  if (isVerdictMsg(data)) return data;
  if (isProgressMsg(data)) return data;
  if (isEndMsg(data)) return data;
  if (isErrorMsg(data)) return data;
  return null;
}

// ---------------------------------------------------------------------------
// Client -> server messages
// ---------------------------------------------------------------------------

export interface SessionWireConfig {
  subject_id: string;
  prescription: Array<[ExerciseCode, number]>;
  arm: ArmSide;
  v_f?: number;
  verbosity?: Verbosity;
  demo_requested?: boolean;
}

export interface HelloMsg {
  type: "hello";
  protocol_version: number;
  session_id: string;
  config: SessionWireConfig;
}

export type ControlType =
  | "ready"
  | "start_cue"
  | "demo_skip"
  | "demo_end"
  | "rep_end"
  | "quit";

export interface ControlMsg {
  type: ControlType;
}

export interface FrameMsg {
  type: "frame";
  t: number;
  joints: number[][];
}

export type ClientMessage = HelloMsg | ControlMsg | FrameMsg;

/** Parse operator shorthand like "E1x2, E2x1" into prescription pairs. */
export function parsePrescription(
  text: string,
): Array<[ExerciseCode, number]> {
  const out: Array<[ExerciseCode, number]> = [];
  for (const part of text.split(",")) {
    const item = part.trim();
    if (!item) continue;
    const m = /^(E[123])\s*x\s*(\d+)$/i.exec(item);
    if (!m) {
      throw new Error(`bad prescription item: ${item}`);
    }
    out.push([m[1].toUpperCase() as ExerciseCode, parseInt(m[2], 10)]);
  }
  if (out.length === 0) {
    throw new Error("prescription is empty");
  }
  return out;
}

export function helloMessage(
  sessionId: string,
  config: SessionWireConfig,
): HelloMsg {
  return {
    type: "hello",
    protocol_version: PROTOCOL_VERSION,
    session_id: sessionId,
    config,
  };
}

export function controlMessage(type: ControlType): ControlMsg {
  return { type };
}

export function frameMessage(t: number, joints: number[][]): FrameMsg {
  return { type: "frame", t, joints };
}

export function encode(msg: ClientMessage): string {
  return JSON.stringify(msg);
}
