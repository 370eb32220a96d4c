// Message guards and builders against captured wire samples.

import { describe, expect, it } from "vitest";

import {
  COACH_STATES,
  PROTOCOL_VERSION,
  encode,
  frameMessage,
  helloMessage,
  isEndMsg,
  isStateMsg,
  parsePrescription,
  parseServerMessage,
} from "../src/protocol.js";

// verbatim frames captured from a live service
const SAMPLES = [
  '{"name": "greeting_briefing", "type": "state"}',
  '{"kind": "instruction", "rules": [], "text": "Repetition 1 of 1: hand-to-mouth reach. Confirm when you are ready.", "type": "feedback"}',
  '{"kind": "alert", "rules": [], "text": "Monitoring is on. Begin on the start cue.", "type": "feedback"}',
  '{"component": "rom", "label": 1, "score": 1.0, "type": "verdict", "violated": []}',
  '{"exercise": "E1", "rep": 1, "total": 1, "type": "progress"}',
  '{"summary": {"completed": {"E1": 1}, "corrective_events": 0, "duration_s": 3.73, "frames_ignored": 0, "overruns": 0}, "type": "end"}',
  '{"message": "unknown message type \'bogus\'", "type": "error"}',
];

describe("parseServerMessage", () => {
  it("accepts every captured sample", () => {
    const types = SAMPLES.map((raw) => parseServerMessage(raw)?.type);
    expect(types).toEqual([
      "state",
      "feedback",
      "feedback",
      "verdict",
      "progress",
      "end",
      "error",
    ]);
  });

  it("accepts history frames that carry replay bookkeeping keys", () => {
    const raw =
      '{"name": "movement", "state": "movement", "t": 1.2, "type": "state"}';
    const msg = parseServerMessage(raw);
    expect(msg).not.toBeNull();
    expect(isStateMsg(msg)).toBe(true);
  });

  it("rejects junk", () => {
    expect(parseServerMessage("not json")).toBeNull();
    expect(parseServerMessage('"just a string"')).toBeNull();
    expect(parseServerMessage('{"type": "mystery"}')).toBeNull();
    expect(parseServerMessage('{"type": "state", "name": "warp_up"}')).toBeNull();
    expect(parseServerMessage('{"type": "feedback", "kind": "alert"}')).toBeNull();
    expect(parseServerMessage('{"type": "error"}')).toBeNull();
  });

  it("knows all ten coach states", () => {
    expect(COACH_STATES).toHaveLength(10);
    for (const name of COACH_STATES) {
      expect(isStateMsg({ type: "state", name })).toBe(true);
    }
  });
});

describe("builders", () => {
  it("hello carries version, session id and config", () => {
    const msg = helloMessage("abc-1", {
      subject_id: "S03",
      prescription: [["E1", 2]],
      arm: "left",
    });
    expect(JSON.parse(encode(msg))).toEqual({
      type: "hello",
      protocol_version: PROTOCOL_VERSION,
      session_id: "abc-1",
      config: {
        subject_id: "S03",
        prescription: [["E1", 2]],
        arm: "left",
      },
    });
  });

  it("frame message round-trips", () => {
    const joints = [[0.1, 0.2, 0.3]];
    const msg = frameMessage(1.5, joints);
    expect(JSON.parse(encode(msg))).toEqual({
      type: "frame",
      t: 1.5,
      joints,
    });
  });

  it("end guard requires a completed map", () => {
    expect(isEndMsg({ type: "end", summary: { completed: {} } })).toBe(true);
    expect(isEndMsg({ type: "end", summary: "done" })).toBe(false);
  });
});

describe("parsePrescription", () => {
  it("parses operator shorthand", () => {
    expect(parsePrescription("E1x2, E2x1")).toEqual([
      ["E1", 2],
      ["E2", 1],
    ]);
    expect(parsePrescription("e3 x 4")).toEqual([["E3", 4]]);
  });

  it("rejects unknown exercises and empty input", () => {
    expect(() => parsePrescription("E4x1")).toThrow(/bad prescription/);
    expect(() => parsePrescription("  ")).toThrow(/empty/);
  });
});
