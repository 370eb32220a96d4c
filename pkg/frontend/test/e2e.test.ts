// End-to-end: the console transport and reducers against a live
// coaching service replaying pre-recorded motion fixtures.
//
// Two single-clip replay services are spawned: one whose fixture has a
// seeded two-axis head posture defect and one whose fixture is clean.
// The operator flow (ready, start cue) must reach the Movement state
// within one round-trip, corrective feedback must appear for the
// defective fixture and never for the clean one, and a dropped
// connection must restore the complete feed on reconnect.

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { WebSocket as WsWebSocket } from "ws";

import type { WebSocketLike } from "../src/client.js";
import type { ArmSide, SessionWireConfig } from "../src/protocol.js";
import { ConsoleHarness } from "./harness.js";

const MAKE_FIXTURES = `
import sys
from rehabcoach import synth
from rehabcoach.skeleton import Exercise, Side, save_clip

clean_path, comp_path = sys.argv[1], sys.argv[2]
subject = synth.make_subject(3, seed=0)
save_clip(synth.generate_clip(subject, Exercise.E1, Side.AFFECTED,
                              seed=11, rep=0), clean_path)
defects = synth.DefectSpec(segments=(
    synth.CompSegment("head", "z", 0.45, 40, 81),
    synth.CompSegment("head", "y", 0.45, 40, 81)))
save_clip(synth.generate_clip(subject, Exercise.E1, Side.AFFECTED,
                              defects=defects, seed=12, rep=1), comp_path)
print(subject.arm_for(Side.AFFECTED).value)
`;

interface Service {
  proc: ChildProcess;
  url: string;
}

function startService(clipPath: string): Promise<Service> {
  return new Promise((resolve, reject) => {
    const proc = spawn(
      "python3",
      ["-m", "rehabcoach.cli", "serve", "--port", "0", "--replay", clipPath],
      { env: { ...process.env, PYTHONUNBUFFERED: "1" }, stdio: ["ignore", "pipe", "pipe"] },
    );
    let banner = "";
    proc.stdout?.on("data", (chunk: Buffer) => {
      banner += chunk.toString();
      const m = /listening on (ws:\/\/\S+)/.exec(banner);
      if (m) {
        resolve({ proc, url: m[1] });
      }
    });
    proc.on("exit", (code) =>
      reject(new Error(`service exited early with code ${code}`)),
    );
    setTimeout(() => reject(new Error("service did not start")), 30_000).unref();
  });
}

const nodeFactory = (url: string): WebSocketLike =>
  new WsWebSocket(url) as unknown as WebSocketLike;

describe("operator console against a live service", () => {
  let workDir: string;
  let arm: ArmSide;
  let cleanService: Service;
  let compService: Service;

  function config(): SessionWireConfig {
    return {
      subject_id: "S03",
      prescription: [["E1", 1]],
      arm,
    };
  }

  beforeAll(async () => {
    workDir = mkdtempSync(join(tmpdir(), "console-e2e-"));
    const cleanPath = join(workDir, "clean.jsonl");
    const compPath = join(workDir, "comp.jsonl");
    const gen = spawnSync("python3", ["-c", MAKE_FIXTURES, cleanPath, compPath], {
      encoding: "utf8",
    });
    if (gen.status !== 0) {
      throw new Error(`fixture generation failed: ${gen.stderr}`);
    }
    arm = gen.stdout.trim() as ArmSide;
    [cleanService, compService] = await Promise.all([
      startService(cleanPath),
      startService(compPath),
    ]);
  });

  afterAll(() => {
    cleanService?.proc.kill();
    compService?.proc.kill();
    rmSync(workDir, { recursive: true, force: true });
  });

  it("reaches Movement in one round-trip and flags the seeded defect", async () => {
    const harness = new ConsoleHarness(
      compService.url, "e2e-comp", config(), nodeFactory,
    );
    try {
      harness.connect();
      await harness.waitFor(
        () => harness.view.sessionState === "initial",
        "ready prompt",
      );
      harness.send("ready");
      await harness.waitFor(
        () => harness.view.sessionState === "notify",
        "monitoring alert",
      );

      const sentAt = harness.messages.length;
      harness.send("start_cue");
      await harness.waitFor(
        () => harness.view.visited.includes("movement"),
        "movement state",
      );
      // one round-trip: the very first state message after the start
      // cue is Movement, with nothing else sent by the operator
      const statesAfter = harness.messages
        .slice(sentAt)
        .filter((m) => m.type === "state");
      expect(statesAfter[0]).toEqual({ type: "state", name: "movement" });

      await harness.waitFor(() => harness.view.ended, "session end");
      expect(harness.view.correctiveCount).toBeGreaterThanOrEqual(1);
      const corrective = harness.view.feed.filter((e) => e.corrective);
      expect(corrective[0].text).toMatch(/head/);
      expect(harness.view.visited).toContain("correction");
      expect(harness.view.summary?.completed).toEqual({ E1: 1 });
    } finally {
      harness.stop();
    }
  });

  it("raises no corrective feedback for the clean fixture", async () => {
    const harness = new ConsoleHarness(
      cleanService.url, "e2e-clean", config(), nodeFactory,
    );
    try {
      harness.connect();
      await harness.waitFor(
        () => harness.view.sessionState === "initial",
        "ready prompt",
      );
      harness.send("ready");
      await harness.waitFor(
        () => harness.view.sessionState === "notify",
        "monitoring alert",
      );
      harness.send("start_cue");
      await harness.waitFor(() => harness.view.ended, "session end");

      expect(harness.view.correctiveCount).toBe(0);
      expect(harness.view.visited).not.toContain("correction");
      expect(harness.view.summary?.completed).toEqual({ E1: 1 });
      const labels = harness.view.verdicts.map((v) => [v.component, v.label]);
      expect(labels).toEqual([
        ["rom", 1],
        ["smoothness", 1],
        ["comp_head", 1],
        ["comp_spine", 1],
        ["comp_shoulder", 1],
      ]);
    } finally {
      harness.stop();
    }
  });

  it("restores the full feed after a dropped connection", async () => {
    const sockets: WsWebSocket[] = [];
    const trackingFactory = (url: string): WebSocketLike => {
      const socket = new WsWebSocket(url);
      sockets.push(socket);
      return socket as unknown as WebSocketLike;
    };
    const harness = new ConsoleHarness(
      compService.url, "e2e-resume", config(), trackingFactory,
    );
    try {
      harness.connect();
      await harness.waitFor(
        () => harness.view.sessionState === "initial",
        "ready prompt",
      );
      const feedBefore = harness.feedTexts();
      const visitedBefore = harness.view.visited;
      expect(feedBefore.length).toBeGreaterThan(0);

      sockets[sockets.length - 1].close();
      await harness.waitFor(() => harness.opens === 2, "reconnected");
      await harness.waitFor(
        () => harness.view.sessionState === "initial",
        "history replayed",
      );

      // the rebuilt view holds the complete pre-drop feed, in order
      expect(harness.feedTexts()).toEqual(feedBefore);
      expect(harness.view.visited).toEqual(visitedBefore);

      // the session continues where it left off
      harness.send("ready");
      await harness.waitFor(
        () => harness.view.sessionState === "notify",
        "monitoring alert",
      );
      harness.send("start_cue");
      await harness.waitFor(() => harness.view.ended, "session end");
      expect(harness.view.correctiveCount).toBeGreaterThanOrEqual(1);
      expect(harness.view.summary?.completed).toEqual({ E1: 1 });
      // the post-reconnect feed still begins with the original feed
      expect(harness.feedTexts().slice(0, feedBefore.length)).toEqual(feedBefore);
    } finally {
      harness.stop();
    }
  });
});
