// DOM wiring for the operator console page.
//
// One CoachClient per connected session; every server message reduces
// into the ConsoleView and the whole panel re-renders from that view.

import { CoachClient } from "./client.js";
import {
  COACH_STATES,
  parsePrescription,
  type ArmSide,
  type ControlType,
  type SessionWireConfig,
} from "./protocol.js";
import {
  availableControls,
  initialView,
  reduceConnection,
  reduceMessage,
  resetSession,
  type ConsoleView,
} from "./view.js";

const CONTROL_LABELS: Record<ControlType, string> = {
  ready: "Ready",
  start_cue: "Start cue",
  demo_end: "Demo done",
  demo_skip: "Skip demo",
  rep_end: "End motion",
  quit: "Quit session",
};

const STATE_LABELS: Record<string, string> = {
  greeting_briefing: "Greeting",
  demonstration: "Demo",
  initial: "Initial",
  notify: "Notify",
  movement: "Movement",
  feedback: "Feedback",
  correction: "Correction",
  terminate: "Terminate",
  encourage: "Encourage",
  wrap_up: "Wrap-up",
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

export function startApp(): void {
  let view: ConsoleView = initialView();
  let client: CoachClient | null = null;

  const feedEl = el<HTMLUListElement>("feed");
  const lampsEl = el<HTMLDivElement>("state-lamps");
  const controlsEl = el<HTMLDivElement>("controls");
  const verdictsEl = el<HTMLDivElement>("verdicts");
  const statusEl = el<HTMLSpanElement>("conn-status");
  const progressEl = el<HTMLSpanElement>("progress");
  const summaryEl = el<HTMLPreElement>("summary");
  const errorEl = el<HTMLDivElement>("error");

  for (const state of COACH_STATES) {
    const lamp = document.createElement("span");
    lamp.className = "lamp";
    lamp.dataset.state = state;
    lamp.textContent = STATE_LABELS[state] ?? state;
    lampsEl.appendChild(lamp);
  }

  function render(): void {
    statusEl.textContent = view.connection;
    statusEl.dataset.phase = view.connection;

    for (const lamp of lampsEl.querySelectorAll<HTMLElement>(".lamp")) {
      const name = lamp.dataset.state ?? "";
      lamp.classList.toggle("current", view.sessionState === name);
      lamp.classList.toggle(
        "visited",
        view.visited.includes(name as (typeof view.visited)[number]),
      );
    }

    controlsEl.replaceChildren();
    for (const control of availableControls(view)) {
      const btn = document.createElement("button");
      btn.textContent = CONTROL_LABELS[control];
      btn.onclick = () => client?.sendControl(control);
      controlsEl.appendChild(btn);
    }

    feedEl.replaceChildren();
    for (const entry of view.feed) {
      const li = document.createElement("li");
      li.className = entry.corrective ? "corrective" : entry.kind;
      li.textContent = entry.text;
      if (entry.rules.length > 0) {
        const small = document.createElement("small");
        small.textContent = ` [${entry.rules.join(", ")}]`;
        li.appendChild(small);
      }
      feedEl.appendChild(li);
    }
    feedEl.scrollTop = feedEl.scrollHeight;

    verdictsEl.replaceChildren();
    for (const v of view.verdicts) {
      const badge = document.createElement("span");
      badge.className = v.label === 1 ? "verdict pass" : "verdict fail";
      badge.textContent = `${v.component}: ${v.label === 1 ? "pass" : "fail"} (${v.score.toFixed(2)})`;
      badge.title = v.violated.join(", ");
      verdictsEl.appendChild(badge);
    }

    progressEl.textContent = view.progress
      ? `${view.progress.exercise} repetition ${view.progress.rep}/${view.progress.total}`
      : "";
    summaryEl.textContent = view.summary
      ? JSON.stringify(view.summary, null, 2)
      : "";
    errorEl.textContent = view.lastError ?? "";
  }

  function update(next: ConsoleView): void {
    view = next;
    render();
  }

  el<HTMLButtonElement>("connect").onclick = () => {
    const url = el<HTMLInputElement>("url").value.trim();
    const subjectId = el<HTMLInputElement>("subject").value.trim();
    const arm = el<HTMLSelectElement>("arm").value as ArmSide;
    const demo = el<HTMLInputElement>("demo").checked;
    let config: SessionWireConfig;
    try {
      config = {
        subject_id: subjectId,
        prescription: parsePrescription(
          el<HTMLInputElement>("prescription").value,
        ),
        arm,
        demo_requested: demo,
      };
    } catch (err) {
      update({ ...view, lastError: String(err) });
      return;
    }
    const sessionId =
      el<HTMLInputElement>("session-id").value.trim() ||
      `${subjectId}-${Date.now()}`;
    el<HTMLInputElement>("session-id").value = sessionId;

    client?.stop();
    client = new CoachClient({
      url,
      sessionId,
      config,
      onOpen: () => update(reduceConnection(resetSession(view), "live")),
      onMessage: (msg) => update(reduceMessage(view, msg)),
      onClose: (willRetry) =>
        update(reduceConnection(view, willRetry ? "reconnecting" : "closed")),
    });
    update(reduceConnection(view, "connecting"));
    client.connect();
  };

  el<HTMLButtonElement>("disconnect").onclick = () => {
    client?.stop();
    client = null;
    update(reduceConnection(view, "closed"));
  };

  render();
}

startApp();
